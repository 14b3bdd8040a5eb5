#pragma once

#include <cstddef>
#include <vector>

#include "tdconved/ops.hpp"
#include "tdconved/tdconv.hpp"

namespace tdconved {

struct EncoderParams {
  Linear input_proj;                     // D_v -> D_r
  std::vector<DeformConvParams> blocks;  // empty only for the mean-pool variant

  std::size_t feature_dim() const { return input_proj.in_dim(); }
  std::size_t state_dim() const { return input_proj.out_dim(); }
};

EncoderParams make_encoder(std::size_t feature_dim, std::size_t state_dim, std::size_t kernel_size,
                           std::size_t num_blocks, Rng& rng);

struct EncoderCache {
  Tensor features;                   // [N_v, D_v]
  std::vector<Tensor> block_inputs;  // input of every block
  std::vector<DeformConvCache> blocks;
};

/// Context vectors z [N_v, D_r]: project every feature row, then apply the
/// deformable blocks in order.
Tensor encode(const Tensor& features, const EncoderParams& params, EncoderCache* cache = nullptr);

/// Backward of encode given dz; accumulates into `grads`. The gradient with
/// respect to the features is not needed and is not computed.
void encode_backward(const EncoderParams& params, const EncoderCache& cache, const Tensor& dz,
                     EncoderParams& grads);

/// Arithmetic mean of the rows of z.
std::vector<double> mean_pool(const Tensor& z);
/// dz[i] += dmean / N_v for every row.
void mean_pool_backward(std::span<const double> dmean, Tensor& dz);

}  // namespace tdconved
