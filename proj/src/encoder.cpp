#include "tdconved/encoder.hpp"

#include "tdconved/errors.hpp"

namespace tdconved {

EncoderParams make_encoder(std::size_t feature_dim, std::size_t state_dim, std::size_t kernel_size,
                           std::size_t num_blocks, Rng& rng) {
  EncoderParams p;
  p.input_proj = make_linear(state_dim, feature_dim, rng);
  for (std::size_t b = 0; b < num_blocks; ++b) p.blocks.push_back(make_deform_conv(state_dim, kernel_size, rng));
  return p;
}

Tensor encode(const Tensor& features, const EncoderParams& params, EncoderCache* cache) {
  if (features.rank() != 2 || features.cols() != params.feature_dim()) {
    throw ShapeError("encode: features " + shape_to_string(features.shape()) + " but encoder expects D_v=" +
                     std::to_string(params.feature_dim()));
  }
  Tensor x = affine_rows(params.input_proj, features);
  if (cache) {
    cache->features = features;
    cache->block_inputs.clear();
    cache->blocks.assign(params.blocks.size(), {});
  }
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    if (cache) cache->block_inputs.push_back(x);
    x = deform_conv_forward(x, params.blocks[b], cache ? &cache->blocks[b] : nullptr);
  }
  return x;
}

void encode_backward(const EncoderParams& params, const EncoderCache& cache, const Tensor& dz,
                     EncoderParams& grads) {
  Tensor grad = dz;
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    const Tensor& input = cache.block_inputs[b];
    Tensor dinput(input.shape());
    deform_conv_backward(input, params.blocks[b], cache.blocks[b], grad, dinput, grads.blocks[b]);
    grad = std::move(dinput);
  }
  affine_rows_backward(params.input_proj, cache.features, grad, nullptr, grads.input_proj);
}

std::vector<double> mean_pool(const Tensor& z) {
  if (z.empty() || z.rank() != 2) throw ContractError("mean_pool: needs at least one context vector");
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) axpy(1.0, z.row(i), mean);
  for (double& m : mean) m /= static_cast<double>(n);
  return mean;
}

void mean_pool_backward(std::span<const double> dmean, Tensor& dz) {
  const double scale = 1.0 / static_cast<double>(dz.rows());
  for (std::size_t i = 0; i < dz.rows(); ++i) axpy(scale, dmean, dz.row(i));
}

}  // namespace tdconved
