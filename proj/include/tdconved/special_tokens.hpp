#pragma once

#include <cstddef>

namespace tdconved {

using TokenId = std::size_t;

// Reserved vocabulary slots.
inline constexpr TokenId kPadToken = 0;    // <p>
inline constexpr TokenId kStartToken = 1;  // <s>
inline constexpr TokenId kEndToken = 2;    // <e>
inline constexpr TokenId kUnkToken = 3;    // <unk>
inline constexpr std::size_t kNumReserved = 4;

}  // namespace tdconved
