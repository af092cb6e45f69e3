#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include <torch/types.h>

namespace outpaint {

/// 64-bit FNV-1a over raw bytes; stable across platforms and runs.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

/// Lower-case zero-padded 16-digit hex.
std::string to_hex(std::uint64_t value);

/// Hash of a tensor's dtype, shape and contiguous element bytes.
std::string tensor_digest(const torch::Tensor& tensor);

std::string base64_encode(std::string_view bytes);
/// Throws InvalidArgument on characters outside the standard alphabet.
std::string base64_decode(std::string_view text);

}  // namespace outpaint
