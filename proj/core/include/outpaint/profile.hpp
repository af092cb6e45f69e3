#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/types.h>

namespace outpaint {

using Rgb = std::array<std::uint8_t, 3>;

/// Class count and display palette of a dataset.
struct DatasetProfile {
  std::string name;
  std::int64_t num_classes = 0;
  std::vector<Rgb> palette;

  /// "ade20k" (150 classes), "cityscapes" (34), "toy" (6).
  static DatasetProfile by_name(std::string_view name);
  nlohmann::json palette_json() const;
};

/// Deterministic bit-interleaved colour map (the PASCAL VOC scheme).
std::vector<Rgb> make_palette(std::int64_t num_classes);

/// int64 [H, W] labels -> uint8 [H, W, 3] colours.
torch::Tensor colorize(const torch::Tensor& labels, const std::vector<Rgb>& palette);

}  // namespace outpaint
