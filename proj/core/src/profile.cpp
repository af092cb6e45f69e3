#include "outpaint/profile.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "outpaint/errors.hpp"

namespace outpaint {

std::vector<Rgb> make_palette(std::int64_t num_classes) {
  std::vector<Rgb> palette;
  palette.reserve(static_cast<std::size_t>(num_classes));
  for (std::int64_t label = 0; label < num_classes; ++label) {
    std::uint8_t r = 0, g = 0, b = 0;
    auto c = label;
    for (int shift = 7; shift >= 0 && c > 0; --shift) {
      r |= static_cast<std::uint8_t>((c & 1) << shift);
      g |= static_cast<std::uint8_t>(((c >> 1) & 1) << shift);
      b |= static_cast<std::uint8_t>(((c >> 2) & 1) << shift);
      c >>= 3;
    }
    palette.push_back({r, g, b});
  }
  return palette;
}

DatasetProfile DatasetProfile::by_name(std::string_view name) {
  auto make = [](std::string n, std::int64_t classes) {
    return DatasetProfile{std::move(n), classes, make_palette(classes)};
  };
  if (name == "ade20k") return make("ade20k", 150);
  if (name == "cityscapes") return make("cityscapes", 34);
  if (name == "toy") return make("toy", 6);
  throw InvalidArgument("unknown dataset profile '" + std::string(name) + "'");
}

nlohmann::json DatasetProfile::palette_json() const {
  nlohmann::json colours = nlohmann::json::array();
  for (const auto& rgb : palette) colours.push_back({rgb[0], rgb[1], rgb[2]});
  return {{"dataset", name}, {"num_classes", num_classes}, {"palette", colours}};
}

torch::Tensor colorize(const torch::Tensor& labels, const std::vector<Rgb>& palette) {
  if (labels.dim() != 2) throw InvalidArgument("labels must be [H, W]");
  auto table = torch::empty({static_cast<std::int64_t>(palette.size()), 3}, torch::kUInt8);
  for (std::size_t i = 0; i < palette.size(); ++i)
    for (int c = 0; c < 3; ++c) table[static_cast<std::int64_t>(i)][c] = palette[i][c];
  auto flat = labels.to(torch::kLong).reshape({-1});
  if (flat.numel() > 0 && flat.max().item<std::int64_t>() >= table.size(0))
    throw InvalidArgument("label outside the palette");
  return table.index_select(0, flat).reshape({labels.size(0), labels.size(1), 3});
}

}  // namespace outpaint
