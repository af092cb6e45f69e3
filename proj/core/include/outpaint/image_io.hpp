#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <torch/types.h>

namespace outpaint {

// Pixel tensors are float32 [3, H, W] in [-1, 1]. Eight-bit raster values map
// as v -> v / 127.5 - 1 on read and x -> round((x + 1) * 127.5) on write.

torch::Tensor decode_rgb_png(std::string_view bytes);
std::string encode_rgb_png(const torch::Tensor& pixels);
torch::Tensor read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& pixels);

/// RGB uint8 [H, W, 3] raster, used for palette-coloured layouts and grids.
std::string encode_rgb8_png(const torch::Tensor& rgb8);
void write_rgb8_png(const std::filesystem::path& path, const torch::Tensor& rgb8);

// Label maps are single-channel rasters whose value is the class index:
// 8- or 16-bit grayscale, or palette-indexed PNGs (the index is the label).
// Tensors are int64 [H, W].

torch::Tensor decode_label_png(std::string_view bytes);
/// Chooses 8-bit depth when every label fits, 16-bit otherwise.
std::string encode_label_png(const torch::Tensor& labels);
torch::Tensor read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace outpaint

namespace outpaint {

/// float [3, H, W] in [-1, 1] -> uint8 [H, W, 3].
torch::Tensor to_rgb8(const torch::Tensor& pixels);
/// uint8 [H, W, 3] -> float [3, H, W] in [-1, 1].
torch::Tensor from_rgb8(const torch::Tensor& rgb8);

}  // namespace outpaint
