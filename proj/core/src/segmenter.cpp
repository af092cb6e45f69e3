#include "outpaint/segmenter.hpp"

#include <torch/torch.h>

#include "outpaint/errors.hpp"
#include "outpaint/image_io.hpp"

namespace outpaint {
namespace {

void check_pixels(const torch::Tensor& pixels) {
  if (pixels.dim() != 3 || pixels.size(0) != 3)
    throw SegmentationFailed("segmenter input must be [3, H, W]");
}

}  // namespace

ConstantSegmenter::ConstantSegmenter(std::int64_t num_classes, std::int64_t label)
    : num_classes_(num_classes), label_(label) {
  if (num_classes <= 0 || label < 0 || label >= num_classes)
    throw InvalidArgument("constant segmenter label outside [0, num_classes)");
}

SemanticLayout ConstantSegmenter::predict(const torch::Tensor& pixels, std::string_view) const {
  check_pixels(pixels);
  return SemanticLayout::filled(pixels.size(1), pixels.size(2), num_classes_, label_);
}

std::string ConstantSegmenter::id() const { return "constant-" + std::to_string(label_); }

LabelFileSegmenter::LabelFileSegmenter(std::int64_t num_classes) : num_classes_(num_classes) {
  if (num_classes <= 0) throw InvalidArgument("num_classes must be positive");
}

SemanticLayout LabelFileSegmenter::predict(const torch::Tensor& pixels,
                                           std::string_view source_id) const {
  check_pixels(pixels);
  const auto path = locate(source_id);
  torch::Tensor labels;
  try {
    labels = read_label_png(path);
  } catch (const std::exception& e) {
    throw SegmentationFailed(id() + ": cannot read layout for '" + std::string(source_id) +
                             "': " + e.what());
  }
  const auto height = pixels.size(1);
  const auto width = pixels.size(2);
  if (labels.size(0) != height || labels.size(1) < width)
    throw SegmentationFailed(id() + ": stored layout for '" + std::string(source_id) +
                             "' does not cover a " + std::to_string(height) + "x" +
                             std::to_string(width) + " image");
  labels = labels.slice(1, 0, width);
  try {
    return SemanticLayout(labels, num_classes_);
  } catch (const InvalidArgument& e) {
    throw SegmentationFailed(id() + ": " + e.what());
  }
}

AnnotationOracleSegmenter::AnnotationOracleSegmenter(
    std::map<std::string, std::filesystem::path> annotations, std::int64_t num_classes)
    : LabelFileSegmenter(num_classes), annotations_(annotations.begin(), annotations.end()) {}

std::filesystem::path AnnotationOracleSegmenter::locate(std::string_view source_id) const {
  auto it = annotations_.find(source_id);
  if (it == annotations_.end())
    throw SegmentationFailed("annotation-oracle: no annotation for '" + std::string(source_id) +
                             "'");
  return it->second;
}

PrecomputedLayoutSegmenter::PrecomputedLayoutSegmenter(std::filesystem::path directory,
                                                       std::int64_t num_classes)
    : LabelFileSegmenter(num_classes), directory_(std::move(directory)) {}

std::string PrecomputedLayoutSegmenter::id() const {
  return "precomputed:" + directory_.string();
}

std::filesystem::path PrecomputedLayoutSegmenter::locate(std::string_view source_id) const {
  if (source_id.empty() || source_id.find('/') != std::string_view::npos ||
      source_id.find("..") != std::string_view::npos)
    throw SegmentationFailed("precomputed: invalid source id '" + std::string(source_id) + "'");
  return directory_ / (std::string(source_id) + ".png");
}

}  // namespace outpaint
