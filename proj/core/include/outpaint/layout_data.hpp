#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <torch/types.h>

namespace outpaint {

/// Per-pixel class-label grid. Labels are int64 [H, W], each in [0, C).
class SemanticLayout {
 public:
  /// Throws InvalidArgument if labels are not a 2-D integer grid inside [0, C).
  SemanticLayout(torch::Tensor labels, std::int64_t num_classes);

  static SemanticLayout filled(std::int64_t height, std::int64_t width,
                               std::int64_t num_classes, std::int64_t label = 0);

  const torch::Tensor& labels() const { return labels_; }
  std::int64_t num_classes() const { return num_classes_; }
  std::int64_t height() const { return labels_.size(0); }
  std::int64_t width() const { return labels_.size(1); }

  bool operator==(const SemanticLayout& other) const;

 private:
  torch::Tensor labels_;
  std::int64_t num_classes_;
};

/// Per-pixel {0,1} grid, 1 = known pixels. Stored as a bool [H, W] tensor.
class BinaryMask {
 public:
  /// Accepts bool or numeric [H, W]; numeric values must be 0 or 1.
  explicit BinaryMask(torch::Tensor values);

  static BinaryMask ones(std::int64_t height, std::int64_t width);
  static BinaryMask zeros(std::int64_t height, std::int64_t width);

  const torch::Tensor& values() const { return values_; }
  /// float32 [1, H, W], ready to concatenate with network inputs.
  torch::Tensor as_plane() const;
  std::int64_t height() const { return values_.size(0); }
  std::int64_t width() const { return values_.size(1); }
  /// True when every row is a run of 1s followed by a run of 0s.
  bool is_right_mask() const;
  /// Number of leading known columns of a right mask.
  std::int64_t known_columns() const;

  bool operator==(const BinaryMask& other) const;

 private:
  torch::Tensor values_;
};

/// Image with its layout and mask. Pixels are float32 [3, H, W] in [-1, 1].
struct ImageSample {
  torch::Tensor pixels;
  SemanticLayout layout;
  BinaryMask mask;
  std::string source_id;

  /// Throws InvalidArgument on non-finite or out-of-range pixels or on
  /// spatial mismatch between pixels, layout and mask.
  void validate() const;
  std::int64_t height() const { return pixels.size(1); }
  std::int64_t width() const { return pixels.size(2); }
};

/// One-hot layout planes zeroed outside the known region.
struct MaskedLayout {
  torch::Tensor planes;  // float32 [C, H, W]
  BinaryMask validity;
};

struct MaskedSample {
  torch::Tensor pixels;  // pixels * mask
  MaskedLayout layout;
};

/// float32 [C, H, W] with exactly one 1 per pixel.
torch::Tensor one_hot(const SemanticLayout& layout);
/// Batched variant: int64 [B, H, W] -> float32 [B, C, H, W].
torch::Tensor one_hot(const torch::Tensor& labels, std::int64_t num_classes);
/// Inverse of one_hot on [C, H, W] planes; ties resolve to the lowest class.
SemanticLayout argmax_layout(const torch::Tensor& planes);

/// Known columns [0, round(width * (1 - masked_fraction))), zero elsewhere.
BinaryMask make_right_mask(std::int64_t height, std::int64_t width, double masked_fraction);

MaskedSample apply_mask(const ImageSample& sample);
/// Tensor-level masking used by apply_mask; pixels [3,H,W], planes [C,H,W].
MaskedSample mask_tensors(const torch::Tensor& pixels, const torch::Tensor& planes,
                          const BinaryMask& mask);

struct AugmentOptions {
  std::int64_t resize = 286;
  std::int64_t crop = 256;
  double flip_probability = 0.5;
};

/// Random choices drawn for one augment() call.
struct AugmentPlan {
  std::int64_t crop_top = 0;
  std::int64_t crop_left = 0;
  bool flip = false;
};

AugmentPlan draw_augment_plan(std::uint64_t seed, const AugmentOptions& options = {});
/// Resize (bilinear pixels, nearest layout/mask), random crop, random flip.
/// A pure function of (sample, seed, options).
ImageSample augment(const ImageSample& sample, std::uint64_t seed,
                    const AugmentOptions& options = {});
ImageSample apply_plan(const ImageSample& sample, const AugmentPlan& plan,
                       const AugmentOptions& options);

ImageSample resize(const ImageSample& sample, std::int64_t height, std::int64_t width);
ImageSample crop(const ImageSample& sample, std::int64_t top, std::int64_t left,
                 std::int64_t height, std::int64_t width);
ImageSample hflip(const ImageSample& sample);

/// Splits a H x 2H sample at the middle column; the left half is mirrored so
/// that both halves extend rightward.
std::pair<ImageSample, ImageSample> cityscapes_split(const ImageSample& sample);
/// Inverse of cityscapes_split.
ImageSample cityscapes_merge(const ImageSample& left_flipped, const ImageSample& right);

}  // namespace outpaint
