#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <torch/types.h>

#include "outpaint/layout_data.hpp"
#include "outpaint/networks.hpp"
#include "outpaint/profile.hpp"
#include "outpaint/segmenter.hpp"

namespace outpaint {

/// Stage 1: extends a masked layout. Inputs are batched network tensors
/// (I_masked [B,3,H,W], S_masked one-hot [B,C,H,W], M [B,1,H,W]); returns
/// layout logits [B,C,H,W].
class LayoutExtender {
 public:
  virtual ~LayoutExtender() = default;
  virtual torch::Tensor extend(const torch::Tensor& masked_image,
                               const torch::Tensor& masked_layout,
                               const torch::Tensor& mask) const = 0;
  virtual std::int64_t num_classes() const = 0;
  virtual std::string fingerprint() const = 0;
};

/// Stage 2: synthesises I_gen [B,3,H,W] from I_masked, a full one-hot layout
/// and the mask.
class ImageSynthesizer {
 public:
  virtual ~ImageSynthesizer() = default;
  virtual torch::Tensor synthesize(const torch::Tensor& masked_image,
                                   const torch::Tensor& layout,
                                   const torch::Tensor& mask) const = 0;
  virtual std::int64_t num_classes() const = 0;
  virtual std::string fingerprint() const = 0;
};

/// G_seg in eval mode. Forwards run without autograd and never mutate the
/// network, so one instance serves concurrent requests.
class NetworkLayoutExtender final : public LayoutExtender {
 public:
  explicit NetworkLayoutExtender(GeneratorSeg generator);
  torch::Tensor extend(const torch::Tensor& masked_image, const torch::Tensor& masked_layout,
                       const torch::Tensor& mask) const override;
  std::int64_t num_classes() const override;
  std::string fingerprint() const override { return fingerprint_; }

 private:
  GeneratorSeg generator_;
  std::string fingerprint_;
};

/// G_img in eval mode; same concurrency contract as NetworkLayoutExtender.
class NetworkImageSynthesizer final : public ImageSynthesizer {
 public:
  explicit NetworkImageSynthesizer(GeneratorImg generator);
  torch::Tensor synthesize(const torch::Tensor& masked_image, const torch::Tensor& layout,
                           const torch::Tensor& mask) const override;
  std::int64_t num_classes() const override;
  std::string fingerprint() const override { return fingerprint_; }

 private:
  GeneratorImg generator_;
  std::string fingerprint_;
};

/// Rebuilds the generator described by a stage-1 trainer checkpoint and loads
/// its weights. Throws CheckpointNotFound / CheckpointMismatch.
std::shared_ptr<NetworkLayoutExtender> load_layout_extender(const std::filesystem::path& path);
std::shared_ptr<NetworkImageSynthesizer> load_image_synthesizer(const std::filesystem::path& path);

struct OutpaintModels {
  std::shared_ptr<const LayoutExtender> layout;
  std::shared_ptr<const ImageSynthesizer> image;
  std::shared_ptr<const Segmenter> segmenter;
  DatasetProfile profile;

  /// Throws CheckpointMismatch when the stages disagree on the class count.
  void validate() const;
  /// Identifies the loaded weight pair.
  std::string fingerprint() const;
};

struct OutpaintRequest {
  /// Full-size canvas [3, H, W] in [-1, 1]; the extension region is masked.
  torch::Tensor image;
  double extension_fraction = 0.25;
  /// Overrides the right mask derived from extension_fraction.
  std::optional<BinaryMask> mask;
  /// Layout of the canvas; only its known region is used. When absent the
  /// segmenter runs on the cropped (known) part.
  std::optional<SemanticLayout> layout;
  std::string source_id;

  /// Pads a cropped image with zeros on the right so that the padding is
  /// `fraction` of the result width.
  static OutpaintRequest from_cropped(const torch::Tensor& cropped, double fraction,
                                      std::string source_id = {});
  /// Fractions other than 0.25 and 0.5 are outside the evaluated protocol.
  bool out_of_distribution() const;
  BinaryMask resolved_mask() const;
};

struct OutpaintResult {
  torch::Tensor image;          // I_out [3, H, W]
  SemanticLayout layout;        // S_out
  torch::Tensor masked_layout;  // S_masked one-hot [C, H, W]
  BinaryMask mask;
  double stage1_ms = 0.0;
  double stage2_ms = 0.0;
  double total_ms = 0.0;
};

/// Segment, extend the layout, composite, synthesise, composite.
OutpaintResult outpaint(const OutpaintRequest& request, const OutpaintModels& models);

/// Stage 2 only, conditioned on `edited_layout`. Throws InvalidArgument when
/// its shape or class range does not match; nothing is computed in that case.
OutpaintResult regenerate_with_layout(const OutpaintRequest& request,
                                      const SemanticLayout& edited_layout,
                                      const OutpaintModels& models);

/// Split a 1:2 image at the middle, outpaint both halves (the mirrored left
/// half extends to the left border), and merge. `layout`, when given, is the
/// full 1:2 layout.
OutpaintResult outpaint_cityscapes(const torch::Tensor& image, double extension_fraction,
                                   const OutpaintModels& models,
                                   const std::optional<SemanticLayout>& layout = std::nullopt,
                                   const std::string& source_id = {});

}  // namespace outpaint
