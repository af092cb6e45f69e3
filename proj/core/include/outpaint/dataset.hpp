#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "outpaint/layout_data.hpp"
#include "outpaint/profile.hpp"
#include "outpaint/segmenter.hpp"

namespace outpaint {

/// One manifest line: `image_path layout_path split`, whitespace separated.
/// Relative paths resolve against the manifest's directory; `#` starts a
/// comment. The source id is the image file stem.
struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path layout;
  std::string split;
  std::string source_id;
};

/// Throws DatasetNotFound when the file is missing, InvalidArgument on a
/// malformed record.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Network-ready batch. Mask planes are float {0,1}; layouts one-hot.
struct OutpaintBatch {
  torch::Tensor image;                 // [B, 3, H, W], I_orig
  torch::Tensor masked_image;          // [B, 3, H, W], I_masked
  torch::Tensor mask;                  // [B, 1, H, W], M
  torch::Tensor labels;                // [B, H, W] int64, S_orig
  torch::Tensor layout_onehot;         // [B, C, H, W], one_hot(S_orig)
  torch::Tensor masked_layout_onehot;  // [B, C, H, W], S_masked
  std::vector<std::string> source_ids;

  std::int64_t size() const { return image.size(0); }
};

/// Samples listed in a manifest split, with layouts from a segmenter. Images
/// are decoded on demand.
class OutpaintDataset {
 public:
  OutpaintDataset(std::vector<ManifestEntry> entries, std::shared_ptr<const Segmenter> segmenter);

  /// Loads `split` from the manifest and segments with the annotation oracle.
  static OutpaintDataset from_manifest(const std::filesystem::path& manifest,
                                       const std::string& split, std::int64_t num_classes);

  std::size_t size() const { return entries_.size(); }
  std::int64_t num_classes() const { return segmenter_->num_classes(); }
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const Segmenter& segmenter() const { return *segmenter_; }

  /// Sample with an all-ones mask.
  ImageSample sample(std::size_t index) const;

 private:
  std::vector<ManifestEntry> entries_;
  std::shared_ptr<const Segmenter> segmenter_;
};

struct BatchOptions {
  double mask_fraction = 0.25;
  /// Augmentation applied per sample when set; seeds come from the caller.
  std::optional<AugmentOptions> augment;
};

/// Builds a batch: optional augmentation with `seeds[i]`, then the right mask,
/// then masking. S_masked is the masked S_orig.
OutpaintBatch make_batch(const std::vector<ImageSample>& samples,
                         const std::vector<std::uint64_t>& seeds, const BatchOptions& options);

/// Writes the synthetic shapes dataset (toy profile classes) under `directory`:
/// images/, layouts/ and manifest.txt. Deterministic in `seed`.
void write_toy_dataset(const std::filesystem::path& directory, std::int64_t size,
                       std::int64_t train_count, std::int64_t val_count, std::uint64_t seed);

/// Draws one synthetic scene: sky/ground split plus coloured shapes.
ImageSample make_toy_sample(std::int64_t size, std::uint64_t seed, const std::string& source_id);

}  // namespace outpaint
