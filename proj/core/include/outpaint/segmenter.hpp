#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <torch/types.h>

#include "outpaint/layout_data.hpp"

namespace outpaint {

/// Produces a semantic layout for an image. Implementations report whether
/// predict() may be called concurrently on the same instance.
///
/// The file-backed implementations look the layout up by source id. When the
/// pixels are narrower than the stored map the left-most columns are returned,
/// which is what segmenting the cropped image of a right-mask request yields.
class Segmenter {
 public:
  virtual ~Segmenter() = default;

  /// Failures surface as SegmentationFailed.
  virtual SemanticLayout predict(const torch::Tensor& pixels,
                                 std::string_view source_id) const = 0;
  virtual std::int64_t num_classes() const = 0;
  virtual bool reentrant() const = 0;
  virtual std::string id() const = 0;
};

/// Every pixel gets the same class. Reentrant.
class ConstantSegmenter final : public Segmenter {
 public:
  explicit ConstantSegmenter(std::int64_t num_classes, std::int64_t label = 0);

  SemanticLayout predict(const torch::Tensor& pixels, std::string_view source_id) const override;
  std::int64_t num_classes() const override { return num_classes_; }
  bool reentrant() const override { return true; }
  std::string id() const override;

 private:
  std::int64_t num_classes_;
  std::int64_t label_;
};

/// Shared lookup for segmenters backed by label-map files. Reentrant: files are
/// read on every call and nothing is cached.
class LabelFileSegmenter : public Segmenter {
 public:
  SemanticLayout predict(const torch::Tensor& pixels, std::string_view source_id) const override;
  std::int64_t num_classes() const override { return num_classes_; }
  bool reentrant() const override { return true; }

 protected:
  explicit LabelFileSegmenter(std::int64_t num_classes);
  virtual std::filesystem::path locate(std::string_view source_id) const = 0;

 private:
  std::int64_t num_classes_;
};

/// Returns the dataset's ground-truth annotation. Desk-scale stand-in only.
class AnnotationOracleSegmenter final : public LabelFileSegmenter {
 public:
  AnnotationOracleSegmenter(std::map<std::string, std::filesystem::path> annotations,
                            std::int64_t num_classes);
  std::string id() const override { return "annotation-oracle"; }

 protected:
  std::filesystem::path locate(std::string_view source_id) const override;

 private:
  std::map<std::string, std::filesystem::path, std::less<>> annotations_;
};

/// Adapter for an external segmentation model whose predictions were written
/// ahead of time as <directory>/<source_id>.png label maps.
class PrecomputedLayoutSegmenter final : public LabelFileSegmenter {
 public:
  PrecomputedLayoutSegmenter(std::filesystem::path directory, std::int64_t num_classes);
  std::string id() const override;

 protected:
  std::filesystem::path locate(std::string_view source_id) const override;

 private:
  std::filesystem::path directory_;
};

}  // namespace outpaint
