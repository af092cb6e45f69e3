#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>
#include <torch/script.h>
#include <torch/types.h>

#include "outpaint/layout_data.hpp"
#include "outpaint/profile.hpp"

namespace outpaint {

/// Gaussian fit of a feature set.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::int64_t count = 0;

  std::int64_t dimension() const { return mean.size(); }
  /// Fewer samples than dimensions leaves the covariance rank-deficient.
  bool undersampled() const { return count < dimension(); }
};

/// Streaming mean / scatter accumulator (Welford, Chan et al. merge). Shards
/// can be accumulated independently and merged.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::int64_t dimension);

  void add(const Eigen::Ref<const Eigen::VectorXd>& sample);
  /// Rows of `samples` are observations.
  void add_rows(const Eigen::Ref<const Eigen::MatrixXd>& samples);
  void merge(const MomentAccumulator& other);

  std::int64_t count() const { return count_; }
  /// Unbiased covariance (n - 1); the zero matrix for n < 2.
  FeatureStats stats() const;

 private:
  std::int64_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd scatter_;
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// square root is taken from the eigenvalues of the symmetric matrix
/// S_a^(1/2) S_b S_a^(1/2); eigenvalues down to -1e-6 are clamped to zero.
/// Throws InvalidArgument on dimension mismatch and NumericalError when the
/// decomposition fails or an eigenvalue is more negative than the tolerance.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// Image -> feature vector embedding used by FID.
class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  /// [B, 3, H, W] in [-1, 1] -> [B, d] float64.
  virtual torch::Tensor embed(const torch::Tensor& images) const = 0;
  virtual std::int64_t dimension() const = 0;
  virtual std::string id() const = 0;
};

/// Average-pools to 8x8, then a fixed Gaussian projection and tanh.
class RandomProjectionEmbedder final : public ImageEmbedder {
 public:
  explicit RandomProjectionEmbedder(std::int64_t dimension = 16, std::uint64_t seed = 0);
  torch::Tensor embed(const torch::Tensor& images) const override;
  std::int64_t dimension() const override { return dimension_; }
  std::string id() const override;

 private:
  std::int64_t dimension_;
  std::uint64_t seed_;
  torch::Tensor projection_;
};

/// TorchScript embedding network, e.g. the 2048-d pool features of an
/// inception model. The module receives images in [-1, 1].
class ScriptedEmbedder final : public ImageEmbedder {
 public:
  explicit ScriptedEmbedder(const std::filesystem::path& path);
  torch::Tensor embed(const torch::Tensor& images) const override;
  std::int64_t dimension() const override { return dimension_; }
  std::string id() const override { return id_; }

 private:
  mutable torch::jit::Module module_;
  std::int64_t dimension_ = 0;
  std::string id_;
};

/// Feeds images through the embedder in batches and accumulates moments.
FeatureStats compute_stats(const std::vector<torch::Tensor>& images, const ImageEmbedder& embedder,
                           std::int64_t batch_size = 16);
MomentAccumulator accumulate(const std::vector<torch::Tensor>& images,
                             const ImageEmbedder& embedder, std::int64_t batch_size = 16);

struct FidReport {
  std::string dataset;
  double mask_fraction = 0.0;
  double fid = 0.0;
  std::int64_t n_images = 0;
  std::string extractor_id;

  nlohmann::json to_json() const;
};

/// One tile of a comparison grid: an image or a palette-coloured layout.
using GridTile = std::variant<torch::Tensor, SemanticLayout>;
using GridRow = std::vector<GridTile>;

/// Tiles rows left to right, top to bottom with no spacing. Every tile must
/// share the first tile's size and every row the first row's length. Returns
/// uint8 [rows * H, cols * W, 3].
torch::Tensor render_grid(const std::vector<GridRow>& rows, const std::vector<Rgb>& palette);
/// render_grid written as PNG. Throws InvalidArgument on an empty row list.
void emit_grid(const std::filesystem::path& path, const std::vector<GridRow>& rows,
               const std::vector<Rgb>& palette);

}  // namespace outpaint
