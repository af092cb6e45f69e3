#include "outpaint/evaluation.hpp"

#include <cmath>

#include <ATen/CPUGeneratorImpl.h>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "outpaint/errors.hpp"
#include "outpaint/image_io.hpp"
#include "outpaint/util.hpp"

namespace F = torch::nn::functional;

namespace outpaint {

MomentAccumulator::MomentAccumulator(std::int64_t dimension) {
  if (dimension <= 0) throw InvalidArgument("feature dimension must be positive");
  mean_ = Eigen::VectorXd::Zero(dimension);
  scatter_ = Eigen::MatrixXd::Zero(dimension, dimension);
}

void MomentAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& sample) {
  if (sample.size() != mean_.size()) throw InvalidArgument("feature dimension mismatch");
  ++count_;
  const Eigen::VectorXd delta = sample - mean_;
  mean_ += delta / static_cast<double>(count_);
  scatter_.noalias() += delta * (sample - mean_).transpose();
}

void MomentAccumulator::add_rows(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  if (samples.rows() == 0) return;
  if (samples.cols() != mean_.size()) throw InvalidArgument("feature dimension mismatch");
  // Two-pass moments of the block, then a pairwise merge.
  MomentAccumulator block(mean_.size());
  block.count_ = samples.rows();
  block.mean_ = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centred = samples.rowwise() - block.mean_.transpose();
  block.scatter_.noalias() = centred.transpose() * centred;
  merge(block);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.mean_.size() != mean_.size()) throw InvalidArgument("feature dimension mismatch");
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const Eigen::VectorXd delta = other.mean_ - mean_;
  mean_ += delta * (nb / n);
  scatter_ += other.scatter_ + (delta * delta.transpose()) * (na * nb / n);
  count_ += other.count_;
}

FeatureStats MomentAccumulator::stats() const {
  FeatureStats out;
  out.mean = mean_;
  out.count = count_;
  if (count_ < 2) {
    out.covariance = Eigen::MatrixXd::Zero(mean_.size(), mean_.size());
  } else {
    out.covariance = scatter_ / static_cast<double>(count_ - 1);
    out.covariance = (0.5 * (out.covariance + out.covariance.transpose())).eval();
  }
  return out;
}

namespace {

Eigen::VectorXd clamped_eigenvalues(const Eigen::MatrixXd& symmetric, const char* what,
                                    Eigen::MatrixXd* vectors = nullptr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      symmetric, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError(std::string("eigen-decomposition of ") + what + " did not converge");
  Eigen::VectorXd values = solver.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -1e-6 * scale)
      throw NumericalError(std::string(what) + " has eigenvalue " + std::to_string(values[i]) +
                           "; it is not positive semi-definite");
    values[i] = std::max(values[i], 0.0);
  }
  if (vectors) *vectors = solver.eigenvectors();
  return values;
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  const auto d = a.mean.size();
  if (d == 0 || b.mean.size() != d || a.covariance.rows() != d || a.covariance.cols() != d ||
      b.covariance.rows() != d || b.covariance.cols() != d)
    throw InvalidArgument("feature statistics have mismatched dimensions");
  if (!a.mean.allFinite() || !b.mean.allFinite() || !a.covariance.allFinite() ||
      !b.covariance.allFinite())
    throw NumericalError("feature statistics contain non-finite values");

  // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2); the inner matrix is symmetric.
  Eigen::MatrixXd vectors;
  const Eigen::VectorXd values = clamped_eigenvalues(a.covariance, "covariance A", &vectors);
  const Eigen::MatrixXd root_a = vectors * values.cwiseSqrt().asDiagonal() * vectors.transpose();
  Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  inner = (0.5 * (inner + inner.transpose())).eval();
  const double trace_root = clamped_eigenvalues(inner, "Sa^1/2 Sb Sa^1/2").cwiseSqrt().sum();

  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double distance =
      mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_root;
  if (!std::isfinite(distance)) throw NumericalError("Frechet distance is not finite");
  return distance;
}

RandomProjectionEmbedder::RandomProjectionEmbedder(std::int64_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension <= 0) throw InvalidArgument("embedding dimension must be positive");
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  constexpr std::int64_t inputs = 3 * 8 * 8;
  projection_ = torch::empty({inputs, dimension}, torch::kDouble)
                    .normal_(0.0, 1.0 / std::sqrt(static_cast<double>(inputs)), generator);
}

torch::Tensor RandomProjectionEmbedder::embed(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3)
    throw InvalidArgument("embedder expects [B, 3, H, W] images");
  auto pooled = F::adaptive_avg_pool2d(images.to(torch::kDouble),
                                       F::AdaptiveAvgPool2dFuncOptions({8, 8}));
  return torch::tanh(torch::matmul(pooled.flatten(1), projection_));
}

std::string RandomProjectionEmbedder::id() const {
  return "randproj-" + std::to_string(dimension_) + "-" + std::to_string(seed_);
}

ScriptedEmbedder::ScriptedEmbedder(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
    module_ = torch::jit::load(path.string());
  } catch (const std::exception& e) {
    throw InvalidArgument("cannot load embedder " + path.string() + ": " + e.what());
  }
  module_.eval();
  dimension_ = embed(torch::zeros({1, 3, 64, 64})).size(1);
  id_ = "script-" + path.filename().string() + "-" + to_hex(fnv1a64(bytes));
}

torch::Tensor ScriptedEmbedder::embed(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  auto output = module_.forward({images});
  if (!output.isTensor()) throw InvalidArgument("scripted embedder must return a tensor");
  return output.toTensor().flatten(1).to(torch::kDouble);
}

MomentAccumulator accumulate(const std::vector<torch::Tensor>& images,
                             const ImageEmbedder& embedder, std::int64_t batch_size) {
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  MomentAccumulator accumulator(embedder.dimension());
  torch::NoGradGuard no_grad;
  for (std::size_t begin = 0; begin < images.size(); begin += batch_size) {
    const auto end = std::min(images.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<torch::Tensor> chunk(images.begin() + begin, images.begin() + end);
    auto features = embedder.embed(torch::stack(chunk)).to(torch::kCPU, torch::kDouble).contiguous();
    if (features.dim() != 2 || features.size(1) != embedder.dimension())
      throw InvalidArgument("embedder returned features of the wrong shape");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> rows(features.data_ptr<double>(), features.size(0),
                                    features.size(1));
    accumulator.add_rows(rows);
  }
  return accumulator;
}

FeatureStats compute_stats(const std::vector<torch::Tensor>& images, const ImageEmbedder& embedder,
                           std::int64_t batch_size) {
  return accumulate(images, embedder, batch_size).stats();
}

nlohmann::json FidReport::to_json() const {
  return {{"dataset", dataset},
          {"mask_fraction", mask_fraction},
          {"fid", fid},
          {"n_images", n_images},
          {"extractor_id", extractor_id}};
}

torch::Tensor render_grid(const std::vector<GridRow>& rows, const std::vector<Rgb>& palette) {
  if (rows.empty() || rows.front().empty()) throw InvalidArgument("grid needs at least one tile");
  auto raster = [&](const GridTile& tile) {
    if (const auto* image = std::get_if<torch::Tensor>(&tile)) return to_rgb8(*image);
    return colorize(std::get<SemanticLayout>(tile).labels(), palette);
  };
  std::vector<torch::Tensor> bands;
  std::int64_t tile_h = -1, tile_w = -1;
  const auto columns = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != columns) throw InvalidArgument("grid rows differ in length");
    std::vector<torch::Tensor> tiles;
    for (const auto& tile : row) {
      auto rgb = raster(tile);
      if (tile_h < 0) {
        tile_h = rgb.size(0);
        tile_w = rgb.size(1);
      } else if (rgb.size(0) != tile_h || rgb.size(1) != tile_w) {
        throw InvalidArgument("grid tiles differ in size");
      }
      tiles.push_back(rgb);
    }
    bands.push_back(torch::cat(tiles, 1));
  }
  return torch::cat(bands, 0).contiguous();
}

void emit_grid(const std::filesystem::path& path, const std::vector<GridRow>& rows,
               const std::vector<Rgb>& palette) {
  write_rgb8_png(path, render_grid(rows, palette));
}

}  // namespace outpaint
