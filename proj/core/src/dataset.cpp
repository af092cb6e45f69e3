#include "outpaint/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <torch/torch.h>

#include "outpaint/errors.hpp"
#include "outpaint/image_io.hpp"

namespace fs = std::filesystem;

namespace outpaint {

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetNotFound("manifest not found: " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string image, layout, split, extra;
    if (!(fields >> image)) continue;
    if (!(fields >> layout >> split) || (fields >> extra))
      throw InvalidArgument(path.string() + ":" + std::to_string(number) +
                            ": expected 'image_path layout_path split'");
    ManifestEntry entry;
    entry.image = fs::path(image).is_absolute() ? fs::path(image) : base / image;
    entry.layout = fs::path(layout).is_absolute() ? fs::path(layout) : base / layout;
    entry.split = split;
    entry.source_id = entry.image.stem().string();
    entries.push_back(std::move(entry));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  out << "# image_path layout_path split\n";
  const auto base = path.parent_path();
  for (const auto& entry : entries) {
    out << entry.image.lexically_relative(base).string() << ' '
        << entry.layout.lexically_relative(base).string() << ' ' << entry.split << '\n';
  }
  write_file(path, out.str());
}

OutpaintDataset::OutpaintDataset(std::vector<ManifestEntry> entries,
                                 std::shared_ptr<const Segmenter> segmenter)
    : entries_(std::move(entries)), segmenter_(std::move(segmenter)) {
  if (!segmenter_) throw InvalidArgument("dataset needs a segmenter");
}

OutpaintDataset OutpaintDataset::from_manifest(const fs::path& manifest, const std::string& split,
                                               std::int64_t num_classes) {
  std::vector<ManifestEntry> selected;
  std::map<std::string, fs::path> annotations;
  for (auto& entry : read_manifest(manifest)) {
    if (entry.split != split) continue;
    if (!fs::exists(entry.image)) throw DatasetNotFound("missing image " + entry.image.string());
    if (!fs::exists(entry.layout)) throw DatasetNotFound("missing layout " + entry.layout.string());
    annotations[entry.source_id] = entry.layout;
    selected.push_back(std::move(entry));
  }
  if (selected.empty())
    throw DatasetNotFound("split '" + split + "' of " + manifest.string() + " is empty");
  return OutpaintDataset(
      std::move(selected),
      std::make_shared<AnnotationOracleSegmenter>(std::move(annotations), num_classes));
}

ImageSample OutpaintDataset::sample(std::size_t index) const {
  const auto& entry = entries_.at(index);
  torch::Tensor pixels;
  try {
    pixels = read_rgb_png(entry.image);
  } catch (const std::exception& e) {
    throw DatasetNotFound("cannot load " + entry.image.string() + ": " + e.what());
  }
  auto layout = segmenter_->predict(pixels, entry.source_id);
  ImageSample out{pixels, std::move(layout), BinaryMask::ones(pixels.size(1), pixels.size(2)),
                  entry.source_id};
  out.validate();
  return out;
}

OutpaintBatch make_batch(const std::vector<ImageSample>& samples,
                         const std::vector<std::uint64_t>& seeds, const BatchOptions& options) {
  if (samples.empty()) throw InvalidArgument("empty batch");
  if (options.augment && seeds.size() != samples.size())
    throw InvalidArgument("one augmentation seed per sample is required");
  const auto num_classes = samples.front().layout.num_classes();
  std::vector<torch::Tensor> images, labels;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto sample = options.augment ? augment(samples[i], seeds[i], *options.augment) : samples[i];
    if (sample.layout.num_classes() != num_classes)
      throw InvalidArgument("batch mixes class counts");
    images.push_back(sample.pixels);
    labels.push_back(sample.layout.labels());
    ids.push_back(sample.source_id);
  }
  OutpaintBatch batch;
  batch.image = torch::stack(images);
  batch.labels = torch::stack(labels);
  const auto height = batch.image.size(2);
  const auto width = batch.image.size(3);
  auto mask = make_right_mask(height, width, options.mask_fraction).values();
  auto keep = mask.unsqueeze(0).unsqueeze(0).expand({batch.size(), 1, height, width});
  batch.mask = keep.to(torch::kFloat).contiguous();
  batch.masked_image = torch::where(keep, batch.image, torch::zeros_like(batch.image));
  batch.layout_onehot = outpaint::one_hot(batch.labels, num_classes);
  batch.masked_layout_onehot =
      torch::where(keep, batch.layout_onehot, torch::zeros_like(batch.layout_onehot));
  batch.source_ids = std::move(ids);
  return batch;
}

namespace {

struct Colour {
  double r, g, b;
};

void paint(torch::Tensor& pixels, torch::Tensor& labels, const torch::Tensor& region,
           std::int64_t label, const Colour& colour, const torch::Tensor& shade) {
  labels.masked_fill_(region, label);
  const double channels[3] = {colour.r, colour.g, colour.b};
  for (int c = 0; c < 3; ++c) {
    auto value = (shade * channels[c]).clamp(0.0, 1.0) * 2.0 - 1.0;
    pixels[c] = torch::where(region, value, pixels[c]);
  }
}

}  // namespace

ImageSample make_toy_sample(std::int64_t size, std::uint64_t seed, const std::string& source_id) {
  if (size < 8) throw InvalidArgument("toy samples need at least 8x8 pixels");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = static_cast<double>(size);

  auto ys = torch::arange(size, torch::kDouble).unsqueeze(1).expand({size, size});
  auto xs = torch::arange(size, torch::kDouble).unsqueeze(0).expand({size, size});
  auto pixels = torch::zeros({3, size, size}, torch::kDouble);
  auto labels = torch::zeros({size, size}, torch::kLong);
  auto flat = torch::ones({size, size}, torch::kDouble);

  // 0 sky (vertical gradient), 1 ground.
  const double horizon = s * (0.40 + 0.2 * unit(rng));
  paint(pixels, labels, ys < horizon, 0, {0.35, 0.55, 0.95}, 0.75 + 0.35 * ys / s);
  paint(pixels, labels, ys >= horizon, 1, {0.30, 0.62, 0.22}, 1.1 - 0.4 * (ys - horizon) / s);

  // 5 road band with a dashed centre line.
  if (unit(rng) < 0.7) {
    const double top = horizon + (s - horizon) * (0.35 + 0.25 * unit(rng));
    const double bottom = std::min(s, top + s * (0.12 + 0.1 * unit(rng)));
    auto road = (ys >= top) & (ys < bottom);
    paint(pixels, labels, road, 5, {0.45, 0.45, 0.48}, flat);
    auto centre = road & ((ys - (top + bottom) / 2).abs() < 1.0) &
                  (torch::fmod(xs, 8.0) < 4.0);
    paint(pixels, labels, centre, 5, {0.95, 0.95, 0.9}, flat);
  }

  // 3 rectangles standing on the horizon.
  const int buildings = 1 + static_cast<int>(unit(rng) * 2.0);
  for (int i = 0; i < buildings; ++i) {
    const double w = s * (0.12 + 0.18 * unit(rng));
    const double h = s * (0.15 + 0.25 * unit(rng));
    const double x0 = (s - w) * unit(rng);
    auto rect = (xs >= x0) & (xs < x0 + w) & (ys >= horizon - h) & (ys < horizon);
    const Colour tint{0.55 + 0.3 * unit(rng), 0.3 + 0.2 * unit(rng), 0.25};
    paint(pixels, labels, rect, 3, tint, 0.9 + 0.2 * (xs - x0) / std::max(w, 1.0));
  }

  // 4 triangle (a tree or hill) on the ground.
  {
    const double base = s * (0.15 + 0.15 * unit(rng));
    const double cx = s * unit(rng);
    const double apex = horizon - s * (0.1 + 0.2 * unit(rng));
    const double foot = std::min(s, horizon + s * 0.1);
    auto t = (ys - apex) / std::max(foot - apex, 1.0);
    auto tri = (ys >= apex) & (ys < foot) & ((xs - cx).abs() <= t * base / 2);
    paint(pixels, labels, tri, 4, {0.12, 0.42, 0.15}, 0.8 + 0.4 * t);
  }

  // 2 circle in the sky.
  {
    const double radius = s * (0.06 + 0.07 * unit(rng));
    const double cx = s * unit(rng);
    const double cy = std::max(radius, horizon * (0.2 + 0.5 * unit(rng)));
    auto d2 = (xs - cx).pow(2) + (ys - cy).pow(2);
    auto disc = (d2 <= radius * radius) & (labels == 0);
    paint(pixels, labels, disc, 2, {0.98, 0.85, 0.25}, 1.05 - 0.3 * d2 / (radius * radius));
  }

  ImageSample sample{pixels.to(torch::kFloat).clamp(-1.0, 1.0), SemanticLayout(labels, 6),
                     BinaryMask::ones(size, size), source_id};
  sample.validate();
  return sample;
}

void write_toy_dataset(const fs::path& directory, std::int64_t size, std::int64_t train_count,
                       std::int64_t val_count, std::uint64_t seed) {
  std::vector<ManifestEntry> entries;
  const auto total = train_count + val_count;
  for (std::int64_t i = 0; i < total; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "toy_%03lld", static_cast<long long>(i));
    auto sample = make_toy_sample(size, seed * 1000003ULL + static_cast<std::uint64_t>(i), name);
    ManifestEntry entry;
    entry.image = directory / "images" / (std::string(name) + ".png");
    entry.layout = directory / "layouts" / (std::string(name) + ".png");
    entry.split = i < train_count ? "train" : "val";
    entry.source_id = name;
    write_rgb_png(entry.image, sample.pixels);
    write_label_png(entry.layout, sample.layout.labels());
    entries.push_back(std::move(entry));
  }
  write_manifest(directory / "manifest.txt", entries);
}

}  // namespace outpaint
