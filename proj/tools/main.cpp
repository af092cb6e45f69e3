// outpaint: command-line front end for training, evaluation, inference,
// comparison grids, the editing service and the toy dataset.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "outpaint/dataset.hpp"
#include "outpaint/errors.hpp"
#include "outpaint/evaluation.hpp"
#include "outpaint/image_io.hpp"
#include "outpaint/pipeline.hpp"
#include "outpaint/service.hpp"
#include "outpaint/trainer.hpp"

namespace fs = std::filesystem;
using namespace outpaint;

namespace {

enum Exit : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_usage = 2,
  exit_dataset_missing = 3,
  exit_checkpoint_missing = 4,
  exit_checkpoint_mismatch = 5,
  exit_runtime = 6,
};

struct ModelOptions {
  std::string seg_checkpoint = "runs/stage1_final.pt";
  std::string img_checkpoint = "runs/stage2_final.pt";
  std::string dataset = "toy";
  std::string layout_dir;

  void add_to(CLI::App& app) {
    app.add_option("--seg-checkpoint", seg_checkpoint, "Stage-1 checkpoint")->capture_default_str();
    app.add_option("--img-checkpoint", img_checkpoint, "Stage-2 checkpoint")->capture_default_str();
    app.add_option("--dataset", dataset, "Dataset profile: toy, ade20k, cityscapes")
        ->capture_default_str();
    app.add_option("--layout-dir", layout_dir,
                   "Directory of precomputed <source_id>.png layouts used as the segmenter");
  }
};

OutpaintModels load_models(const ModelOptions& options,
                           std::shared_ptr<const Segmenter> segmenter = nullptr) {
  OutpaintModels models;
  models.profile = DatasetProfile::by_name(options.dataset);
  models.layout = load_layout_extender(options.seg_checkpoint);
  models.image = load_image_synthesizer(options.img_checkpoint);
  if (segmenter) {
    models.segmenter = std::move(segmenter);
  } else if (!options.layout_dir.empty()) {
    models.segmenter = std::make_shared<PrecomputedLayoutSegmenter>(options.layout_dir,
                                                                    models.profile.num_classes);
  } else {
    std::cerr << "note: no segmenter configured; unknown layouts default to class 0\n";
    models.segmenter = std::make_shared<ConstantSegmenter>(models.profile.num_classes);
  }
  models.validate();
  return models;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("malformed config " + path.string() + ": " + e.what());
  }
}

// --- train ---------------------------------------------------------------

struct TrainOptions {
  int stage = 1;
  std::string profile = "desk";
  std::string config;
  std::string manifest = "data/toy/manifest.txt";
  std::string split = "train";
  std::string dataset = "toy";
  std::string out = "runs";
  std::optional<std::int64_t> steps, epochs, checkpoint_every, batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> ratio;
  std::optional<std::string> ablation;
  bool quiet = false;
};

int run_train(const TrainOptions& o) {
  auto config = o.profile == "desk" ? TrainConfig::desk() : TrainConfig::full();
  if (o.profile != "desk" && o.profile != "full")
    throw InvalidArgument("--profile must be desk or full");
  if (!o.config.empty()) config = TrainConfig::from_json(read_json(o.config), config);
  if (o.steps) config.max_steps = *o.steps;
  if (o.epochs) {
    config.epochs = *o.epochs;
    config.decay_start_epoch = std::min(config.decay_start_epoch, config.epochs);
  }
  if (o.checkpoint_every) config.checkpoint_every = *o.checkpoint_every;
  if (o.batch_size) config.batch_size = *o.batch_size;
  if (o.seed) config.seed = *o.seed;
  if (o.ratio) config.mask_fraction = *o.ratio;
  if (o.ablation) config.ablation_mode = ablation_from_string(*o.ablation);
  config.validate();

  const auto profile = DatasetProfile::by_name(o.dataset);
  auto dataset = OutpaintDataset::from_manifest(o.manifest, o.split, profile.num_classes);
  TrainOutputs outputs{o.out, o.quiet ? nullptr : &std::cout};
  auto summary = o.stage == 1 ? train_stage1(std::move(dataset), config, outputs)
                              : train_stage2(std::move(dataset), config, outputs);
  for (const auto& path : summary.checkpoints) std::cerr << "checkpoint " << path.string() << '\n';
  return exit_ok;
}

// --- outpaint --------------------------------------------------------------

struct OutpaintOptions {
  ModelOptions models;
  std::string in, out, layout_out, layout_color_out, layout;
  double ratio = 0.25;
  bool cityscapes = false;
};

int run_outpaint(const OutpaintOptions& o) {
  // A given layout replaces segmentation entirely.
  const auto profile = DatasetProfile::by_name(o.models.dataset);
  auto models = load_models(o.models, o.layout.empty() ? nullptr
                                                        : std::make_shared<ConstantSegmenter>(
                                                              profile.num_classes));
  auto pixels = read_rgb_png(o.in);
  const auto source_id = fs::path(o.in).stem().string();
  std::optional<SemanticLayout> given;
  if (!o.layout.empty()) {
    auto labels = read_label_png(o.layout);
    given = SemanticLayout(labels, models.profile.num_classes);
  }
  auto run = [&]() -> OutpaintResult {
    if (o.cityscapes) return outpaint_cityscapes(pixels, o.ratio, models, given, source_id);
    auto request = OutpaintRequest::from_cropped(pixels, o.ratio, source_id);
    if (given) {
      if (given->height() != request.image.size(1) || given->width() != pixels.size(2))
        throw InvalidArgument("--layout must match the input image size");
      auto labels = torch::zeros({request.image.size(1), request.image.size(2)}, torch::kLong);
      labels.slice(1, 0, pixels.size(2)).copy_(given->labels());
      request.layout = SemanticLayout(labels, models.profile.num_classes);
    }
    if (request.out_of_distribution())
      std::cerr << "note: ratio " << o.ratio << " is outside the evaluated 0.25 / 0.5 protocol\n";
    return outpaint::outpaint(request, models);
  };
  const auto result = run();
  write_rgb_png(o.out, result.image);
  if (!o.layout_out.empty()) write_label_png(o.layout_out, result.layout.labels());
  if (!o.layout_color_out.empty())
    write_rgb8_png(o.layout_color_out, colorize(result.layout.labels(), models.profile.palette));
  std::cout << nlohmann::json{{"out", o.out},
                              {"layout_out", o.layout_out},
                              {"height", result.image.size(1)},
                              {"width", result.image.size(2)},
                              {"image_hash", image_hash(result.image)},
                              {"total_ms", result.total_ms}}
                   .dump()
            << '\n';
  return exit_ok;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateOptions {
  ModelOptions models;
  std::string manifest = "data/toy/manifest.txt";
  std::string split = "val";
  double ratio = 0.25;
  std::string embedder;
  std::int64_t embed_dim = 16;
  std::string out;
};

int run_evaluate(const EvaluateOptions& o) {
  const auto profile = DatasetProfile::by_name(o.models.dataset);
  auto dataset = OutpaintDataset::from_manifest(o.manifest, o.split, profile.num_classes);
  std::shared_ptr<const Segmenter> oracle(&dataset.segmenter(), [](const Segmenter*) {});
  auto models = load_models(o.models, o.models.layout_dir.empty() ? oracle : nullptr);

  std::unique_ptr<ImageEmbedder> embedder;
  if (o.embedder.empty()) {
    embedder = std::make_unique<RandomProjectionEmbedder>(o.embed_dim);
  } else {
    embedder = std::make_unique<ScriptedEmbedder>(o.embedder);
  }
  std::vector<torch::Tensor> real, generated;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto sample = dataset.sample(i);
    OutpaintRequest request;
    request.image = sample.pixels;
    request.extension_fraction = o.ratio;
    request.source_id = sample.source_id;
    generated.push_back(outpaint::outpaint(request, models).image);
    real.push_back(sample.pixels);
  }
  FidReport report;
  report.dataset = profile.name;
  report.mask_fraction = o.ratio;
  report.n_images = static_cast<std::int64_t>(generated.size());
  report.extractor_id = embedder->id();
  report.fid = frechet_distance(compute_stats(real, *embedder), compute_stats(generated, *embedder));
  auto json = report.to_json();
  if (report.n_images < embedder->dimension())
    json["warning"] = "fewer images than feature dimensions; covariance is rank-deficient";
  const auto text = json.dump(2);
  if (!o.out.empty()) write_file(o.out, text + "\n");
  std::cout << text << '\n';
  return exit_ok;
}

// --- export-grid -----------------------------------------------------------

struct GridOptions {
  ModelOptions models;
  std::string manifest = "data/toy/manifest.txt";
  std::string split = "val";
  double ratio = 0.25;
  std::int64_t rows = 4;
  std::string out = "grid.png";
};

int run_export_grid(const GridOptions& o) {
  const auto profile = DatasetProfile::by_name(o.models.dataset);
  auto dataset = OutpaintDataset::from_manifest(o.manifest, o.split, profile.num_classes);
  std::shared_ptr<const Segmenter> oracle(&dataset.segmenter(), [](const Segmenter*) {});
  auto models = load_models(o.models, o.models.layout_dir.empty() ? oracle : nullptr);
  std::vector<GridRow> rows;
  const auto count = std::min<std::size_t>(dataset.size(), static_cast<std::size_t>(o.rows));
  for (std::size_t i = 0; i < count; ++i) {
    auto sample = dataset.sample(i);
    OutpaintRequest request;
    request.image = sample.pixels;
    request.extension_fraction = o.ratio;
    request.source_id = sample.source_id;
    auto result = outpaint::outpaint(request, models);
    auto keep = result.mask.values().unsqueeze(0).expand({3, result.mask.height(), result.mask.width()});
    auto known_layout = from_rgb8(colorize(argmax_layout(result.masked_layout).labels(), profile.palette));
    rows.push_back(GridRow{torch::where(keep, sample.pixels, torch::zeros_like(sample.pixels)),
                           torch::where(keep, known_layout, torch::zeros_like(known_layout)),
                           result.layout, result.image, sample.pixels});
  }
  emit_grid(o.out, rows, profile.palette);
  std::cout << o.out << '\n';
  return exit_ok;
}

// --- serve -----------------------------------------------------------------

struct ServeOptions {
  ModelOptions models;
  std::string listen;
  std::string session_db;
};

int run_serve(ServeOptions o) {
  auto env = ServiceOptions::from_env();
  if (!env.seg_checkpoint.empty()) o.models.seg_checkpoint = env.seg_checkpoint;
  if (!env.img_checkpoint.empty()) o.models.img_checkpoint = env.img_checkpoint;
  if (!env.layout_dir.empty()) o.models.layout_dir = env.layout_dir;
  if (std::getenv("OUTPAINT_DATASET")) o.models.dataset = env.dataset;
  if (!o.listen.empty()) {
    setenv("OUTPAINT_LISTEN", o.listen.c_str(), 1);
    auto parsed = ServiceOptions::from_env();
    env.host = parsed.host;
    env.port = parsed.port;
  }
  if (!o.session_db.empty()) env.session_db = o.session_db;

  auto store = std::make_shared<SessionStore>(env.session_db);
  OutpaintService service(load_models(o.models), store);
  std::cerr << "serving /v1 on " << env.host << ':' << env.port << " (sessions in "
            << env.session_db << ")\n";
  service.serve(env.host, env.port);
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage semantic-layout image outpainting"};
  app.require_subcommand(1);
  // Bad ratios are usage errors, caught before any checkpoint is opened.
  const CLI::Validator open_unit(
      [](std::string& text) -> std::string {
        double v = 0.0;
        try {
          v = std::stod(text);
        } catch (const std::exception&) {
          return "not a number: " + text;
        }
        return v > 0.0 && v < 1.0 ? std::string() : "must lie strictly between 0 and 1";
      },
      "(0, 1)");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train stage 1 (layout) or stage 2 (image)");
  train_cmd->add_option("--stage", train.stage, "1 = layout generator, 2 = image generator")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--profile", train.profile, "desk (64x64, narrow) or full (256x256)")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  train_cmd->add_option("--config", train.config, "JSON file overriding profile defaults");
  train_cmd->add_option("--manifest", train.manifest)->capture_default_str();
  train_cmd->add_option("--split", train.split)->capture_default_str();
  train_cmd->add_option("--dataset", train.dataset, "Dataset profile")->capture_default_str();
  train_cmd->add_option("--out", train.out, "Checkpoint and log directory")->capture_default_str();
  train_cmd->add_option("--steps", train.steps, "Stop after this many steps");
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--batch-size", train.batch_size);
  train_cmd->add_option("--checkpoint-every", train.checkpoint_every);
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--ratio", train.ratio, "Masked fraction of the width")->check(open_unit);
  train_cmd->add_option("--ablation", train.ablation, "full, noseg or segconcat");
  train_cmd->add_flag("--quiet", train.quiet, "Do not echo per-step records");

  OutpaintOptions paint;
  auto* paint_cmd = app.add_subcommand("outpaint", "Extend one image to the right");
  paint.models.add_to(*paint_cmd);
  paint_cmd->add_option("--in", paint.in, "Cropped input PNG")->required();
  paint_cmd->add_option("--out", paint.out, "Output PNG")->required();
  paint_cmd->add_option("--layout-out", paint.layout_out, "Extended label map PNG");
  paint_cmd->add_option("--layout-color-out", paint.layout_color_out, "Palette-coloured layout");
  paint_cmd->add_option("--layout", paint.layout, "Label map of the input image");
  paint_cmd->add_option("--ratio", paint.ratio, "Extension as a fraction of the output width")
      ->capture_default_str()
      ->check(open_unit);
  paint_cmd->add_flag("--cityscapes", paint.cityscapes,
                      "Input is a full 1:2 image; split, extend both halves, merge");

  EvaluateOptions evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "FID of outpainted split against ground truth");
  evaluate.models.add_to(*eval_cmd);
  eval_cmd->add_option("--manifest", evaluate.manifest)->capture_default_str();
  eval_cmd->add_option("--split", evaluate.split)->capture_default_str();
  eval_cmd->add_option("--ratio", evaluate.ratio)->capture_default_str()->check(open_unit);
  eval_cmd->add_option("--embedder", evaluate.embedder, "TorchScript embedding network");
  eval_cmd->add_option("--embed-dim", evaluate.embed_dim, "Random-projection embedding size")
      ->capture_default_str();
  eval_cmd->add_option("--out", evaluate.out, "Write the JSON report here too");

  GridOptions grid;
  auto* grid_cmd = app.add_subcommand("export-grid", "Comparison grid of a split");
  grid.models.add_to(*grid_cmd);
  grid_cmd->add_option("--manifest", grid.manifest)->capture_default_str();
  grid_cmd->add_option("--split", grid.split)->capture_default_str();
  grid_cmd->add_option("--ratio", grid.ratio)->capture_default_str()->check(open_unit);
  grid_cmd->add_option("--rows", grid.rows)->capture_default_str();
  grid_cmd->add_option("--out", grid.out)->capture_default_str();

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP editing service under /v1");
  serve.models.add_to(*serve_cmd);
  serve_cmd->add_option("--listen", serve.listen, "host:port (default OUTPAINT_LISTEN)");
  serve_cmd->add_option("--session-db", serve.session_db, "SQLite file (default OUTPAINT_SESSION_DB)");

  std::string toy_out = "data/toy";
  std::int64_t toy_size = 64, toy_train = 8, toy_val = 4;
  std::uint64_t toy_seed = 0;
  auto* toy_cmd = app.add_subcommand("make-toy-data", "Write the synthetic shapes dataset");
  toy_cmd->add_option("--out", toy_out)->capture_default_str();
  toy_cmd->add_option("--size", toy_size)->capture_default_str();
  toy_cmd->add_option("--train", toy_train)->capture_default_str();
  toy_cmd->add_option("--val", toy_val)->capture_default_str();
  toy_cmd->add_option("--seed", toy_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*paint_cmd) return run_outpaint(paint);
    if (*eval_cmd) return run_evaluate(evaluate);
    if (*grid_cmd) return run_export_grid(grid);
    if (*serve_cmd) return run_serve(serve);
    if (*toy_cmd) {
      write_toy_dataset(toy_out, toy_size, toy_train, toy_val, toy_seed);
      std::cout << (fs::path(toy_out) / "manifest.txt").string() << '\n';
      return exit_ok;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const DatasetNotFound& e) {
    std::cerr << "error: dataset: " << e.what() << '\n';
    return exit_dataset_missing;
  } catch (const CheckpointNotFound& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_checkpoint_missing;
  } catch (const CheckpointMismatch& e) {
    std::cerr << "error: checkpoint mismatch: " << e.what() << '\n';
    return exit_checkpoint_mismatch;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_runtime;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_runtime;
  } catch (const SegmentationFailed& e) {
    std::cerr << "error: segmentation failed: " << e.what() << '\n';
    return exit_runtime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_failure;
  }
  return exit_failure;
}
