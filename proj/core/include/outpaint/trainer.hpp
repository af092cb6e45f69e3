#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/nn/module.h>
#include <torch/optim/adam.h>

#include "outpaint/dataset.hpp"
#include "outpaint/networks.hpp"
#include "outpaint/objectives.hpp"

namespace outpaint {

enum class AblationMode { full, noseg, segconcat };
enum class Stage { layout = 1, image = 2 };

std::string to_string(AblationMode mode);
AblationMode ablation_from_string(const std::string& name);

struct TrainConfig {
  std::int64_t epochs = 300;
  std::int64_t decay_start_epoch = 200;
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  LossWeights loss_weights;
  double mask_fraction = 0.25;
  AblationMode ablation_mode = AblationMode::full;
  std::uint64_t seed = 0;

  std::int64_t batch_size = 8;
  /// Stop after this many steps; 0 runs every epoch.
  std::int64_t max_steps = 0;
  /// Discriminator updates before each generator update.
  std::int64_t d_steps_per_batch = 1;
  bool augment = true;
  AugmentOptions augment_options;
  /// Cross-entropy over the extension region only instead of the full map.
  bool ce_mask_region_only = false;
  NetworkProfile network;
  /// Steps between periodic checkpoints; 0 writes only the final one.
  std::int64_t checkpoint_every = 0;
  /// Perceptual extractor: TorchScript file, or a seeded random extractor when empty.
  std::string extractor_path;
  std::uint64_t extractor_seed = 0;

  /// Full-scale defaults: 256x256, full-width networks, batch 32.
  static TrainConfig full();
  /// 64x64 images, width-reduced networks, batch 8.
  static TrainConfig desk();

  /// Throws InvalidArgument unless 0 < decay_start_epoch <= epochs, both
  /// learning rates are positive, and the remaining fields are in range.
  void validate() const;
  /// Hash of every field that affects the trajectory (excludes max_steps and
  /// checkpoint_every).
  std::string fingerprint() const;

  nlohmann::json to_json() const;
  /// Missing keys keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& json, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& json);
};

struct LearningRates {
  double generator;
  double discriminator;
};

/// Constant until decay_start_epoch, then linear to zero at `epochs`.
LearningRates lr_at(std::int64_t epoch, const TrainConfig& config);

struct StepRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::vector<std::pair<std::string, double>> losses;
  double lr_g = 0.0;
  double lr_d = 0.0;
  /// The composited output equalled the masked input on the known region.
  bool known_region_exact = false;

  double loss(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Shuffled epoch iteration with per-sample augmentation seeds. Its whole
/// state round-trips through a string for checkpointing.
class BatchSource {
 public:
  BatchSource(OutpaintDataset dataset, const TrainConfig& config);

  /// Next batch; `epoch()` advances when the permutation is exhausted.
  OutpaintBatch next();
  std::int64_t epoch() const { return epoch_; }
  /// Full batches per epoch; a trailing partial batch is dropped.
  std::int64_t steps_per_epoch() const;
  std::int64_t num_classes() const { return dataset_.num_classes(); }
  std::string state() const;
  void restore(const std::string& state);

 private:
  void start_epoch();

  OutpaintDataset dataset_;
  BatchOptions options_;
  std::int64_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t epoch_ = 0;
};

/// One discriminator/generator pair trained with alternating updates.
class AdversarialTrainer {
 public:
  virtual ~AdversarialTrainer() = default;

  /// d_steps_per_batch discriminator updates, then one generator update, on
  /// one batch. Throws NonFiniteLoss if any loss term is NaN or infinite.
  StepRecord step();
  /// Runs `steps` steps (or until max_steps/epochs run out), writing one JSON
  /// line per step to `log` when given.
  std::vector<StepRecord> run(std::int64_t steps, std::ostream* log = nullptr);

  void save_checkpoint(const std::filesystem::path& path);
  /// Throws CheckpointMismatch when the file was written for another config.
  void load_checkpoint(const std::filesystem::path& path);

  std::int64_t steps_done() const { return step_; }
  std::int64_t epoch() const { return source_.epoch(); }
  bool finished() const;
  const TrainConfig& config() const { return config_; }

  virtual torch::nn::Module& generator() = 0;
  virtual torch::nn::Module& discriminator() = 0;
  virtual std::string generator_fingerprint() const = 0;
  virtual std::string discriminator_fingerprint() const = 0;
  virtual std::int64_t generator_in_channels() const = 0;
  virtual std::string name() const = 0;

 protected:
  AdversarialTrainer(OutpaintDataset dataset, TrainConfig config);

  /// Derived constructors call this once their networks exist.
  void create_optimizers();

  struct Terms {
    std::vector<std::pair<std::string, torch::Tensor>> values;
    bool known_region_exact = true;
  };
  /// Discriminator loss on a batch; only its value is backpropagated.
  virtual Terms discriminator_loss(const OutpaintBatch& batch) = 0;
  /// Generator loss; the first term is the total that gets backpropagated.
  virtual Terms generator_loss(const OutpaintBatch& batch) = 0;

  void set_discriminator_trainable(bool trainable);

  TrainConfig config_;
  std::int64_t num_classes_;

 private:
  void apply_learning_rates();
  void check_finite(const Terms& terms, const OutpaintBatch& batch, const char* phase) const;

  BatchSource source_;
  std::unique_ptr<torch::optim::Adam> optimizer_g_;
  std::unique_ptr<torch::optim::Adam> optimizer_d_;
  std::int64_t step_ = 0;
};

/// G_seg / D_seg. Generator sees [I_masked ++ S_masked ++ M]; the
/// discriminator scores [layout ++ I_masked ++ M] for S_orig (real) and the
/// composited soft layout S_out (fake).
class Stage1Trainer final : public AdversarialTrainer {
 public:
  Stage1Trainer(OutpaintDataset dataset, TrainConfig config);

  torch::nn::Module& generator() override { return *generator_; }
  torch::nn::Module& discriminator() override { return *discriminator_; }
  std::string generator_fingerprint() const override { return generator_->spec().fingerprint(); }
  std::string discriminator_fingerprint() const override {
    return discriminator_->spec().fingerprint();
  }
  std::int64_t generator_in_channels() const override { return generator_->spec().in_channels; }
  std::string name() const override { return "stage1"; }

  GeneratorSeg& layout_generator() { return generator_; }

 protected:
  Terms discriminator_loss(const OutpaintBatch& batch) override;
  Terms generator_loss(const OutpaintBatch& batch) override;

 private:
  GeneratorSeg generator_{nullptr};
  MultiScaleDiscriminator discriminator_{nullptr};
};

/// G_img / D_img, supervised on ground-truth (I_orig, S_orig) pairs: the
/// generator is conditioned on S_orig and the discriminator scores
/// [image ++ S_orig].
class Stage2Trainer final : public AdversarialTrainer {
 public:
  Stage2Trainer(OutpaintDataset dataset, TrainConfig config,
                std::shared_ptr<FeatureExtractor> extractor);

  torch::nn::Module& generator() override { return *generator_; }
  torch::nn::Module& discriminator() override { return *discriminator_; }
  std::string generator_fingerprint() const override { return generator_->spec().fingerprint(); }
  std::string discriminator_fingerprint() const override {
    return discriminator_->spec().fingerprint();
  }
  std::int64_t generator_in_channels() const override { return generator_->spec().in_channels; }
  std::string name() const override { return "stage2"; }

  GeneratorImg& image_generator() { return generator_; }

 protected:
  Terms discriminator_loss(const OutpaintBatch& batch) override;
  Terms generator_loss(const OutpaintBatch& batch) override;

 private:
  std::shared_ptr<FeatureExtractor> extractor_;
  GeneratorImg generator_{nullptr};
  MultiScaleDiscriminator discriminator_{nullptr};
};

/// Single-stage ablation baselines. NoSeg feeds [I_masked ++ M]; SegConcat
/// feeds [I_masked ++ S_masked ++ M]. The generator is an encoder + residual
/// decoder with a tanh image head, trained with the stage-2 objective; the
/// discriminator scores [image ++ generator input].
class BaselineTrainer final : public AdversarialTrainer {
 public:
  BaselineTrainer(OutpaintDataset dataset, TrainConfig config,
                  std::shared_ptr<FeatureExtractor> extractor);

  torch::nn::Module& generator() override { return *generator_; }
  torch::nn::Module& discriminator() override { return *discriminator_; }
  std::string generator_fingerprint() const override { return generator_->spec().fingerprint(); }
  std::string discriminator_fingerprint() const override {
    return discriminator_->spec().fingerprint();
  }
  std::int64_t generator_in_channels() const override { return generator_->spec().in_channels; }
  std::string name() const override { return "baseline-" + to_string(config_.ablation_mode); }

  GeneratorSeg& image_generator() { return generator_; }
  torch::Tensor generator_input(const OutpaintBatch& batch) const;

 protected:
  Terms discriminator_loss(const OutpaintBatch& batch) override;
  Terms generator_loss(const OutpaintBatch& batch) override;

 private:
  std::shared_ptr<FeatureExtractor> extractor_;
  GeneratorSeg generator_{nullptr};
  MultiScaleDiscriminator discriminator_{nullptr};
};

/// Extractor named by the config (TorchScript path or seeded random).
std::shared_ptr<FeatureExtractor> make_extractor(const TrainConfig& config);

/// Stage trainer for the config; non-full ablation modes give the baseline.
std::unique_ptr<AdversarialTrainer> make_trainer(Stage stage, OutpaintDataset dataset,
                                                 const TrainConfig& config);

struct TrainOutputs {
  std::filesystem::path directory;
  std::ostream* log = nullptr;
};

struct TrainSummary {
  std::vector<StepRecord> records;
  std::vector<std::filesystem::path> checkpoints;
};

/// Runs to completion, writing <directory>/<name>_step<N>.pt periodically and
/// <directory>/<name>_final.pt at the end, plus <name>_log.jsonl.
TrainSummary train_stage1(OutpaintDataset dataset, const TrainConfig& config,
                          const TrainOutputs& outputs);
TrainSummary train_stage2(OutpaintDataset dataset, const TrainConfig& config,
                          const TrainOutputs& outputs);

}  // namespace outpaint
