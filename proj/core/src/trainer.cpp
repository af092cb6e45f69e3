#include "outpaint/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "outpaint/checkpoint.hpp"
#include "outpaint/errors.hpp"
#include "outpaint/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace outpaint {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::noseg: return "noseg";
    case AblationMode::segconcat: return "segconcat";
  }
  return "full";
}

AblationMode ablation_from_string(const std::string& name) {
  if (name == "full") return AblationMode::full;
  if (name == "noseg") return AblationMode::noseg;
  if (name == "segconcat") return AblationMode::segconcat;
  throw InvalidArgument("unknown ablation mode '" + name + "' (full, noseg, segconcat)");
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TrainConfig TrainConfig::full() {
  TrainConfig config;
  config.batch_size = 32;
  config.network = NetworkProfile::full();
  config.augment_options = {286, 256, 0.5};
  return config;
}

TrainConfig TrainConfig::desk() {
  TrainConfig config;
  config.batch_size = 8;
  config.network = NetworkProfile::desk();
  // Same resize/crop ratio as the 286 -> 256 protocol.
  config.augment_options = {72, 64, 0.5};
  return config;
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw InvalidArgument("epochs must be positive");
  if (decay_start_epoch <= 0 || decay_start_epoch > epochs)
    throw InvalidArgument("need 0 < decay_start_epoch <= epochs");
  if (!(lr_g > 0.0) || !(lr_d > 0.0) || !std::isfinite(lr_g) || !std::isfinite(lr_d))
    throw InvalidArgument("learning rates must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  loss_weights.validate();
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0))
    throw InvalidArgument("mask_fraction must lie in (0, 1)");
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  if (max_steps < 0) throw InvalidArgument("max_steps must be >= 0");
  if (d_steps_per_batch <= 0) throw InvalidArgument("d_steps_per_batch must be positive");
  if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
  if (augment && (augment_options.crop <= 0 || augment_options.resize < augment_options.crop ||
                  augment_options.flip_probability < 0.0 ||
                  augment_options.flip_probability > 1.0))
    throw InvalidArgument("augment options need 0 < crop <= resize and p in [0, 1]");
  if (network.channel_divisor <= 0 || network.num_scales <= 0 || network.image_size <= 0)
    throw InvalidArgument("network profile values must be positive");
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"decay_start_epoch", decay_start_epoch},
          {"lr_g", lr_g},
          {"lr_d", lr_d},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"loss_weights",
           {{"lambda_ce", loss_weights.lambda_ce},
            {"lambda_perc", loss_weights.lambda_perc},
            {"lambda_l1", loss_weights.lambda_l1},
            {"perceptual", loss_weights.perceptual}}},
          {"mask_fraction", mask_fraction},
          {"ablation_mode", to_string(ablation_mode)},
          {"seed", seed},
          {"batch_size", batch_size},
          {"max_steps", max_steps},
          {"d_steps_per_batch", d_steps_per_batch},
          {"augment", augment},
          {"augment_options",
           {{"resize", augment_options.resize},
            {"crop", augment_options.crop},
            {"flip_probability", augment_options.flip_probability}}},
          {"ce_mask_region_only", ce_mask_region_only},
          {"network",
           {{"channel_divisor", network.channel_divisor},
            {"num_scales", network.num_scales},
            {"image_size", network.image_size}}},
          {"checkpoint_every", checkpoint_every},
          {"extractor_path", extractor_path},
          {"extractor_seed", extractor_seed}};
}

TrainConfig TrainConfig::from_json(const json& in, const TrainConfig& base) {
  if (!in.is_object()) throw InvalidArgument("training config must be a JSON object");
  TrainConfig c = base;
  try {
    auto get = [&](const json& object, const char* key, auto& field) {
      if (object.contains(key)) field = object.at(key).get<std::decay_t<decltype(field)>>();
    };
    get(in, "epochs", c.epochs);
    get(in, "decay_start_epoch", c.decay_start_epoch);
    get(in, "lr_g", c.lr_g);
    get(in, "lr_d", c.lr_d);
    get(in, "adam_beta1", c.adam_beta1);
    get(in, "adam_beta2", c.adam_beta2);
    if (in.contains("loss_weights")) {
      const auto& w = in.at("loss_weights");
      get(w, "lambda_ce", c.loss_weights.lambda_ce);
      get(w, "lambda_perc", c.loss_weights.lambda_perc);
      get(w, "lambda_l1", c.loss_weights.lambda_l1);
      get(w, "perceptual", c.loss_weights.perceptual);
    }
    get(in, "mask_fraction", c.mask_fraction);
    if (in.contains("ablation_mode"))
      c.ablation_mode = ablation_from_string(in.at("ablation_mode").get<std::string>());
    get(in, "seed", c.seed);
    get(in, "batch_size", c.batch_size);
    get(in, "max_steps", c.max_steps);
    get(in, "d_steps_per_batch", c.d_steps_per_batch);
    get(in, "augment", c.augment);
    if (in.contains("augment_options")) {
      const auto& a = in.at("augment_options");
      get(a, "resize", c.augment_options.resize);
      get(a, "crop", c.augment_options.crop);
      get(a, "flip_probability", c.augment_options.flip_probability);
    }
    get(in, "ce_mask_region_only", c.ce_mask_region_only);
    if (in.contains("network")) {
      const auto& n = in.at("network");
      if (n.is_string()) {
        c.network = NetworkProfile::by_name(n.get<std::string>());
      } else {
        get(n, "channel_divisor", c.network.channel_divisor);
        get(n, "num_scales", c.network.num_scales);
        get(n, "image_size", c.network.image_size);
      }
    }
    get(in, "checkpoint_every", c.checkpoint_every);
    get(in, "extractor_path", c.extractor_path);
    get(in, "extractor_seed", c.extractor_seed);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json(const json& in) { return from_json(in, TrainConfig{}); }

std::string TrainConfig::fingerprint() const {
  auto j = to_json();
  j.erase("max_steps");
  j.erase("checkpoint_every");
  return to_hex(fnv1a64(j.dump()));
}

LearningRates lr_at(std::int64_t epoch, const TrainConfig& config) {
  config.validate();
  if (epoch < 0) throw InvalidArgument("epoch must be >= 0");
  double factor = 1.0;
  if (epoch >= config.epochs) {
    factor = 0.0;
  } else if (epoch > config.decay_start_epoch) {
    factor = static_cast<double>(config.epochs - epoch) /
             static_cast<double>(config.epochs - config.decay_start_epoch);
  }
  return {config.lr_g * factor, config.lr_d * factor};
}

double StepRecord::loss(const std::string& name) const {
  for (const auto& [key, value] : losses)
    if (key == name) return value;
  throw InvalidArgument("step record has no loss '" + name + "'");
}

json StepRecord::to_json() const {
  json terms = json::object();
  for (const auto& [key, value] : losses) terms[key] = value;
  return {{"step", step},       {"epoch", epoch}, {"losses", terms},
          {"lr_g", lr_g},       {"lr_d", lr_d},   {"known_region_exact", known_region_exact}};
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

BatchSource::BatchSource(OutpaintDataset dataset, const TrainConfig& config)
    : dataset_(std::move(dataset)),
      batch_size_(std::min<std::int64_t>(config.batch_size,
                                         static_cast<std::int64_t>(dataset_.size()))),
      rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {
  if (dataset_.size() == 0) throw DatasetNotFound("training split is empty");
  options_.mask_fraction = config.mask_fraction;
  if (config.augment) options_.augment = config.augment_options;
  start_epoch();
}

std::int64_t BatchSource::steps_per_epoch() const {
  return static_cast<std::int64_t>(dataset_.size()) / batch_size_;
}

void BatchSource::start_epoch() {
  order_.resize(dataset_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

OutpaintBatch BatchSource::next() {
  if (cursor_ + static_cast<std::size_t>(batch_size_) > order_.size()) {
    ++epoch_;
    start_epoch();
  }
  std::vector<ImageSample> samples;
  std::vector<std::uint64_t> seeds;
  for (std::int64_t i = 0; i < batch_size_; ++i) {
    samples.push_back(dataset_.sample(order_[cursor_++]));
    seeds.push_back(rng_());
  }
  return make_batch(samples, seeds, options_);
}

std::string BatchSource::state() const {
  std::ostringstream out;
  out << epoch_ << ' ' << cursor_ << ' ' << order_.size();
  for (auto index : order_) out << ' ' << index;
  out << ' ' << rng_;
  return out.str();
}

void BatchSource::restore(const std::string& state) {
  std::istringstream in(state);
  std::int64_t epoch = 0;
  std::size_t cursor = 0, count = 0;
  if (!(in >> epoch >> cursor >> count) || count != dataset_.size() || cursor > count)
    throw CheckpointMismatch("batch source state does not match the dataset");
  std::vector<std::size_t> order(count);
  for (auto& index : order)
    if (!(in >> index) || index >= count) throw CheckpointMismatch("corrupt batch source state");
  std::mt19937_64 rng;
  if (!(in >> rng)) throw CheckpointMismatch("corrupt batch source rng state");
  epoch_ = epoch;
  cursor_ = cursor;
  order_ = std::move(order);
  rng_ = rng;
}

// ---------------------------------------------------------------------------
// Shared loop
// ---------------------------------------------------------------------------

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(salt)};
  std::mt19937_64 rng(sequence);
  return rng();
}

torch::Tensor keep_mask(const OutpaintBatch& batch, std::int64_t channels) {
  return (batch.mask > 0.5).expand({batch.size(), channels, batch.mask.size(2), batch.mask.size(3)});
}

bool known_region_matches(const torch::Tensor& composite, const torch::Tensor& masked_input,
                          const torch::Tensor& keep) {
  return torch::equal(torch::where(keep, composite, torch::zeros_like(composite)), masked_input);
}

}  // namespace

AdversarialTrainer::AdversarialTrainer(OutpaintDataset dataset, TrainConfig config)
    : config_((config.validate(), std::move(config))),
      num_classes_(dataset.num_classes()),
      source_(std::move(dataset), config_) {
  torch::manual_seed(config_.seed);
}

void AdversarialTrainer::create_optimizers() {
  auto adam = [&](torch::nn::Module& module, double lr) {
    return std::make_unique<torch::optim::Adam>(
        module.parameters(),
        torch::optim::AdamOptions(lr).betas({config_.adam_beta1, config_.adam_beta2}));
  };
  optimizer_g_ = adam(generator(), config_.lr_g);
  optimizer_d_ = adam(discriminator(), config_.lr_d);
}

void AdversarialTrainer::set_discriminator_trainable(bool trainable) {
  for (auto& parameter : discriminator().parameters()) parameter.requires_grad_(trainable);
}

void AdversarialTrainer::apply_learning_rates() {
  const auto rates = lr_at(std::min(source_.epoch(), config_.epochs), config_);
  for (auto& group : optimizer_g_->param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(rates.generator);
  for (auto& group : optimizer_d_->param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(rates.discriminator);
}

void AdversarialTrainer::check_finite(const Terms& terms, const OutpaintBatch& batch,
                                      const char* phase) const {
  bool finite = true;
  for (const auto& [name, value] : terms.values)
    finite = finite && std::isfinite(value.item<double>());
  if (finite) return;
  std::ostringstream message;
  message << name() << ": non-finite " << phase << " loss at step " << step_ << " (epoch "
          << source_.epoch() << ");";
  for (const auto& [name, value] : terms.values) message << ' ' << name << '=' << value.item<double>();
  message << "; batch:";
  for (const auto& id : batch.source_ids) message << ' ' << id;
  message << "; input range [" << batch.image.min().item<double>() << ", "
          << batch.image.max().item<double>() << "]";
  throw NonFiniteLoss(message.str());
}

bool AdversarialTrainer::finished() const {
  if (config_.max_steps > 0 && step_ >= config_.max_steps) return true;
  return step_ >= config_.epochs * source_.steps_per_epoch();
}

StepRecord AdversarialTrainer::step() {
  if (!optimizer_g_) throw std::logic_error("trainer optimizers were never created");
  auto batch = source_.next();
  apply_learning_rates();
  generator().train();
  discriminator().train();

  Terms d_terms;
  set_discriminator_trainable(true);
  for (std::int64_t i = 0; i < config_.d_steps_per_batch; ++i) {
    optimizer_d_->zero_grad();
    d_terms = discriminator_loss(batch);
    check_finite(d_terms, batch, "discriminator");
    d_terms.values.front().second.backward();
    optimizer_d_->step();
  }

  set_discriminator_trainable(false);
  optimizer_g_->zero_grad();
  auto g_terms = generator_loss(batch);
  check_finite(g_terms, batch, "generator");
  g_terms.values.front().second.backward();
  optimizer_g_->step();
  set_discriminator_trainable(true);

  StepRecord record;
  record.step = step_;
  record.epoch = source_.epoch();
  for (const auto& [name, value] : d_terms.values) record.losses.emplace_back(name, value.item<double>());
  for (const auto& [name, value] : g_terms.values) record.losses.emplace_back(name, value.item<double>());
  const auto rates = lr_at(std::min(source_.epoch(), config_.epochs), config_);
  record.lr_g = rates.generator;
  record.lr_d = rates.discriminator;
  record.known_region_exact = g_terms.known_region_exact;
  ++step_;
  return record;
}

std::vector<StepRecord> AdversarialTrainer::run(std::int64_t steps, std::ostream* log) {
  std::vector<StepRecord> records;
  for (std::int64_t i = 0; i < steps && !finished(); ++i) {
    records.push_back(step());
    if (log) *log << records.back().to_json().dump() << '\n' << std::flush;
  }
  return records;
}

void AdversarialTrainer::save_checkpoint(const fs::path& path) {
  CheckpointWriter writer;
  writer.add_module("generator", generator(), generator_fingerprint());
  writer.add_module("discriminator", discriminator(), discriminator_fingerprint());
  writer.add_optimizer("optimizer_g", *optimizer_g_);
  writer.add_optimizer("optimizer_d", *optimizer_d_);
  writer.set_string("trainer", name());
  writer.set_string("config", config_.to_json().dump());
  writer.set_string("config_fingerprint", config_.fingerprint());
  writer.set_int("num_classes", num_classes_);
  writer.set_int("step", step_);
  writer.set_int("epoch", source_.epoch());
  writer.set_string("batch_source", source_.state());
  writer.save(path);
}

void AdversarialTrainer::load_checkpoint(const fs::path& path) {
  CheckpointReader reader(path);
  if (reader.get_string("trainer") != name())
    throw CheckpointMismatch(path.string() + " was written by trainer '" +
                             reader.get_string("trainer") + "', not '" + name() + "'");
  if (reader.get_string("config_fingerprint") != config_.fingerprint())
    throw CheckpointMismatch(path.string() + " was written for a different training config");
  reader.load_module("generator", generator(), generator_fingerprint());
  reader.load_module("discriminator", discriminator(), discriminator_fingerprint());
  reader.load_optimizer("optimizer_g", *optimizer_g_);
  reader.load_optimizer("optimizer_d", *optimizer_d_);
  source_.restore(reader.get_string("batch_source"));
  step_ = reader.get_int("step");
}

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

namespace {

torch::Tensor stage1_input(const OutpaintBatch& batch) {
  return torch::cat({batch.masked_image, batch.masked_layout_onehot, batch.mask}, 1);
}

}  // namespace

Stage1Trainer::Stage1Trainer(OutpaintDataset dataset, TrainConfig config)
    : AdversarialTrainer(std::move(dataset), std::move(config)) {
  if (config_.ablation_mode != AblationMode::full)
    throw InvalidArgument("ablation baselines train with BaselineTrainer");
  generator_ = build_generator_seg(generator_seg_spec(num_classes_, config_.network),
                                   derive_seed(config_.seed, 1));
  discriminator_ = build_discriminator(discriminator_spec(num_classes_ + 3 + 1, config_.network),
                                       derive_seed(config_.seed, 2));
  create_optimizers();
}

namespace {

// where(M, S_masked, softmax(logits)): soft layout with the known region copied.
torch::Tensor composite_layout(const OutpaintBatch& batch, const torch::Tensor& logits) {
  auto keep = keep_mask(batch, logits.size(1));
  return torch::where(keep, batch.masked_layout_onehot, torch::softmax(logits, 1));
}

}  // namespace

AdversarialTrainer::Terms Stage1Trainer::discriminator_loss(const OutpaintBatch& batch) {
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = composite_layout(batch, generator_->forward(stage1_input(batch)));
  }
  auto condition = torch::cat({batch.masked_image, batch.mask}, 1);
  auto real_logits = discriminator_->forward(torch::cat({batch.layout_onehot, condition}, 1));
  auto fake_logits = discriminator_->forward(torch::cat({fake, condition}, 1));
  return {{{"d_loss", hinge_d_loss(real_logits, fake_logits)}}, true};
}

AdversarialTrainer::Terms Stage1Trainer::generator_loss(const OutpaintBatch& batch) {
  auto logits = generator_->forward(stage1_input(batch));
  auto fake = composite_layout(batch, logits);
  auto condition = torch::cat({batch.masked_image, batch.mask}, 1);
  auto adversarial = hinge_g_loss(discriminator_->forward(torch::cat({fake, condition}, 1)));
  std::optional<torch::Tensor> region;
  if (config_.ce_mask_region_only) region = batch.mask < 0.5;
  auto losses = stage1_total(logits, batch.labels, adversarial, config_.loss_weights, region);
  Terms terms{{{"g_total", losses.total}, {"ce", losses.ce}, {"g_adv", losses.adversarial}},
              true};
  terms.known_region_exact = known_region_matches(
      fake.detach(), batch.masked_layout_onehot, keep_mask(batch, fake.size(1)));
  return terms;
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

Stage2Trainer::Stage2Trainer(OutpaintDataset dataset, TrainConfig config,
                             std::shared_ptr<FeatureExtractor> extractor)
    : AdversarialTrainer(std::move(dataset), std::move(config)), extractor_(std::move(extractor)) {
  if (config_.ablation_mode != AblationMode::full)
    throw InvalidArgument("ablation baselines train with BaselineTrainer");
  if (!extractor_) throw InvalidArgument("stage 2 needs a feature extractor");
  generator_ = build_generator_img(generator_img_spec(num_classes_, config_.network),
                                   derive_seed(config_.seed, 3));
  discriminator_ = build_discriminator(discriminator_spec(3 + num_classes_, config_.network),
                                       derive_seed(config_.seed, 4));
  create_optimizers();
}

namespace {

struct Stage2Forward {
  torch::Tensor generated;
  torch::Tensor composite;
};

// Ground-truth layouts stand in for the stage-1 output during training.
Stage2Forward stage2_forward(GeneratorImg& generator, const OutpaintBatch& batch) {
  auto input = torch::cat({batch.masked_image, batch.layout_onehot, batch.mask}, 1);
  auto condition = torch::cat({batch.layout_onehot, batch.mask}, 1);
  auto generated = generator->forward(input, condition);
  auto composite = torch::where(keep_mask(batch, 3), batch.masked_image, generated);
  return {generated, composite};
}

}  // namespace

AdversarialTrainer::Terms Stage2Trainer::discriminator_loss(const OutpaintBatch& batch) {
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = stage2_forward(generator_, batch).composite;
  }
  auto real_logits = discriminator_->forward(torch::cat({batch.image, batch.layout_onehot}, 1));
  auto fake_logits = discriminator_->forward(torch::cat({fake, batch.layout_onehot}, 1));
  return {{{"d_loss", hinge_d_loss(real_logits, fake_logits)}}, true};
}

AdversarialTrainer::Terms Stage2Trainer::generator_loss(const OutpaintBatch& batch) {
  auto out = stage2_forward(generator_, batch);
  auto adversarial =
      hinge_g_loss(discriminator_->forward(torch::cat({out.composite, batch.layout_onehot}, 1)));
  auto losses =
      stage2_total(out.generated, batch.image, adversarial, config_.loss_weights, *extractor_);
  Terms terms{{{"g_total", losses.total},
               {"l1", losses.l1},
               {"perceptual", losses.perceptual},
               {"g_adv", losses.adversarial}},
              true};
  terms.known_region_exact =
      known_region_matches(out.composite.detach(), batch.masked_image, keep_mask(batch, 3));
  return terms;
}

// ---------------------------------------------------------------------------
// Single-stage baselines
// ---------------------------------------------------------------------------

BaselineTrainer::BaselineTrainer(OutpaintDataset dataset, TrainConfig config,
                                 std::shared_ptr<FeatureExtractor> extractor)
    : AdversarialTrainer(std::move(dataset), std::move(config)), extractor_(std::move(extractor)) {
  if (config_.ablation_mode == AblationMode::full)
    throw InvalidArgument("BaselineTrainer needs ablation mode noseg or segconcat");
  if (!extractor_) throw InvalidArgument("baseline needs a feature extractor");
  const std::int64_t in_channels =
      config_.ablation_mode == AblationMode::noseg ? 3 + 1 : 3 + num_classes_ + 1;
  generator_ = build_generator_seg(baseline_generator_spec(in_channels, config_.network),
                                   derive_seed(config_.seed, 5));
  discriminator_ = build_discriminator(discriminator_spec(3 + in_channels, config_.network),
                                       derive_seed(config_.seed, 6));
  create_optimizers();
}

torch::Tensor BaselineTrainer::generator_input(const OutpaintBatch& batch) const {
  if (config_.ablation_mode == AblationMode::noseg)
    return torch::cat({batch.masked_image, batch.mask}, 1);
  return torch::cat({batch.masked_image, batch.masked_layout_onehot, batch.mask}, 1);
}

AdversarialTrainer::Terms BaselineTrainer::discriminator_loss(const OutpaintBatch& batch) {
  auto input = generator_input(batch);
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = torch::where(keep_mask(batch, 3), batch.masked_image, generator_->forward(input));
  }
  auto real_logits = discriminator_->forward(torch::cat({batch.image, input}, 1));
  auto fake_logits = discriminator_->forward(torch::cat({fake, input}, 1));
  return {{{"d_loss", hinge_d_loss(real_logits, fake_logits)}}, true};
}

AdversarialTrainer::Terms BaselineTrainer::generator_loss(const OutpaintBatch& batch) {
  auto input = generator_input(batch);
  auto generated = generator_->forward(input);
  auto composite = torch::where(keep_mask(batch, 3), batch.masked_image, generated);
  auto adversarial = hinge_g_loss(discriminator_->forward(torch::cat({composite, input}, 1)));
  auto losses = stage2_total(generated, batch.image, adversarial, config_.loss_weights, *extractor_);
  Terms terms{{{"g_total", losses.total},
               {"l1", losses.l1},
               {"perceptual", losses.perceptual},
               {"g_adv", losses.adversarial}},
              true};
  terms.known_region_exact =
      known_region_matches(composite.detach(), batch.masked_image, keep_mask(batch, 3));
  return terms;
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

std::shared_ptr<FeatureExtractor> make_extractor(const TrainConfig& config) {
  if (config.extractor_path.empty())
    return std::make_shared<RandomConvExtractor>(config.extractor_seed);
  return std::make_shared<ScriptedFeatureExtractor>(config.extractor_path);
}

std::unique_ptr<AdversarialTrainer> make_trainer(Stage stage, OutpaintDataset dataset,
                                                 const TrainConfig& config) {
  if (config.ablation_mode != AblationMode::full)
    return std::make_unique<BaselineTrainer>(std::move(dataset), config, make_extractor(config));
  if (stage == Stage::layout) return std::make_unique<Stage1Trainer>(std::move(dataset), config);
  return std::make_unique<Stage2Trainer>(std::move(dataset), config, make_extractor(config));
}

namespace {

TrainSummary train_to_completion(Stage stage, OutpaintDataset dataset, const TrainConfig& config,
                                 const TrainOutputs& outputs) {
  auto trainer = make_trainer(stage, std::move(dataset), config);
  fs::create_directories(outputs.directory);
  std::ofstream log_file(outputs.directory / (trainer->name() + "_log.jsonl"), std::ios::trunc);
  if (!log_file) throw std::runtime_error("cannot write the training log in " +
                                          outputs.directory.string());
  TrainSummary summary;
  while (!trainer->finished()) {
    auto record = trainer->step();
    const auto line = record.to_json().dump();
    log_file << line << '\n' << std::flush;
    if (outputs.log) *outputs.log << line << '\n' << std::flush;
    summary.records.push_back(std::move(record));
    if (config.checkpoint_every > 0 && trainer->steps_done() % config.checkpoint_every == 0) {
      auto path = outputs.directory /
                  (trainer->name() + "_step" + std::to_string(trainer->steps_done()) + ".pt");
      trainer->save_checkpoint(path);
      summary.checkpoints.push_back(path);
    }
  }
  auto final_path = outputs.directory / (trainer->name() + "_final.pt");
  trainer->save_checkpoint(final_path);
  summary.checkpoints.push_back(final_path);
  return summary;
}

}  // namespace

TrainSummary train_stage1(OutpaintDataset dataset, const TrainConfig& config,
                          const TrainOutputs& outputs) {
  return train_to_completion(Stage::layout, std::move(dataset), config, outputs);
}

TrainSummary train_stage2(OutpaintDataset dataset, const TrainConfig& config,
                          const TrainOutputs& outputs) {
  return train_to_completion(Stage::image, std::move(dataset), config, outputs);
}

}  // namespace outpaint
