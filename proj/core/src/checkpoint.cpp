#include "outpaint/checkpoint.hpp"

#include <torch/serialize.h>
#include <torch/torch.h>

#include "outpaint/errors.hpp"

namespace fs = std::filesystem;

namespace outpaint {

void CheckpointWriter::add_module(const std::string& name, const torch::nn::Module& module,
                                  const std::string& fingerprint) {
  torch::serialize::OutputArchive nested;
  for (const auto& item : module.named_parameters(true)) nested.write(item.key(), item.value());
  for (const auto& item : module.named_buffers(true))
    nested.write(item.key(), item.value(), /*is_buffer=*/true);
  archive_.write(name, nested);
  archive_.write(name + ".fingerprint", c10::IValue(fingerprint));
}

void CheckpointWriter::add_optimizer(const std::string& name,
                                     const torch::optim::Optimizer& optimizer) {
  torch::serialize::OutputArchive nested;
  optimizer.save(nested);
  archive_.write(name, nested);
}

void CheckpointWriter::set_string(const std::string& key, const std::string& value) {
  archive_.write(key, c10::IValue(value));
}

void CheckpointWriter::set_int(const std::string& key, std::int64_t value) {
  archive_.write(key, c10::IValue(value));
}

void CheckpointWriter::save(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto temporary = path;
  temporary += ".partial";
  archive_.save_to(temporary.string());
  fs::rename(temporary, path);
}

CheckpointReader::CheckpointReader(const fs::path& path) : path_(path) {
  if (!fs::is_regular_file(path)) throw CheckpointNotFound("checkpoint not found: " + path.string());
  try {
    archive_.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointNotFound("unreadable checkpoint " + path.string() + ": " +
                             e.what_without_backtrace());
  }
}

std::string CheckpointReader::fingerprint(const std::string& name) {
  c10::IValue value;
  if (!archive_.try_read(name + ".fingerprint", value) || !value.isString())
    throw CheckpointMismatch(path_.string() + " holds no network '" + name + "'");
  return value.toStringRef();
}

void CheckpointReader::load_module(const std::string& name, torch::nn::Module& module,
                                   const std::string& expected_fingerprint) {
  const auto stored = fingerprint(name);
  if (stored != expected_fingerprint)
    throw CheckpointMismatch("network '" + name + "' in " + path_.string() +
                             " was built from a different architecture (stored " + stored +
                             ", expected " + expected_fingerprint + ")");
  torch::serialize::InputArchive nested;
  if (!archive_.try_read(name, nested))
    throw CheckpointMismatch(path_.string() + " holds no weights for '" + name + "'");
  torch::NoGradGuard no_grad;
  auto restore = [&](const std::string& key, torch::Tensor& target, bool is_buffer) {
    torch::Tensor value;
    if (!nested.try_read(key, value, is_buffer))
      throw CheckpointMismatch("'" + name + "' lacks tensor " + key);
    if (value.sizes() != target.sizes())
      throw CheckpointMismatch("'" + name + "' tensor " + key + " has the wrong shape");
    target.copy_(value);
  };
  for (auto& item : module.named_parameters(true)) restore(item.key(), item.value(), false);
  for (auto& item : module.named_buffers(true)) restore(item.key(), item.value(), true);
}

void CheckpointReader::load_optimizer(const std::string& name, torch::optim::Optimizer& optimizer) {
  torch::serialize::InputArchive nested;
  if (!archive_.try_read(name, nested))
    throw CheckpointMismatch(path_.string() + " holds no optimizer state '" + name + "'");
  optimizer.load(nested);
}

bool CheckpointReader::has(const std::string& key) {
  c10::IValue value;
  if (archive_.try_read(key, value)) return true;
  torch::serialize::InputArchive nested;
  return archive_.try_read(key, nested);
}

std::string CheckpointReader::get_string(const std::string& key) {
  c10::IValue value;
  if (!archive_.try_read(key, value) || !value.isString())
    throw CheckpointMismatch(path_.string() + " lacks string entry '" + key + "'");
  return value.toStringRef();
}

std::int64_t CheckpointReader::get_int(const std::string& key) {
  c10::IValue value;
  if (!archive_.try_read(key, value) || !value.isInt())
    throw CheckpointMismatch(path_.string() + " lacks integer entry '" + key + "'");
  return value.toInt();
}

}  // namespace outpaint
