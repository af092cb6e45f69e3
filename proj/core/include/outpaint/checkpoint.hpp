#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <torch/nn/module.h>
#include <torch/optim/optimizer.h>
#include <torch/serialize/input-archive.h>
#include <torch/serialize/output-archive.h>

namespace outpaint {

// Checkpoint file: a torch archive holding, per stored network, a nested
// archive of its named parameters and buffers plus a "<name>.fingerprint"
// string identifying the spec it was built from. Loading compares the
// fingerprint before touching any tensor.

class CheckpointWriter {
 public:
  void add_module(const std::string& name, const torch::nn::Module& module,
                  const std::string& fingerprint);
  void add_optimizer(const std::string& name, const torch::optim::Optimizer& optimizer);
  void set_string(const std::string& key, const std::string& value);
  void set_int(const std::string& key, std::int64_t value);
  /// Writes atomically (temporary file + rename).
  void save(const std::filesystem::path& path);

 private:
  torch::serialize::OutputArchive archive_;
};

class CheckpointReader {
 public:
  /// Throws CheckpointNotFound when missing or unreadable.
  explicit CheckpointReader(const std::filesystem::path& path);

  /// Throws CheckpointMismatch when the stored fingerprint differs or the
  /// module is absent.
  void load_module(const std::string& name, torch::nn::Module& module,
                   const std::string& expected_fingerprint);
  void load_optimizer(const std::string& name, torch::optim::Optimizer& optimizer);
  std::string fingerprint(const std::string& name);
  bool has(const std::string& key);
  std::string get_string(const std::string& key);
  std::int64_t get_int(const std::string& key);

 private:
  std::filesystem::path path_;
  torch::serialize::InputArchive archive_;
};

}  // namespace outpaint
