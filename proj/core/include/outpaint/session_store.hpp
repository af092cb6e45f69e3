#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

struct sqlite3;

namespace outpaint {

struct HistoryEntry {
  std::string layout_png;  // edited label map as submitted
  std::string image_png;   // regenerated I_out'
  std::string image_hash;
  std::int64_t created_at = 0;
};

/// One interactive editing session. `history` is append-only.
struct EditSession {
  std::string id;
  std::string model_fingerprint;
  std::string dataset;
  double extension_fraction = 0.25;
  std::string input_png;
  std::string input_layout_png;  // empty when the segmenter produced it
  std::string current_layout_png;
  std::string initial_image_png;
  std::string initial_image_hash;
  std::vector<HistoryEntry> history;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;

  /// Client-facing view with base64 payloads.
  nlohmann::json to_json() const;
};

/// Sessions persisted in an embedded SQLite file keyed by session id; rasters
/// are stored as PNG blobs. All members may be called concurrently.
class SessionStore {
 public:
  /// ":memory:" keeps everything in process.
  explicit SessionStore(const std::string& database);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  void create(const EditSession& session);
  std::optional<EditSession> load(const std::string& id) const;
  /// Appends to history and makes `entry.layout_png` the current layout.
  void append(const std::string& id, const HistoryEntry& entry);
  std::size_t size() const;

 private:
  void exec(const char* sql) const;

  mutable std::mutex mutex_;
  sqlite3* db_ = nullptr;
};

}  // namespace outpaint
