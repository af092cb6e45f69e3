#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "outpaint/pipeline.hpp"
#include "outpaint/session_store.hpp"

namespace httplib {
class Server;
}

namespace outpaint {

/// Settings read from OUTPAINT_LISTEN (host:port), OUTPAINT_SESSION_DB,
/// OUTPAINT_SEG_CHECKPOINT, OUTPAINT_IMG_CHECKPOINT, OUTPAINT_DATASET and
/// OUTPAINT_LAYOUT_DIR (precomputed layouts; constant segmenter otherwise).
struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string session_db = "sessions.db";
  std::string seg_checkpoint;
  std::string img_checkpoint;
  std::string dataset = "toy";
  std::string layout_dir;

  static ServiceOptions from_env();
};

/// HTTP status plus JSON body.
struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Editing service. Handlers are transport-independent; serve()/start() bind
/// them under /v1:
///
///   POST /v1/sessions                 PNG image (raw body or multipart
///                                     "image" [+ "layout"]), ?ratio=
///   GET  /v1/sessions/{id}
///   POST /v1/sessions/{id}/layout     PNG label map of the full canvas
///   GET  /v1/palette/{dataset}
///
/// Writes to one session are serialised; different sessions proceed in
/// parallel against the shared read-only models.
class OutpaintService {
 public:
  OutpaintService(OutpaintModels models, std::shared_ptr<SessionStore> store);
  ~OutpaintService();

  ServiceResponse create_session(const std::string& image_png,
                                 const std::optional<std::string>& layout_png,
                                 double extension_fraction);
  ServiceResponse get_session(const std::string& id) const;
  ServiceResponse submit_layout(const std::string& id, const std::string& layout_png);
  ServiceResponse palette(const std::string& dataset) const;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called from elsewhere.
  void serve(const std::string& host, int port);
  void stop();

  const OutpaintModels& models() const { return models_; }

 private:
  std::shared_ptr<std::mutex> session_lock(const std::string& id);
  void install_routes();

  OutpaintModels models_;
  std::shared_ptr<SessionStore> store_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

/// Hash a client can use to cache I_out: digest of the 8-bit RGB raster.
std::string image_hash(const torch::Tensor& pixels);

}  // namespace outpaint
