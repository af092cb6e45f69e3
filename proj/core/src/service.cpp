#include "outpaint/service.hpp"

#include <chrono>
#include <cstdlib>
#include <random>
#include <sstream>

#include <httplib.h>
#include <torch/torch.h>

#include "outpaint/errors.hpp"
#include "outpaint/image_io.hpp"
#include "outpaint/util.hpp"

namespace outpaint {
namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  return to_hex(rng()) + to_hex(rng());
}

ServiceResponse error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : fallback;
}

// Layout the client supplied for the cropped image or the whole canvas.
SemanticLayout canvas_layout(const std::string& png, std::int64_t height, std::int64_t width,
                             std::int64_t known, std::int64_t classes) {
  auto labels = decode_label_png(png);
  if (labels.size(0) != height || (labels.size(1) != width && labels.size(1) != known))
    throw InvalidArgument("layout is " + std::to_string(labels.size(0)) + "x" +
                          std::to_string(labels.size(1)) + ", expected " + std::to_string(height) +
                          "x" + std::to_string(known) + " or " + std::to_string(height) + "x" +
                          std::to_string(width));
  if (labels.size(1) == known && known != width) {
    auto padded = torch::zeros({height, width}, torch::kLong);
    padded.slice(1, 0, known).copy_(labels);
    labels = padded;
  }
  return SemanticLayout(labels, classes);
}

OutpaintRequest session_request(const EditSession& session, std::int64_t classes) {
  auto cropped = decode_rgb_png(session.input_png);
  auto request = OutpaintRequest::from_cropped(cropped, session.extension_fraction, session.id);
  if (!session.input_layout_png.empty())
    request.layout = canvas_layout(session.input_layout_png, request.image.size(1),
                                   request.image.size(2), cropped.size(2), classes);
  return request;
}

template <typename Handler>
ServiceResponse guarded(Handler&& handler) {
  try {
    return handler();
  } catch (const InvalidArgument& e) {
    return error(422, e.what());
  } catch (const SegmentationFailed& e) {
    return error(422, e.what());
  } catch (const CheckpointMismatch& e) {
    return error(409, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

}  // namespace

ServiceOptions ServiceOptions::from_env() {
  ServiceOptions options;
  const auto listen = env_or("OUTPAINT_LISTEN", "");
  if (!listen.empty()) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("OUTPAINT_LISTEN must be host:port");
    options.host = listen.substr(0, colon);
    try {
      options.port = std::stoi(listen.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("OUTPAINT_LISTEN has a malformed port: " + listen);
    }
    if (options.port < 0 || options.port > 65535)
      throw InvalidArgument("OUTPAINT_LISTEN port out of range: " + listen);
  }
  options.session_db = env_or("OUTPAINT_SESSION_DB", options.session_db);
  options.seg_checkpoint = env_or("OUTPAINT_SEG_CHECKPOINT", options.seg_checkpoint);
  options.img_checkpoint = env_or("OUTPAINT_IMG_CHECKPOINT", options.img_checkpoint);
  options.dataset = env_or("OUTPAINT_DATASET", options.dataset);
  options.layout_dir = env_or("OUTPAINT_LAYOUT_DIR", options.layout_dir);
  return options;
}

std::string image_hash(const torch::Tensor& pixels) { return tensor_digest(to_rgb8(pixels)); }

OutpaintService::OutpaintService(OutpaintModels models, std::shared_ptr<SessionStore> store)
    : models_(std::move(models)), store_(std::move(store)) {
  models_.validate();
  if (!store_) throw InvalidArgument("service needs a session store");
}

OutpaintService::~OutpaintService() { stop(); }

std::shared_ptr<std::mutex> OutpaintService::session_lock(const std::string& id) {
  std::lock_guard lock(locks_mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

ServiceResponse OutpaintService::create_session(const std::string& image_png,
                                                const std::optional<std::string>& layout_png,
                                                double extension_fraction) {
  return guarded([&]() -> ServiceResponse {
    if (!(extension_fraction > 0.0 && extension_fraction < 1.0))
      return error(422, "ratio must lie in (0, 1)");
    auto cropped = decode_rgb_png(image_png);
    auto request = OutpaintRequest::from_cropped(cropped, extension_fraction);
    const auto classes = models_.layout->num_classes();
    if (layout_png)
      request.layout = canvas_layout(*layout_png, request.image.size(1), request.image.size(2),
                                     cropped.size(2), classes);

    EditSession session;
    session.id = new_session_id();
    request.source_id = session.id;
    auto result = outpaint(request, models_);

    session.model_fingerprint = models_.fingerprint();
    session.dataset = models_.profile.name;
    session.extension_fraction = extension_fraction;
    session.input_png = image_png;
    session.input_layout_png = layout_png.value_or(std::string());
    session.current_layout_png = encode_label_png(result.layout.labels());
    session.initial_image_png = encode_rgb_png(result.image);
    session.initial_image_hash = image_hash(result.image);
    session.created_at = session.updated_at = now_ms();
    store_->create(session);

    auto body = session.to_json();
    body["out_of_distribution"] = request.out_of_distribution();
    body["timings_ms"] = {{"stage1", result.stage1_ms},
                          {"stage2", result.stage2_ms},
                          {"total", result.total_ms}};
    return {201, body};
  });
}

ServiceResponse OutpaintService::get_session(const std::string& id) const {
  return guarded([&]() -> ServiceResponse {
    auto session = store_->load(id);
    if (!session) return error(404, "unknown session " + id);
    return {200, session->to_json()};
  });
}

ServiceResponse OutpaintService::submit_layout(const std::string& id,
                                               const std::string& layout_png) {
  auto lock = session_lock(id);
  std::lock_guard guard(*lock);
  return guarded([&]() -> ServiceResponse {
    auto session = store_->load(id);
    if (!session) return error(404, "unknown session " + id);
    if (session->model_fingerprint != models_.fingerprint())
      return error(409, "session " + id + " was created with different model weights");
    const auto classes = models_.layout->num_classes();
    auto request = session_request(*session, classes);
    torch::Tensor labels;
    try {
      labels = decode_label_png(layout_png);
    } catch (const InvalidArgument& e) {
      return error(422, e.what());
    }
    if (labels.size(0) != request.image.size(1) || labels.size(1) != request.image.size(2))
      return error(422, "layout is " + std::to_string(labels.size(0)) + "x" +
                            std::to_string(labels.size(1)) + ", the canvas is " +
                            std::to_string(request.image.size(1)) + "x" +
                            std::to_string(request.image.size(2)));
    SemanticLayout edited(labels, classes);
    auto result = regenerate_with_layout(request, edited, models_);

    HistoryEntry entry{encode_label_png(edited.labels()), encode_rgb_png(result.image),
                       image_hash(result.image), now_ms()};
    store_->append(id, entry);
    return {200,
            {{"session_id", id},
             {"image_png", base64_encode(entry.image_png)},
             {"image_hash", entry.image_hash},
             {"history_length", session->history.size() + 1},
             {"timings_ms", {{"stage2", result.stage2_ms}, {"total", result.total_ms}}}}};
  });
}

ServiceResponse OutpaintService::palette(const std::string& dataset) const {
  try {
    const auto profile = DatasetProfile::by_name(dataset);
    return {200, profile.palette_json()};
  } catch (const InvalidArgument& e) {
    return error(404, e.what());
  }
}

void OutpaintService::install_routes() {
  auto& server = *server_;
  auto reply = [](httplib::Response& res, const ServiceResponse& response) {
    res.status = response.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(response.body.dump(), "application/json");
  };
  auto is_json = [](const httplib::Request& req) {
    return req.get_header_value("Content-Type").rfind("application/json", 0) == 0;
  };

  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/v1/health", [reply, this](const httplib::Request&, httplib::Response& res) {
    reply(res, {200, {{"status", "ok"}, {"model_fingerprint", models_.fingerprint()}}});
  });

  server.Post("/v1/sessions", [reply, is_json, this](const httplib::Request& req,
                                                     httplib::Response& res) {
    std::string image;
    std::optional<std::string> layout;
    double ratio = 0.25;
    try {
      if (req.has_param("ratio")) ratio = std::stod(req.get_param_value("ratio"));
      if (req.is_multipart_form_data()) {
        if (!req.has_file("image")) return reply(res, error(422, "multipart field 'image' missing"));
        image = req.get_file_value("image").content;
        if (req.has_file("layout")) layout = req.get_file_value("layout").content;
        if (req.has_file("ratio")) ratio = std::stod(req.get_file_value("ratio").content);
      } else if (is_json(req)) {
        auto body = nlohmann::json::parse(req.body);
        image = base64_decode(body.at("image_png").get<std::string>());
        if (body.contains("layout_png") && !body["layout_png"].is_null())
          layout = base64_decode(body["layout_png"].get<std::string>());
        if (body.contains("ratio")) ratio = body["ratio"].get<double>();
      } else {
        image = req.body;
      }
    } catch (const std::exception& e) {
      return reply(res, error(422, std::string("malformed request: ") + e.what()));
    }
    reply(res, create_session(image, layout, ratio));
  });

  server.Get(R"(/v1/sessions/([^/]+))", [reply, this](const httplib::Request& req,
                                                      httplib::Response& res) {
    reply(res, get_session(req.matches[1]));
  });

  server.Post(R"(/v1/sessions/([^/]+)/layout)", [reply, is_json, this](
                                                    const httplib::Request& req,
                                                    httplib::Response& res) {
    std::string layout = req.body;
    try {
      if (req.is_multipart_form_data()) {
        if (!req.has_file("layout")) return reply(res, error(422, "multipart field 'layout' missing"));
        layout = req.get_file_value("layout").content;
      } else if (is_json(req)) {
        layout = base64_decode(nlohmann::json::parse(req.body).at("layout_png").get<std::string>());
      }
    } catch (const std::exception& e) {
      return reply(res, error(422, std::string("malformed request: ") + e.what()));
    }
    reply(res, submit_layout(req.matches[1], layout));
  });

  server.Get(R"(/v1/palette/([^/]+))", [reply, this](const httplib::Request& req,
                                                     httplib::Response& res) {
    reply(res, palette(req.matches[1]));
  });
}

int OutpaintService::start(const std::string& host, int port) {
  if (server_) throw std::logic_error("service already started");
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) bound = 0;
  } else if (!server_->bind_to_port(host, port)) {
    bound = 0;
  }
  if (bound <= 0) {
    server_.reset();
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void OutpaintService::serve(const std::string& host, int port) {
  if (server_) throw std::logic_error("service already started");
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  if (!server_->listen(host, port))
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void OutpaintService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace outpaint
