#include "haifit/server.hpp"

#include <httplib.h>

#include "haifit/image_io.hpp"

#include <iostream>
#include <json.hpp>
#include <thread>

namespace haifit {

HttpResponse error_response(int status, const std::string& code, const std::string& message) {
  return {status, "application/json", nlohmann::json{{"error", code}, {"message", message}}.dump(), {}};
}

InferenceService::InferenceService(ServiceConfig config)
    : config_(std::move(config)), started_(std::chrono::steady_clock::now()) {}

void InferenceService::load() {
  try {
    install(load_model(config_.checkpoint));
  } catch (const std::exception& e) {
    std::lock_guard lock(model_mutex_);
    failure_ = e.what();
    status_ = Status::Failed;
    throw;
  }
}

void InferenceService::install(LoadedModel model) {
  auto shared = std::make_shared<const LoadedModel>(std::move(model));
  std::lock_guard lock(model_mutex_);
  model_ = std::move(shared);
  status_ = Status::Ready;
}

HttpResponse InferenceService::handle_generate(std::string_view body) {
  if (body.size() > config_.max_bytes) {
    return error_response(413, "too_large",
                          "body has " + std::to_string(body.size()) + " bytes, limit " + std::to_string(config_.max_bytes));
  }
  std::shared_ptr<const LoadedModel> model;
  {
    std::lock_guard lock(model_mutex_);
    model = model_;
  }
  if (!model) return error_response(503, "no_model", "model is not loaded");
  Image8 sketch;
  try {
    sketch = decode_png(body);
  } catch (const Error& e) {
    return error_response(400, "bad_image", e.what());
  }
  try {
    const auto t0 = std::chrono::steady_clock::now();
    std::string png;
    {
      std::lock_guard lock(inference_mutex_);
      png = encode_png(generate_image(model->model, sketch));
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3f", ms);
    return {200, "image/png", std::move(png), {{"X-Model-Fingerprint", model->fingerprint}, {"X-Inference-Ms", timing}}};
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

HttpResponse InferenceService::handle_health() const {
  nlohmann::json j;
  const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  std::shared_ptr<const LoadedModel> model;
  std::string failure;
  {
    std::lock_guard lock(model_mutex_);
    model = model_;
    failure = failure_;
  }
  switch (status_.load()) {
    case Status::Loading: j["status"] = "loading"; break;
    case Status::Ready: j["status"] = "ready"; break;
    case Status::Failed: j["status"] = "failed"; j["message"] = failure; break;
  }
  j["uptime_s"] = uptime;
  if (model) {
    const auto& m = model->model;
    j["fingerprint"] = model->fingerprint;
    j["schedule"] = m.config().schedule.levels();
    j["finest_resolution"] = m.config().schedule.finest();
    j["active_levels"] = m.active_levels();
    j["output_resolution"] = m.active_resolution();
  } else {
    j["fingerprint"] = nullptr;
    j["schedule"] = nullptr;
    j["finest_resolution"] = nullptr;
    j["active_levels"] = nullptr;
    j["output_resolution"] = nullptr;
  }
  return {200, "application/json", j.dump(), {}};
}

namespace {

void send(const HttpResponse& r, httplib::Response& res) {
  res.status = r.status;
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  res.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(InferenceService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  const int threads = std::max(1, service_.config().max_in_flight);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(std::size_t(threads)); };
  server_->set_payload_max_length(service_.config().max_bytes);
  server_->Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
    send(service_.handle_generate(req.body), res);
  });
  server_->Get("/api/health",
               [this](const httplib::Request&, httplib::Response& res) { send(service_.handle_health(), res); });
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    switch (res.status) {
      case 413: send(error_response(413, "too_large", "request body exceeds the limit"), res); break;
      case 404: send(error_response(404, "not_found", "no such endpoint"), res); break;
      default:
        if (res.status >= 500) send(error_response(res.status, "internal", "server error"), res);
        else send(error_response(res.status, "bad_request", "malformed request"), res);
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  const auto& c = service_.config();
  if (c.port == 0) {
    const int port = server_->bind_to_any_port(c.host);
    if (port < 0) throw Error(ErrorKind::Io, "cannot bind " + c.host);
    return port;
  }
  if (!server_->bind_to_port(c.host, c.port)) {
    throw Error(ErrorKind::Io, "cannot bind " + c.host + ":" + std::to_string(c.port));
  }
  return c.port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

int run_service(const ServiceConfig& config) {
  InferenceService service(config);
  HttpServer server(service);
  int port = 0;
  try {
    port = server.bind();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cout << "listening on " << config.host << ':' << port << std::endl;
  int rc = 0;
  std::thread loader([&] {
    try {
      service.load();
      std::cout << "model ready: " << config.checkpoint.string() << std::endl;
    } catch (const std::exception& e) {
      std::cerr << "error: cannot load checkpoint: " << e.what() << std::endl;
      rc = 1;
      server.wait_until_ready();
      server.stop();
    }
  });
  server.listen();
  loader.join();
  return rc;
}

}  // namespace haifit
