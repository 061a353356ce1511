#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "haifit/inference.hpp"

namespace httplib {
class Server;
}

namespace haifit {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  std::filesystem::path checkpoint;
  std::size_t max_bytes = 8u << 20;
  /// Requests handled concurrently; inference itself is serialized.
  int max_in_flight = 4;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

/// JSON error body {"error": code, "message": ...}. Codes: bad_image (400),
/// not_found (404), too_large (413), internal (500), no_model (503).
HttpResponse error_response(int status, const std::string& code, const std::string& message);

/// Request handling without the transport, so it can be tested directly.
class InferenceService {
 public:
  enum class Status { Loading, Ready, Failed };

  explicit InferenceService(ServiceConfig config);

  /// Loads the configured checkpoint; on failure the status becomes Failed
  /// and the error propagates.
  void load();
  void install(LoadedModel model);

  Status status() const { return status_.load(); }
  const ServiceConfig& config() const { return config_; }

  HttpResponse handle_generate(std::string_view body);
  HttpResponse handle_health() const;

 private:
  ServiceConfig config_;
  std::chrono::steady_clock::time_point started_;
  std::atomic<Status> status_{Status::Loading};
  std::shared_ptr<const LoadedModel> model_;
  mutable std::mutex model_mutex_;
  std::mutex inference_mutex_;
  std::string failure_;
};

/// HTTP transport: POST /api/generate, GET /api/health.
class HttpServer {
 public:
  explicit HttpServer(InferenceService& service);
  ~HttpServer();

  /// Binds and returns the port in use.
  int bind();
  /// Serves until stop(); call after bind().
  void listen();
  /// Blocks until listen() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  InferenceService& service_;
  std::unique_ptr<httplib::Server> server_;
};

/// Binds, loads the checkpoint in the background and serves. Returns
/// nonzero if binding or loading fails.
int run_service(const ServiceConfig& config);

}  // namespace haifit
