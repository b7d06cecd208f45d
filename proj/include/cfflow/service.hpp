#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfflow/bundle.hpp"

namespace cfflow {

inline constexpr std::size_t kMaxRequestN = 1000;

struct HttpReply {
  int status = 200;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

// Request handling over one read-only bundle. Handlers are plain functions of
// the request so they can be exercised without sockets.
//
//   GET  /healthz   200 once loaded, 503 while loading or after a failed load
//   GET  /schema    features, classes, trained p values and masks
//   POST /classify  {"instance": {...}} -> probabilities and argmax
//   POST /generate  GenerateRequest -> GenerateResponse
//
// With a pinned "seed" the /generate body is a pure function of the request;
// the elapsed time then travels only in the X-Timing-Ms header.
class ExplainService {
 public:
  ExplainService() = default;
  explicit ExplainService(std::shared_ptr<const ModelBundle> bundle) : bundle_(std::move(bundle)) {}

  void set_bundle(std::shared_ptr<const ModelBundle> bundle);
  // Blocking load; failures are kept and reported by /healthz.
  void load(const std::filesystem::path& dir);
  bool ready() const;

  HttpReply handle(std::string_view method, std::string_view path, std::string_view body) const;

  HttpReply healthz() const;
  HttpReply schema() const;
  HttpReply classify(std::string_view body) const;
  HttpReply generate(std::string_view body) const;

 private:
  std::shared_ptr<const ModelBundle> current() const;

  mutable std::mutex mutex_;
  std::shared_ptr<const ModelBundle> bundle_;
  std::string load_error_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path bundle;
  std::string cors_origin = "*";
};

// HTTP/1.1 front end. The bundle loads on a background thread so the socket
// answers 503 until it is ready.
class HttpServer {
 public:
  explicit HttpServer(ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds, starts loading and serving in the background; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  const ExplainService& service() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cfflow
