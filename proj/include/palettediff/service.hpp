#pragma once

// JSON-over-HTTP front end for quantize / transfer / dequantize / inpaint.
// Images travel as base64 PNG, palettes as [[r,g,b], ...], failures as
// {"code", "message"}. Every response body carries "echo_id", taken from the
// request body field of that name or the X-Echo-Id header.

#include <memory>
#include <string>
#include <string_view>

#include "palettediff/registry.hpp"

namespace palettediff {

struct ServiceOptions {
  int max_side = 256;  // larger images are rejected with 413
  std::string cors_origin = "*";
};

struct ApiResponse {
  int status = 200;
  std::string body;
};

class Service {
 public:
  explicit Service(std::shared_ptr<const CheckpointRegistry> registry, ServiceOptions options = {});

  /// Transport-free entry point; the HTTP server only forwards to it.
  ApiResponse handle(std::string_view method, std::string_view path, std::string_view body,
                     std::string_view echo_header = {}) const;

  const ServiceOptions& options() const { return options_; }

 private:
  std::shared_ptr<const CheckpointRegistry> registry_;
  ServiceOptions options_;
};

class HttpServer {
 public:
  explicit HttpServer(const Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws io_error.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace palettediff
