#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "edgellm/gateway.hpp"
#include "edgellm/monitor.hpp"
#include "edgellm/prometheus.hpp"

namespace edgellm {

/// Latest resource reading per model, published by whoever samples the
/// backend processes. Reads copy, so the exporter never blocks a sampler.
class ResourceBoard {
 public:
  void publish(const std::string& model, const ResourceSample& sample);
  std::map<std::string, ResourceSample> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ResourceSample> latest_;
};

/// Point-in-time gauge set for GET /metrics.
std::vector<MetricSample> metrics_snapshot(const Gateway& gateway, const ResourceBoard* resources);

/// JSON bodies of the public API.
std::string completion_to_json(const CompletionResult& r);
std::string models_to_json(const std::vector<ModelDescriptor>& models);

/// Parses a POST /v1/chat body. Throws InvalidRequest.
ChatRequest parse_chat_request(std::string_view body);

/// HTTP front of the gateway:
///   POST /v1/chat     JSON or text/event-stream (events "token" and "done")
///   GET  /v1/models   model descriptors
///   GET  /healthz     {"status":"ok"}
///   GET  /metrics     Prometheus text format 0.0.4
class GatewayServer {
 public:
  explicit GatewayServer(Gateway& gateway, const ResourceBoard* resources = nullptr);
  ~GatewayServer();

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Binds and returns the port (an ephemeral one when port == 0).
  int bind(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void serve();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgellm
