#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ms/agents.hpp"
#include "ms/episode.hpp"

namespace ms::service {

using json = nlohmann::ordered_json;

inline constexpr int kProtocolVersion = 1;
// Depth PNG samples are depth in units of 0.1 mm.
inline constexpr double kDepthUnit = 1e-4;

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int capacity = 16;
  std::string log_dir;     // session JSONL logs are mirrored here when set
  std::string static_dir;  // served at / when set
  BinConfig bin;
  std::shared_ptr<const agents::PushPolicy> push;
};

// Protocol-level failure; `status` is the HTTP status to answer with.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  json to_json() const;

 private:
  int status_;
  std::string code_;
};

struct SessionConfig {
  std::uint64_t seed = 0;
  int heap_size = 8;
  int action_cap = episode::kActionCap;
  std::string push = "fsp";  // fsp | learned

  static SessionConfig from_json(const json& j);
};

// Wire action -> episode action. Throws ServiceError(400) when malformed.
episode::Action parse_action(const json& j);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// 16-bit grayscale PNG of depth / kDepthUnit.
std::vector<std::uint8_t> encode_depth_png(const perception::DepthImage& depth);
perception::DepthImage decode_depth_png(std::span<const std::uint8_t> png);

// Outer boundary of every 8-connected component, traced clockwise in image
// coordinates by Moore-neighbor following. Points are (u, v) pixels.
using Outline = std::vector<std::array<int, 2>>;
std::vector<Outline> mask_outlines(const Mask& mask);

class SessionManager {
 public:
  explicit SessionManager(ServerOptions options);

  // {"session_id", "packet"}
  json create(const json& config);
  json packet(const std::string& id);
  // {"type": "step", "result", "packet"}
  json act(const std::string& id, const json& action);
  std::string log_jsonl(const std::string& id);
  json proportions();
  std::size_t size();

  const ServerOptions& options() const { return options_; }

 private:
  struct Session {
    std::string id;
    SessionConfig config;
    std::unique_ptr<episode::Episode> episode;
    std::vector<std::string> log;
    double cumulative_reward = 0.0;
    std::atomic<bool> done{false};
    std::mutex busy;
  };

  std::shared_ptr<Session> find(const std::string& id);
  json packet_of(const Session& s) const;

  ServerOptions options_;
  std::shared_ptr<const episode::PushPlanner> fsp_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

// HTTP + WebSocket front end over a SessionManager.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  int port() const;
  // Blocks until stop().
  void run();
  void stop();
  SessionManager& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ms::service
