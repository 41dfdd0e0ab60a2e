#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "ladderbot/deployment.hpp"
#include "ladderbot/wire.hpp"

namespace ladderbot::gateway {

struct GatewayOptions {
  std::string bind_address = "127.0.0.1";
  unsigned short port = 8765;  ///< 0 picks an ephemeral port
  std::string token;           ///< empty disables authentication
  double telemetry_rate_hz = 20.0;
  double realtime_factor = 0.0;  ///< 0 steps as fast as possible
  std::filesystem::path ui_root;

  /// LADDERBOT_BIND (host:port), LADDERBOT_TOKEN, LADDERBOT_TELEMETRY_HZ,
  /// LADDERBOT_REALTIME, LADDERBOT_UI_ROOT.
  static GatewayOptions from_env();
  void validate() const;
};

/// What a newly attached listener needs to catch up.
struct Snapshot {
  nlohmann::json telemetry;
  std::optional<deployment::HitlPrompt> prompt;
  deployment::Phase phase = deployment::Phase::Home;
  bool paused = false;
  std::uint64_t version = 0;  ///< index of the last broadcast folded into this snapshot
};

/**
 * @brief Owns one episode and steps it on a private thread.
 *
 * Operators reach the episode only through submit(); listeners receive
 * broadcasts in the order the stepper produced them.
 */
class EpisodeHost {
public:
  using Listener = std::function<void(std::uint64_t version, wire::MessageKind, const nlohmann::json&)>;

  struct Options {
    double telemetry_rate_hz = 20.0;  ///< per simulated second
    double realtime_factor = 0.0;
    bool start_on_first_client = false;
  };

  EpisodeHost(Scenario scenario, Mode mode, std::uint64_t seed, Options options);
  ~EpisodeHost();

  EpisodeHost(const EpisodeHost&) = delete;
  EpisodeHost& operator=(const EpisodeHost&) = delete;

  void start();
  void stop();
  /// Blocks until the episode reaches Done or Fault (or stop() was called).
  void wait();
  bool finished() const;
  /// Valid after wait() returns.
  deployment::EpisodeResult result() const;

  std::shared_ptr<const Snapshot> snapshot() const;

  /// Validates and enqueues an operator input. `on_accept` runs under the host
  /// lock before the item becomes visible to the stepper, so an acknowledgement
  /// queued there precedes anything the item causes. Throws UnknownPrompt,
  /// NotPaused, JogTooLarge or ProtocolViolation without touching the inbox.
  void submit(const deployment::InboxItem& item, const std::function<void()>& on_accept);

  int add_listener(Listener listener);
  void remove_listener(int id);
  /// Lets a host created with start_on_first_client begin stepping.
  void client_attached();

private:
  void run();
  void broadcast_locked(wire::MessageKind kind, const nlohmann::json& payload);
  void publish_locked(const deployment::EpisodeState& state);

  Scenario scenario_;
  Mode mode_;
  std::uint64_t seed_;
  Options options_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<deployment::InboxItem> inbox_;
  std::optional<int> claimed_prompt_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::map<int, Listener> listeners_;
  int next_listener_ = 0;
  std::uint64_t version_ = 0;
  bool client_seen_ = false;
  bool stop_ = false;
  bool done_ = false;
  deployment::EpisodeResult result_;
  std::thread thread_;
};

/// WebSocket endpoint at /ws plus static files from ui_root.
class GatewayServer {
public:
  GatewayServer(EpisodeHost& host, GatewayOptions options);
  ~GatewayServer();

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Binds and starts serving; returns the bound port. Throws BindFailure.
  unsigned short start();
  void stop();

  struct Impl;

private:
  std::unique_ptr<Impl> impl_;
};

/// Content type used for static files, by extension.
std::string mime_type(const std::filesystem::path& path);
/// Maps a request target onto ui_root; nullopt for traversal attempts.
std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, const std::string& target);
/// Accepts "Authorization: Bearer <t>" or a token=<t> query parameter.
bool authorized(const std::string& expected, const std::string& authorization_header, const std::string& target);

}  // namespace ladderbot::gateway
