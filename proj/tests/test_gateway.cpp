#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "ladderbot/errors.hpp"
#include "ladderbot/gateway.hpp"
#include "support/golden_session.hpp"
#include "support/ws_client.hpp"

using namespace ladderbot;
using namespace ladderbot::gateway;
using ladderbot::testing::WsClient;
using wire::MessageKind;
using nlohmann::json;

namespace {

const std::string kGoldenPath = std::string(LADDERBOT_TEST_DATA) + "/golden_transcript.jsonl";

struct Rig {
  EpisodeHost host;
  GatewayServer server;
  unsigned short port = 0;

  Rig(Mode mode, EpisodeHost::Options host_options, GatewayOptions options = {})
      : host(Scenario{}, mode, 7, host_options), server(host, with_ephemeral(std::move(options))) {
    port = server.start();
    host.start();
  }
  ~Rig() {
    server.stop();
    host.stop();
  }

  static GatewayOptions with_ephemeral(GatewayOptions o) {
    o.port = 0;
    return o;
  }
};

/// Reads until a frame of `kind`; checks server sequence numbers on the way.
wire::WireMessage read_until(WsClient& c, MessageKind kind, std::uint64_t* last_seq = nullptr) {
  for (;;) {
    auto m = c.read();
    if (last_seq != nullptr) {
      CHECK(m.sequence > *last_seq);
      *last_seq = m.sequence;
    }
    if (m.kind == kind) {
      return m;
    }
  }
}

std::string event_log(const deployment::EpisodeResult& r) {
  std::ostringstream out;
  deployment::write_event_log(out, r.events);
  return out.str();
}

}  // namespace

TEST_CASE("scripted session matches the recorded transcript") {
  const auto run = ladderbot::testing::run_golden_session();
  CHECK(run.prompts == 5);
  CHECK(run.acks == 5);
  CHECK(run.errors == 0);
  CHECK(run.result.report.outcome == deployment::Outcome::Success);

  const char* update = std::getenv("LADDERBOT_UPDATE_GOLDEN");
  if (update != nullptr && std::string(update) == "1") {
    std::ofstream out(kGoldenPath);
    for (const auto& line : run.lines) {
      out << line << '\n';
    }
    MESSAGE("golden transcript rewritten: " << run.lines.size() << " lines");
  }
  const auto golden = ladderbot::testing::read_lines(kGoldenPath);
  REQUIRE_MESSAGE(!golden.empty(), "missing " << kGoldenPath);
  CHECK(golden.size() == run.lines.size());
  const auto n = std::min(golden.size(), run.lines.size());
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (golden[i] != run.lines[i] && mismatches++ < 3) {
      MESSAGE("line " << i + 1 << " differs:\n  golden " << golden[i] << "\n  actual " << run.lines[i]);
    }
  }
  CHECK(mismatches == 0);

  // The gateway only relays: the same episode driven in-process logs the same events.
  const auto direct =
      deployment::run_episode(Scenario{}, Mode::Hitl, ladderbot::testing::kGoldenSeed, deployment::scripted_operator({}));
  CHECK(event_log(direct) == event_log(run.result));
}

TEST_CASE("stale or unknown prompt responses are rejected without side effects") {
  Rig rig(Mode::Hitl, {1.0, 0.0, true});
  WsClient c(rig.port);
  const auto prompt = read_until(c, MessageKind::Prompt);
  const int id = prompt.payload["prompt_id"];

  const auto bad = c.send(MessageKind::Response, {{"prompt_id", id + 100}, {"verdict", "Confirm"}});
  auto err = read_until(c, MessageKind::Error);
  CHECK(err.payload["code"] == "UnknownPrompt");
  CHECK(err.payload["ref_seq"] == bad);
  auto snap = rig.host.snapshot();
  REQUIRE(snap->prompt.has_value());
  CHECK(snap->prompt->id == id);
  CHECK(snap->phase == deployment::Phase::AwaitLockConfirm);

  const auto good = c.send(MessageKind::Response, {{"prompt_id", id}, {"verdict", "Confirm"}});
  auto ack = read_until(c, MessageKind::Ack);
  CHECK(ack.payload["ref_seq"] == good);
  CHECK(ack.payload["ref_kind"] == "Response");

  const auto dup = c.send(MessageKind::Response, {{"prompt_id", id}, {"verdict", "Confirm"}});
  err = read_until(c, MessageKind::Error);
  CHECK(err.payload["code"] == "UnknownPrompt");
  CHECK(err.payload["ref_seq"] == dup);
}

TEST_CASE("jog validation, pause and resume") {
  // Real-time pacing keeps the episode in its early phases for the whole test.
  Rig rig(Mode::Autonomous, {20.0, 1.0, true});
  WsClient c(rig.port);
  std::uint64_t last = 0;
  read_until(c, MessageKind::Telemetry, &last);

  auto seq = c.send(MessageKind::Command, {{"command", "jog"}, {"vector", {0.01, 0, 0}}});
  auto m = read_until(c, MessageKind::Error, &last);
  CHECK(m.payload["code"] == "NotPaused");
  CHECK(m.payload["ref_seq"] == seq);

  seq = c.send(MessageKind::Command, {{"command", "jog"}, {"vector", {0.05, 0, 0}}});
  m = read_until(c, MessageKind::Error, &last);
  CHECK(m.payload["code"] == "JogTooLarge");
  CHECK(m.payload["ref_seq"] == seq);

  const auto pause = c.send(MessageKind::Command, {{"command", "pause"}});
  const auto jog = c.send(MessageKind::Command, {{"command", "jog"}, {"vector", {0, 0, 0.01}}});
  const auto resume = c.send(MessageKind::Command, {{"command", "resume"}});
  for (const auto expected : {pause, jog, resume}) {
    m = c.read();
    while (m.kind != MessageKind::Ack) {
      CHECK(m.kind != MessageKind::Error);
      CHECK(m.sequence > last);
      last = m.sequence;
      m = c.read();
    }
    CHECK(m.sequence > last);
    last = m.sequence;
    CHECK(m.payload["ref_seq"] == expected);
    CHECK(m.payload["ref_kind"] == "Command");
  }
}

TEST_CASE("protocol violations are reported and the session survives") {
  Rig rig(Mode::Autonomous, {20.0, 1.0, true});
  WsClient c(rig.port);
  read_until(c, MessageKind::Telemetry);

  c.send_text("{ not json");
  auto m = read_until(c, MessageKind::Error);
  CHECK(m.payload["code"] == "ProtocolViolation");
  CHECK_FALSE(m.payload.contains("ref_seq"));

  c.send_text(wire::serialize({MessageKind::Command, 5, {{"command", "pause"}}}));
  CHECK(read_until(c, MessageKind::Ack).payload["ref_seq"] == 5);
  c.send_text(wire::serialize({MessageKind::Command, 5, {{"command", "resume"}}}));
  m = read_until(c, MessageKind::Error);
  CHECK(m.payload["code"] == "ProtocolViolation");
  CHECK(m.payload["ref_seq"] == 5);

  c.send_text(wire::serialize({MessageKind::Telemetry, 6, json::object()}));
  m = read_until(c, MessageKind::Error);
  CHECK(m.payload["code"] == "ProtocolViolation");

  c.send_text(wire::serialize({MessageKind::Command, 7, {{"command", "resume"}}}));
  CHECK(read_until(c, MessageKind::Ack).payload["ref_seq"] == 7);
}

TEST_CASE("a reconnecting client gets the pending prompt replayed") {
  Rig rig(Mode::Hitl, {1.0, 0.0, true});
  int id = 0;
  {
    WsClient first(rig.port);
    id = read_until(first, MessageKind::Prompt).payload["prompt_id"];
    first.close();
  }
  // With nobody attached the episode stays parked at the prompt.
  const double t0 = rig.host.snapshot()->telemetry["t"];
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  auto snap = rig.host.snapshot();
  CHECK(snap->phase == deployment::Phase::AwaitLockConfirm);
  CHECK(snap->telemetry["t"] == t0);
  REQUIRE(snap->prompt.has_value());
  CHECK(snap->prompt->id == id);

  WsClient second(rig.port);
  const auto hello = second.read();
  CHECK(hello.kind == MessageKind::Telemetry);
  CHECK(hello.sequence == 1);
  CHECK(hello.payload["phase"] == "AwaitLockConfirm");
  const auto replay = second.read();
  CHECK(replay.kind == MessageKind::Prompt);
  CHECK(replay.payload["prompt_id"] == id);
  const auto seq = second.send(MessageKind::Response, {{"prompt_id", id}, {"verdict", "Confirm"}});
  CHECK(read_until(second, MessageKind::Ack).payload["ref_seq"] == seq);
}

TEST_CASE("disconnecting clients do not perturb an autonomous episode") {
  Rig rig(Mode::Autonomous, {20.0, 0.0, true});
  {
    WsClient c(rig.port);
    for (int i = 0; i < 10; ++i) {
      c.read();
    }
    c.close();
  }
  rig.host.wait();
  const auto direct = deployment::run_episode(Scenario{}, Mode::Autonomous, 7);
  CHECK(event_log(rig.host.result()) == event_log(direct));
  CHECK(rig.host.result().report.outcome == deployment::Outcome::Success);
}

TEST_CASE("token authentication and static files") {
  const auto root = std::filesystem::temp_directory_path() / "ladderbot_ui_test";
  std::filesystem::create_directories(root / "js");
  std::ofstream(root / "index.html") << "<html>twin</html>";
  std::ofstream(root / "js" / "app.js") << "console.log(1);";

  GatewayOptions options;
  options.token = "s3cret";
  options.ui_root = root;
  Rig rig(Mode::Autonomous, {20.0, 1.0, false}, options);

  CHECK_THROWS(WsClient(rig.port));
  CHECK_THROWS(WsClient(rig.port, "/ws", "wrong"));
  CHECK_THROWS(WsClient(rig.port, "/ws?token=wrong"));
  {
    WsClient c(rig.port, "/ws", "s3cret");
    CHECK(c.read().kind == MessageKind::Telemetry);
  }
  {
    WsClient c(rig.port, "/ws?token=s3cret");
    CHECK(c.read().kind == MessageKind::Telemetry);
  }

  using ladderbot::testing::http_get;
  CHECK(http_get(rig.port, "/") == std::pair<int, std::string>{200, "<html>twin</html>"});
  CHECK(http_get(rig.port, "/js/app.js?v=3") == std::pair<int, std::string>{200, "console.log(1);"});
  CHECK(http_get(rig.port, "/missing.css").first == 404);
  CHECK(http_get(rig.port, "/../CMakeLists.txt").first == 400);
  CHECK(http_get(rig.port, "/ws").first == 426);
  std::filesystem::remove_all(root);
}

TEST_CASE("bind failures") {
  EpisodeHost host(Scenario{}, Mode::Autonomous, 1, {});
  GatewayOptions a;
  a.port = 0;
  GatewayServer first(host, a);
  const auto port = first.start();

  GatewayOptions b;
  b.port = port;
  GatewayServer second(host, b);
  try {
    second.start();
    FAIL("expected BindFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BindFailure);
  }

  GatewayOptions c;
  c.bind_address = "not-an-address";
  c.port = 0;
  GatewayServer third(host, c);
  CHECK_THROWS_AS(third.start(), Error);
  first.stop();
}

TEST_CASE("helpers") {
  CHECK(mime_type("a/index.html") == "text/html; charset=utf-8");
  CHECK(mime_type("app.js") == "application/javascript");
  CHECK(mime_type("x.bin") == "application/octet-stream");

  const std::filesystem::path root = "/srv/ui";
  CHECK(resolve_static(root, "/") == root / "index.html");
  CHECK(resolve_static(root, "/a/b.css?x=1") == root / "a/b.css");
  CHECK_FALSE(resolve_static(root, "/a/../../etc/passwd").has_value());
  CHECK_FALSE(resolve_static(root, "relative").has_value());

  CHECK(authorized("", "", "/ws"));
  CHECK(authorized("t", "Bearer t", "/ws"));
  CHECK(authorized("t", "", "/ws?a=1&token=t"));
  CHECK_FALSE(authorized("t", "Bearer x", "/ws?token=x"));
  CHECK_FALSE(authorized("t", "", "/ws"));
}

TEST_CASE("options from the environment") {
  setenv("LADDERBOT_BIND", "0.0.0.0:9100", 1);
  setenv("LADDERBOT_TOKEN", "abc", 1);
  setenv("LADDERBOT_TELEMETRY_HZ", "5", 1);
  auto o = GatewayOptions::from_env();
  CHECK(o.bind_address == "0.0.0.0");
  CHECK(o.port == 9100);
  CHECK(o.token == "abc");
  CHECK(o.telemetry_rate_hz == 5.0);

  setenv("LADDERBOT_TELEMETRY_HZ", "fast", 1);
  CHECK_THROWS_AS(GatewayOptions::from_env(), Error);
  setenv("LADDERBOT_TELEMETRY_HZ", "5", 1);
  setenv("LADDERBOT_BIND", "host:99999", 1);
  CHECK_THROWS_AS(GatewayOptions::from_env(), Error);
  for (const char* k : {"LADDERBOT_BIND", "LADDERBOT_TOKEN", "LADDERBOT_TELEMETRY_HZ"}) {
    unsetenv(k);
  }
}
