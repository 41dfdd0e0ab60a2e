#include "ladderbot/wire.hpp"

#include <array>

namespace ladderbot::wire {
namespace {

using nlohmann::json;

constexpr std::array<const char*, 7> kNames{"Telemetry", "PhaseEvent", "Prompt", "Response",
                                            "Command",   "Ack",        "Error"};

json vec(const Vec3& v) {
  return json::array({v.x(), v.y(), v.z()});
}

Vec3 read_vec(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
    throw Error(ErrorCode::ProtocolViolation, std::string(what) + " must be an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

const char* to_string(MessageKind k) {
  return kNames[static_cast<std::size_t>(k)];
}

MessageKind parse_kind(std::string_view s) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (s == kNames[i]) {
      return static_cast<MessageKind>(i);
    }
  }
  throw Error(ErrorCode::ProtocolViolation, "unknown message kind '" + std::string(s) + "'");
}

std::string serialize(const WireMessage& m) {
  return json{{"kind", to_string(m.kind)}, {"seq", m.sequence}, {"payload", m.payload}}.dump();
}

WireMessage parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("frame is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("kind") || !j.contains("seq") || !j.contains("payload")) {
    throw Error(ErrorCode::ProtocolViolation, "frame needs kind, seq and payload");
  }
  if (!j["kind"].is_string() || !j["seq"].is_number_unsigned() || !j["payload"].is_object()) {
    throw Error(ErrorCode::ProtocolViolation, "kind must be a string, seq a non-negative integer, payload an object");
  }
  return {parse_kind(j["kind"].get<std::string>()), j["seq"].get<std::uint64_t>(), j["payload"]};
}

json telemetry_payload(const deployment::EpisodeState& s) {
  const auto& w = s.world;
  json q = json::array();
  for (int i = 0; i < kinematics::kJointCount; ++i) {
    q.push_back(w.q[i]);
  }
  return {{"t", s.deploy.clock},
          {"phase", deployment::to_string(s.deploy.phase)},
          {"step", s.deploy.active_step},
          {"paused", s.deploy.paused},
          {"tool", vec(w.tool_position)},
          {"q", q},
          {"force", vec(w.wrist.force)},
          {"torque", vec(w.wrist.torque)},
          {"drift_x", w.drift.base_offset.x()},
          {"sink_depth", w.drift.sink_depth},
          {"tilt", w.drift.tilt},
          {"m_dynamic", w.payload.m_dynamic},
          {"grip", w.grip_command}};
}

json prompt_payload(const deployment::HitlPrompt& p) {
  return {{"prompt_id", p.id}, {"prompt_kind", deployment::to_string(p.kind)}, {"step", p.step}, {"context", p.context}};
}

json event_payload(const deployment::Event& e) {
  return deployment::to_json(e);
}

json response_payload(const deployment::HitlResponse& r) {
  json j{{"prompt_id", r.prompt_id}, {"verdict", deployment::to_string(r.verdict)}};
  if (r.jog) {
    j["jog"] = vec(*r.jog);
  }
  return j;
}

deployment::HitlResponse parse_response(const json& payload) {
  if (!payload.contains("prompt_id") || !payload["prompt_id"].is_number_integer() || !payload.contains("verdict") ||
      !payload["verdict"].is_string()) {
    throw Error(ErrorCode::ProtocolViolation, "response needs an integer prompt_id and a verdict");
  }
  deployment::HitlResponse r;
  r.prompt_id = payload["prompt_id"].get<int>();
  r.verdict = deployment::parse_verdict(payload["verdict"].get<std::string>());
  if (payload.contains("jog") && !payload["jog"].is_null()) {
    r.jog = read_vec(payload["jog"], "jog");
    deployment::validate_jog(*r.jog);
  }
  return r;
}

json command_payload(const deployment::InboxItem& item) {
  using Kind = deployment::InboxItem::Kind;
  switch (item.kind) {
    case Kind::Pause: return {{"command", "pause"}};
    case Kind::Resume: return {{"command", "resume"}};
    case Kind::Jog: return {{"command", "jog"}, {"vector", vec(item.jog)}};
    case Kind::Response: break;
  }
  throw Error(ErrorCode::ProtocolViolation, "responses are not commands");
}

deployment::InboxItem parse_command(const json& payload) {
  if (!payload.contains("command") || !payload["command"].is_string()) {
    throw Error(ErrorCode::ProtocolViolation, "command payload needs a 'command' string");
  }
  const auto name = payload["command"].get<std::string>();
  if (name == "pause") {
    return deployment::InboxItem::pause();
  }
  if (name == "resume") {
    return deployment::InboxItem::resume();
  }
  if (name == "jog") {
    if (!payload.contains("vector")) {
      throw Error(ErrorCode::ProtocolViolation, "jog needs a 'vector'");
    }
    const Vec3 v = read_vec(payload["vector"], "vector");
    deployment::validate_jog(v);
    return deployment::InboxItem::make_jog(v);
  }
  throw Error(ErrorCode::ProtocolViolation, "unknown command '" + name + "'");
}

json ack_payload(std::uint64_t ref_seq, MessageKind ref_kind) {
  return {{"ref_seq", ref_seq}, {"ref_kind", to_string(ref_kind)}};
}

json error_payload(ErrorCode code, const std::string& message, std::optional<std::uint64_t> ref_seq) {
  json j{{"code", ladderbot::to_string(code)}, {"message", message}};
  if (ref_seq) {
    j["ref_seq"] = *ref_seq;
  }
  return j;
}

}  // namespace ladderbot::wire
