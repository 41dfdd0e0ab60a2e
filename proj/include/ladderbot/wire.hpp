#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ladderbot/deployment.hpp"

namespace ladderbot::wire {

enum class MessageKind { Telemetry, PhaseEvent, Prompt, Response, Command, Ack, Error };

const char* to_string(MessageKind k);
/// Throws ProtocolViolation for unknown names.
MessageKind parse_kind(std::string_view s);

/// One JSON text frame: {"kind": ..., "seq": n, "payload": {...}}.
struct WireMessage {
  MessageKind kind = MessageKind::Telemetry;
  std::uint64_t sequence = 0;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const WireMessage& other) const = default;
};

std::string serialize(const WireMessage& m);
/// Throws ProtocolViolation for malformed frames.
WireMessage parse(std::string_view text);

nlohmann::json telemetry_payload(const deployment::EpisodeState& s);
nlohmann::json prompt_payload(const deployment::HitlPrompt& p);
nlohmann::json event_payload(const deployment::Event& e);

nlohmann::json response_payload(const deployment::HitlResponse& r);
deployment::HitlResponse parse_response(const nlohmann::json& payload);

/// Command payloads: {"command": "pause"|"resume"|"jog", "vector": [dx, dy, dz]}.
nlohmann::json command_payload(const deployment::InboxItem& item);
/// Throws ProtocolViolation for malformed commands and JogTooLarge for long jogs.
deployment::InboxItem parse_command(const nlohmann::json& payload);

nlohmann::json ack_payload(std::uint64_t ref_seq, MessageKind ref_kind);
nlohmann::json error_payload(ErrorCode code, const std::string& message, std::optional<std::uint64_t> ref_seq);

}  // namespace ladderbot::wire
