#pragma once

// Blocking WebSocket client used by the gateway tests and the acceptance suite.

#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "ladderbot/wire.hpp"

namespace ladderbot::testing {

class WsClient {
public:
  /// Throws boost::system::system_error when the handshake is refused.
  WsClient(unsigned short port, const std::string& target = "/ws", const std::string& bearer = "")
      : ws_(ioc_) {
    namespace net = boost::asio;
    net::ip::tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    if (!bearer.empty()) {
      ws_.set_option(boost::beast::websocket::stream_base::decorator(
          [bearer](boost::beast::websocket::request_type& req) {
            req.set(boost::beast::http::field::authorization, "Bearer " + bearer);
          }));
    }
    ws_.handshake("127.0.0.1", target);
    ws_.text(true);
  }

  std::string read_text() {
    boost::beast::flat_buffer buffer;
    ws_.read(buffer);
    return boost::beast::buffers_to_string(buffer.data());
  }

  wire::WireMessage read() { return wire::parse(read_text()); }

  void send_text(const std::string& text) { ws_.write(boost::asio::buffer(text)); }

  /// Sends with the next client sequence number; returns that number.
  std::uint64_t send(wire::MessageKind kind, const nlohmann::json& payload) {
    send_text(wire::serialize({kind, ++seq_, payload}));
    return seq_;
  }

  void close() {
    boost::beast::error_code ec;
    ws_.close(boost::beast::websocket::close_code::normal, ec);
  }

private:
  boost::asio::io_context ioc_;
  boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
  std::uint64_t seq_ = 0;
};

/// Plain HTTP GET; returns status code and body.
inline std::pair<int, std::string> http_get(unsigned short port, const std::string& target) {
  namespace net = boost::asio;
  namespace http = boost::beast::http;
  net::io_context ioc;
  net::ip::tcp::resolver resolver(ioc);
  boost::beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(stream, req);
  boost::beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  boost::beast::error_code ec;
  stream.socket().shutdown(net::ip::tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

}  // namespace ladderbot::testing
