#include "ladderbot/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace ladderbot::gateway {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;
using wire::MessageKind;

namespace {

double env_double(const char* name, double fallback) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') {
    return fallback;
  }
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != std::string(v).size()) {
      throw std::invalid_argument(v);
    }
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, std::string(name) + " is not a number: " + v);
  }
}

std::string strip_query(const std::string& target) {
  return target.substr(0, target.find('?'));
}

}  // namespace

// ---- options and helpers ----

GatewayOptions GatewayOptions::from_env() {
  GatewayOptions o;
  if (const char* bind = std::getenv("LADDERBOT_BIND"); bind != nullptr && *bind != '\0') {
    const std::string s(bind);
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) {
      o.bind_address = s;
    } else {
      o.bind_address = s.substr(0, colon);
      try {
        const int port = std::stoi(s.substr(colon + 1));
        if (port < 0 || port > 65535) {
          throw std::out_of_range(s);
        }
        o.port = static_cast<unsigned short>(port);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigInvalid, "LADDERBOT_BIND needs host:port, got " + s);
      }
    }
  }
  if (const char* token = std::getenv("LADDERBOT_TOKEN"); token != nullptr) {
    o.token = token;
  }
  o.telemetry_rate_hz = env_double("LADDERBOT_TELEMETRY_HZ", o.telemetry_rate_hz);
  o.realtime_factor = env_double("LADDERBOT_REALTIME", o.realtime_factor);
  if (const char* root = std::getenv("LADDERBOT_UI_ROOT"); root != nullptr && *root != '\0') {
    o.ui_root = root;
  }
  o.validate();
  return o;
}

void GatewayOptions::validate() const {
  if (!(telemetry_rate_hz > 0.0) || !std::isfinite(telemetry_rate_hz)) {
    throw Error(ErrorCode::ConfigInvalid, "telemetry rate must be positive");
  }
  if (!(realtime_factor >= 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "realtime factor must be >= 0");
  }
  if (bind_address.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "bind address is empty");
  }
}

std::string mime_type(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, const std::string& target) {
  std::string path = strip_query(target);
  if (path.empty() || path.front() != '/') {
    return std::nullopt;
  }
  if (path.back() == '/') {
    path += "index.html";
  }
  const std::filesystem::path rel(path.substr(1));
  for (const auto& part : rel) {
    if (part == ".." || part.string().find('\\') != std::string::npos) {
      return std::nullopt;
    }
  }
  return root / rel;
}

bool authorized(const std::string& expected, const std::string& authorization_header, const std::string& target) {
  if (expected.empty()) {
    return true;
  }
  if (authorization_header == "Bearer " + expected) {
    return true;
  }
  const auto q = target.find('?');
  if (q == std::string::npos) {
    return false;
  }
  std::istringstream query(target.substr(q + 1));
  for (std::string kv; std::getline(query, kv, '&');) {
    if (kv == "token=" + expected) {
      return true;
    }
  }
  return false;
}

// ---- episode host ----

EpisodeHost::EpisodeHost(Scenario scenario, Mode mode, std::uint64_t seed, Options options)
    : scenario_(std::move(scenario)), mode_(mode), seed_(seed), options_(options) {
  if (!(options_.telemetry_rate_hz > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "telemetry rate must be positive");
  }
  scenario_.validate();
  std::lock_guard lock(mutex_);
  publish_locked(deployment::initial_state(scenario_, mode_, seed_));
}

EpisodeHost::~EpisodeHost() {
  stop();
}

void EpisodeHost::start() {
  if (thread_.joinable()) {
    return;
  }
  thread_ = std::thread([this] { run(); });
}

void EpisodeHost::stop() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) {
    thread_.join();
  }
}

void EpisodeHost::wait() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [this] { return done_ || stop_; });
}

bool EpisodeHost::finished() const {
  std::lock_guard lock(mutex_);
  return done_;
}

deployment::EpisodeResult EpisodeHost::result() const {
  std::lock_guard lock(mutex_);
  return result_;
}

std::shared_ptr<const Snapshot> EpisodeHost::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

void EpisodeHost::submit(const deployment::InboxItem& item, const std::function<void()>& on_accept) {
  using Kind = deployment::InboxItem::Kind;
  std::lock_guard lock(mutex_);
  switch (item.kind) {
    case Kind::Response: {
      const int id = item.response.prompt_id;
      if (done_ || !snapshot_->prompt || snapshot_->prompt->id != id || claimed_prompt_ == id) {
        throw Error(ErrorCode::UnknownPrompt, "no outstanding prompt with id " + std::to_string(id));
      }
      claimed_prompt_ = id;
      break;
    }
    case Kind::Jog: {
      deployment::validate_jog(item.jog);
      // Pause/resume still queued count as already applied.
      bool paused = snapshot_->paused;
      for (const auto& queued : inbox_) {
        if (queued.kind == Kind::Pause) paused = true;
        if (queued.kind == Kind::Resume) paused = false;
      }
      if (!deployment::jog_allowed(snapshot_->phase, paused)) {
        throw Error(ErrorCode::NotPaused, "jog only while paused or awaiting lock confirmation");
      }
      break;
    }
    case Kind::Pause:
    case Kind::Resume:
      break;
  }
  if (done_) {
    throw Error(ErrorCode::ProtocolViolation, "episode already finished");
  }
  if (on_accept) {
    on_accept();
  }
  inbox_.push_back(item);
  cv_.notify_all();
}

int EpisodeHost::add_listener(Listener listener) {
  std::lock_guard lock(mutex_);
  listeners_.emplace(next_listener_, std::move(listener));
  return next_listener_++;
}

void EpisodeHost::remove_listener(int id) {
  std::lock_guard lock(mutex_);
  listeners_.erase(id);
}

void EpisodeHost::client_attached() {
  {
    std::lock_guard lock(mutex_);
    client_seen_ = true;
  }
  cv_.notify_all();
}

void EpisodeHost::broadcast_locked(MessageKind kind, const json& payload) {
  ++version_;
  for (const auto& [id, listener] : listeners_) {
    listener(version_, kind, payload);
  }
}

void EpisodeHost::publish_locked(const deployment::EpisodeState& state) {
  auto snap = std::make_shared<Snapshot>();
  snap->telemetry = wire::telemetry_payload(state);
  snap->prompt = deployment::finished(state) ? std::nullopt : state.deploy.pending_prompt;
  snap->phase = state.deploy.phase;
  snap->paused = state.deploy.paused;
  snap->version = version_;
  snapshot_ = std::move(snap);
}

void EpisodeHost::run() {
  using namespace deployment;
  EpisodeResult result;
  EpisodeState state = initial_state(scenario_, mode_, seed_);
  result.trajectory.push_back(trajectory_row(state));
  if (options_.start_on_first_client) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return client_seen_ || stop_; });
  }
  const double period = 1.0 / options_.telemetry_rate_hz;
  double next_telemetry = period;

  while (!deployment::finished(state) && state.deploy.tick_count < scenario_.max_ticks) {
    std::vector<InboxItem> items;
    {
      std::unique_lock lock(mutex_);
      if (awaiting_operator(state) || state.deploy.paused) {
        cv_.wait(lock, [this] { return stop_ || !inbox_.empty(); });
      }
      if (stop_) {
        break;
      }
      items.assign(inbox_.begin(), inbox_.end());
      inbox_.clear();
    }
    const double before = state.deploy.clock;
    auto r = tick(state, items, scenario_);
    state = std::move(r.state);
    if (state.deploy.clock > before) {
      result.trajectory.push_back(trajectory_row(state));
    }
    {
      std::lock_guard lock(mutex_);
      for (const auto& e : r.events) {
        const bool live_prompt = e.kind == "prompt" && state.deploy.pending_prompt &&
                                 e.payload.value("prompt_id", -1) == state.deploy.pending_prompt->id;
        if (live_prompt) {
          broadcast_locked(MessageKind::Prompt, wire::prompt_payload(*state.deploy.pending_prompt));
        } else {
          broadcast_locked(MessageKind::PhaseEvent, wire::event_payload(e));
        }
      }
      if (state.deploy.clock + 1e-12 >= next_telemetry) {
        broadcast_locked(MessageKind::Telemetry, wire::telemetry_payload(state));
        while (next_telemetry <= state.deploy.clock + 1e-12) {
          next_telemetry += period;
        }
      }
      publish_locked(state);
    }
    result.events.insert(result.events.end(), std::make_move_iterator(r.events.begin()),
                         std::make_move_iterator(r.events.end()));
    if (options_.realtime_factor > 0.0 && state.deploy.clock > before) {
      std::this_thread::sleep_for(std::chrono::duration<double>((state.deploy.clock - before) / options_.realtime_factor));
    }
  }

  std::lock_guard lock(mutex_);
  if (stop_ && !deployment::finished(state)) {
    done_ = true;
    result.report = make_report(state);
    result_ = std::move(result);
    cv_.notify_all();
    return;
  }
  if (!deployment::finished(state)) {
    state.deploy.fault_reason = "tick budget of " + std::to_string(scenario_.max_ticks) + " exhausted";
    Event e{state.deploy.clock, state.deploy.phase, state.deploy.active_step, "fault",
            {{"code", "None"}, {"reason", state.deploy.fault_reason}}};
    broadcast_locked(MessageKind::PhaseEvent, wire::event_payload(e));
    result.events.push_back(std::move(e));
    state.deploy.phase = Phase::Fault;
  }
  result.report = make_report(state);
  auto final_telemetry = wire::telemetry_payload(state);
  final_telemetry["final"] = true;
  final_telemetry["report"] = to_json(result.report);
  broadcast_locked(MessageKind::Telemetry, final_telemetry);
  publish_locked(state);
  result_ = std::move(result);
  done_ = true;
  cv_.notify_all();
}

// ---- network server ----

class WsSession;

struct GatewayServer::Impl {
  EpisodeHost& host;
  GatewayOptions options;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  std::future<void> finished;
  int listener_id = -1;
  std::vector<std::weak_ptr<WsSession>> sessions;  // io thread only
  bool running = false;

  Impl(EpisodeHost& h, GatewayOptions o) : host(h), options(std::move(o)) {}

  void deliver(std::uint64_t version, MessageKind kind, const json& payload);
  void do_accept();
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
  WsSession(tcp::socket socket, GatewayServer::Impl& server) : ws_(std::move(socket)), server_(server) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void deliver(std::uint64_t version, MessageKind kind, const json& payload) {
    if (open_ && !closing_ && version > joined_at_) {
      send(kind, payload);
    }
  }

  /// Closes once every queued frame is written.
  void shutdown() {
    closing_ = true;
    if (!writing_) {
      close();
    }
  }

private:
  void on_accept(beast::error_code ec) {
    if (ec) {
      return;
    }
    const auto snap = server_.host.snapshot();
    joined_at_ = snap->version;
    open_ = true;
    server_.sessions.push_back(weak_from_this());
    send(MessageKind::Telemetry, snap->telemetry);
    if (snap->prompt) {
      send(MessageKind::Prompt, wire::prompt_payload(*snap->prompt));
    }
    server_.host.client_attached();
    do_read();
  }

  void send(MessageKind kind, const json& payload) {
    outbox_.push_back(wire::serialize({kind, ++out_seq_, payload}));
    if (!writing_) {
      do_write();
    }
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      self->outbox_.pop_front();
      if (self->outbox_.empty()) {
        self->writing_ = false;
        if (self->closing_) {
          self->close();
        }
      } else {
        self->do_write();
      }
    });
  }

  void close() {
    if (!open_) {
      return;
    }
    open_ = false;
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      if (self->closing_) {
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->handle(text);
      self->do_read();
    });
  }

  void handle(const std::string& text) {
    wire::WireMessage m;
    try {
      m = wire::parse(text);
    } catch (const Error& e) {
      send(MessageKind::Error, wire::error_payload(e.code(), e.what(), std::nullopt));
      return;
    }
    if (last_in_seq_ && m.sequence <= *last_in_seq_) {
      send(MessageKind::Error, wire::error_payload(ErrorCode::ProtocolViolation,
                                                   "sequence numbers must strictly increase", m.sequence));
      return;
    }
    last_in_seq_ = m.sequence;
    try {
      deployment::InboxItem item;
      if (m.kind == MessageKind::Response) {
        item = deployment::InboxItem::make_response(wire::parse_response(m.payload));
      } else if (m.kind == MessageKind::Command) {
        item = wire::parse_command(m.payload);
      } else {
        throw Error(ErrorCode::ProtocolViolation,
                    std::string("clients may not send ") + wire::to_string(m.kind) + " messages");
      }
      server_.host.submit(item, [&] { send(MessageKind::Ack, wire::ack_payload(m.sequence, m.kind)); });
    } catch (const Error& e) {
      send(MessageKind::Error, wire::error_payload(e.code(), e.what(), m.sequence));
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  GatewayServer::Impl& server_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  bool writing_ = false;
  bool open_ = false;
  bool closing_ = false;
  std::uint64_t out_seq_ = 0;
  std::uint64_t joined_at_ = 0;
  std::optional<std::uint64_t> last_in_seq_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
  HttpSession(tcp::socket socket, GatewayServer::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

private:
  void on_read(beast::error_code ec) {
    if (ec) {
      return;
    }
    const std::string target(req_.target());
    const std::string path = strip_query(target);
    if (websocket::is_upgrade(req_)) {
      if (path != "/ws") {
        return respond(http::status::not_found, "text/plain", "no such endpoint\n");
      }
      if (!authorized(server_.options.token, std::string(req_[http::field::authorization]), target)) {
        return respond(http::status::unauthorized, "text/plain", "Unauthorized: bad or missing token\n");
      }
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), server_)->run(std::move(req_));
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      return respond(http::status::method_not_allowed, "text/plain", "GET only\n");
    }
    if (path == "/ws") {
      return respond(http::status::upgrade_required, "text/plain", "WebSocket upgrade required\n");
    }
    if (server_.options.ui_root.empty()) {
      return respond(http::status::not_found, "text/plain", "no UI root configured\n");
    }
    const auto file = resolve_static(server_.options.ui_root, target);
    if (!file) {
      return respond(http::status::bad_request, "text/plain", "bad path\n");
    }
    std::ifstream in(*file, std::ios::binary);
    if (!in || std::filesystem::is_directory(*file)) {
      return respond(http::status::not_found, "text/plain", "not found\n");
    }
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, mime_type(*file), req_.method() == http::verb::head ? "" : body.str());
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "ladderbot");
    res->set(http::field::content_type, type);
    res->keep_alive(false);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  GatewayServer::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

void GatewayServer::Impl::deliver(std::uint64_t version, MessageKind kind, const json& payload) {
  std::erase_if(sessions, [](const auto& w) { return w.expired(); });
  for (const auto& w : sessions) {
    if (auto s = w.lock()) {
      s->deliver(version, kind, payload);
    }
  }
}

void GatewayServer::Impl::do_accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      return;  // acceptor closed
    }
    std::make_shared<HttpSession>(std::move(socket), *this)->run();
    do_accept();
  });
}

GatewayServer::GatewayServer(EpisodeHost& host, GatewayOptions options)
    : impl_(std::make_unique<Impl>(host, std::move(options))) {
  impl_->options.validate();
}

GatewayServer::~GatewayServer() {
  stop();
}

unsigned short GatewayServer::start() {
  auto& s = *impl_;
  if (s.running) {
    return s.acceptor.local_endpoint().port();
  }
  beast::error_code ec;
  const auto address = net::ip::make_address(s.options.bind_address, ec);
  if (ec) {
    throw Error(ErrorCode::BindFailure, "bad bind address '" + s.options.bind_address + "'");
  }
  const tcp::endpoint endpoint(address, s.options.port);
  s.acceptor.open(endpoint.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(endpoint, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::BindFailure, s.options.bind_address + ":" + std::to_string(s.options.port) + ": " +
                                            ec.message());
  }
  s.listener_id = s.host.add_listener([&s](std::uint64_t version, MessageKind kind, const json& payload) {
    net::post(s.ioc, [&s, version, kind, payload] { s.deliver(version, kind, payload); });
  });
  s.do_accept();
  s.running = true;
  std::promise<void> done;
  s.finished = done.get_future();
  s.thread = std::thread([&s, done = std::move(done)]() mutable {
    s.ioc.run();
    done.set_value();
  });
  return s.acceptor.local_endpoint().port();
}

void GatewayServer::stop() {
  auto& s = *impl_;
  if (!s.running) {
    return;
  }
  s.host.remove_listener(s.listener_id);
  // Let queued frames (the final telemetry in particular) reach clients.
  net::post(s.ioc, [&s] {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    for (const auto& w : s.sessions) {
      if (auto session = w.lock()) {
        session->shutdown();
      }
    }
  });
  if (s.finished.wait_for(std::chrono::seconds(2)) != std::future_status::ready) {
    s.ioc.stop();
  }
  if (s.thread.joinable()) {
    s.thread.join();
  }
  s.running = false;
}

}  // namespace ladderbot::gateway
