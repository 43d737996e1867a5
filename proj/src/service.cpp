#include "scenerag/service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "scenerag/errors.hpp"

namespace scenerag {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

// Reads until a full line is buffered; false on EOF/error before a newline.
bool read_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    const auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

nlohmann::json timings_json(const ServerTimings& t) {
  return {{"retrieval_ms", t.retrieval_ms},
          {"generation_ms", t.generation_ms},
          {"server_total_ms", t.server_total_ms}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Protocol

std::string encode_request(const QueryRequest& r) {
  nlohmann::json j{{"request_id", r.request_id},
                   {"question", r.question},
                   {"user_pose", to_json(r.user_pose)}};
  if (r.k) j["k"] = *r.k;
  return j.dump();
}

QueryRequest decode_request(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ParseError("malformed request");
  }
  if (!j.is_object()) throw ParseError("request must be a JSON object");
  QueryRequest r;
  auto id = j.find("request_id");
  if (id == j.end() || !id->is_string()) throw ParseError("missing request_id");
  r.request_id = id->get<std::string>();
  auto q = j.find("question");
  if (q == j.end() || !q->is_string()) throw ParseError("missing question");
  r.question = q->get<std::string>();
  if (r.question.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ValidationError("empty question");
  }
  auto pose = j.find("user_pose");
  if (pose == j.end()) throw ParseError("missing user_pose");
  r.user_pose = user_pose_from_json(*pose);
  if (auto k = j.find("k"); k != j.end() && !k->is_null()) {
    if (!k->is_number_integer()) throw ParseError("k must be an integer");
    const auto v = k->get<long long>();
    if (v < 1) throw ValidationError("k must be >= 1");
    r.k = static_cast<std::size_t>(v);
  }
  return r;
}

std::string encode_response(const QueryResponse& r) {
  if (r.error) return nlohmann::json{{"request_id", r.request_id}, {"error", *r.error}}.dump();
  nlohmann::json retrieved = nlohmann::json::array();
  for (const auto& s : r.retrieved) retrieved.push_back({s.instance, s.score});
  return nlohmann::json{{"request_id", r.request_id},
                        {"answer", r.answer},
                        {"retrieved", std::move(retrieved)},
                        {"timings", timings_json(r.timings)}}
      .dump();
}

QueryResponse decode_response(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    QueryResponse r;
    r.request_id = j.at("request_id").get<std::string>();
    if (j.contains("error")) {
      r.error = j["error"].get<std::string>();
      return r;
    }
    r.answer = j.at("answer").get<std::string>();
    for (const auto& e : j.at("retrieved")) {
      r.retrieved.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
    }
    const auto& t = j.at("timings");
    r.timings = {t.at("retrieval_ms").get<double>(), t.at("generation_ms").get<double>(),
                 t.at("server_total_ms").get<double>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed response: ") + e.what());
  }
}

std::pair<std::string, std::uint16_t> parse_address(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw InvalidArgument("address must be host:port");
  }
  const std::string_view port_text = address.substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value > 65535) {
    throw InvalidArgument("invalid port in '" + std::string(address) + "'");
  }
  return {std::string(address.substr(0, colon)), static_cast<std::uint16_t>(value)};
}

std::string handle_request_line(KnowledgeDatabase& db, Answerer& answerer, std::string_view line) {
  const auto t0 = Clock::now();
  QueryResponse resp;
  try {
    const QueryRequest req = decode_request(line);
    resp.request_id = req.request_id;
    const std::size_t k = req.k.value_or(kDefaultTopK);
    const auto t_r0 = Clock::now();
    const RetrievalResult result = db.query(req.user_pose, req.question, k);
    const auto t_r1 = Clock::now();
    const PromptBundle bundle = render_prompt(req.question, result, result.pose);
    resp.answer = answerer.answer(bundle, std::nullopt);
    const auto t_g1 = Clock::now();
    resp.retrieved = result.ranked;
    resp.timings.retrieval_ms = ms_between(t_r0, t_r1);
    resp.timings.generation_ms = ms_between(t_r1, t_g1);
    resp.timings.server_total_ms = ms_between(t0, Clock::now());
  } catch (const std::exception& e) {
    if (resp.request_id.empty()) {
      try {
        const auto j = nlohmann::json::parse(line);
        if (j.is_object() && j.contains("request_id") && j["request_id"].is_string()) {
          resp.request_id = j["request_id"].get<std::string>();
        }
      } catch (const nlohmann::json::exception&) {
      }
    }
    resp.error = e.what();
  }
  return encode_response(resp);
}

// ---------------------------------------------------------------------------
// Server

Server::Server(std::shared_ptr<KnowledgeDatabase> db, std::shared_ptr<Answerer> answerer)
    : db_(std::move(db)), answerer_(std::move(answerer)) {
  if (!db_ || !answerer_) throw InvalidArgument("server needs a database and an answerer");
}

Server::~Server() { stop(); }

void Server::start(std::string_view bind_address) {
  if (running_) throw InvalidArgument("server already running");
  auto [host, port] = parse_address(bind_address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res); rc != 0) {
    throw NetworkError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  }
  int fd = -1;
  std::string last = "no address";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) break;
    last = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw NetworkError("bind failed for '" + std::string(bind_address) + "': " + last);

  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len);
  port_ = ntohs(ss.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port
                                         : reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  host_ = host;
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

std::string Server::address() const { return host_ + ":" + std::to_string(port_); }

void Server::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc <= 0 || !running_) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    std::lock_guard lock(conn_mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void Server::serve_connection(int fd) {
  std::string buffer, line;
  while (running_ && read_line(fd, buffer, line)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string reply = handle_request_line(*db_, *answerer_, line) + "\n";
    if (!send_all(fd, reply)) break;
  }
  ::shutdown(fd, SHUT_RDWR);
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  std::vector<int> fds;
  {
    std::lock_guard lock(conn_mu_);
    workers.swap(workers_);
    fds.swap(conn_fds_);
  }
  for (int fd : fds) ::shutdown(fd, SHUT_RDWR);
  for (auto& t : workers) t.join();
  for (int fd : fds) ::close(fd);
}

std::unique_ptr<Server> serve(std::shared_ptr<KnowledgeDatabase> db,
                              std::shared_ptr<Answerer> answerer, std::string_view bind_address) {
  auto server = std::make_unique<Server>(std::move(db), std::move(answerer));
  server->start(bind_address);
  return server;
}

// ---------------------------------------------------------------------------
// Client

Client::Client(std::string_view address, std::chrono::milliseconds timeout) {
  auto [host, port] = parse_address(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res); rc != 0) {
    throw NetworkError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  }
  std::string last = "no address";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd_ < 0) continue;
    if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw NetworkError("connect to '" + std::string(address) + "' failed: " + last);
  set_nodelay(fd_);
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

std::string Client::roundtrip(std::string_view line) {
  std::string out(line);
  out.push_back('\n');
  if (!send_all(fd_, out)) throw NetworkError(std::string("send failed: ") + std::strerror(errno));
  std::string reply;
  if (!read_line(fd_, buffer_, reply)) {
    throw NetworkError(errno == EAGAIN || errno == EWOULDBLOCK ? "timed out waiting for response"
                                                              : "connection closed by server");
  }
  return reply;
}

ClientResult Client::query(const QueryRequest& request) {
  const std::string line = encode_request(request);
  const auto t0 = Clock::now();
  const std::string reply = roundtrip(line);
  const auto t1 = Clock::now();
  ClientResult r;
  r.response = decode_response(reply);
  r.end_to_end_ms = ms_between(t0, t1);
  r.communication_ms = r.end_to_end_ms - r.response.timings.server_total_ms;
  return r;
}

ClientResult client_query(std::string_view address, const QueryRequest& request,
                          std::chrono::milliseconds timeout) {
  Client c(address, timeout);
  return c.query(request);
}

LatencyReport LatencyReport::from_samples(std::vector<LatencySample> samples) {
  LatencyReport r;
  r.samples = std::move(samples);
  if (r.samples.empty()) throw InvalidArgument("latency report needs at least one sample");
  for (const auto& s : r.samples) {
    r.mean_communication_ms += s.communication_ms;
    r.mean_generation_ms += s.generation_ms;
    r.mean_end_to_end_ms += s.end_to_end_ms;
  }
  const double n = static_cast<double>(r.samples.size());
  r.mean_communication_ms /= n;
  r.mean_generation_ms /= n;
  r.mean_end_to_end_ms /= n;
  return r;
}

nlohmann::json LatencyReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : samples) {
    rows.push_back({{"request_id", s.request_id},
                    {"communication_ms", s.communication_ms},
                    {"generation_ms", s.generation_ms},
                    {"end_to_end_ms", s.end_to_end_ms},
                    {"server_total_ms", s.server_total_ms}});
  }
  return {{"queries", samples.size()},
          {"mean_communication_ms", mean_communication_ms},
          {"mean_generation_ms", mean_generation_ms},
          {"mean_end_to_end_ms", mean_end_to_end_ms},
          {"samples", std::move(rows)}};
}

}  // namespace scenerag
