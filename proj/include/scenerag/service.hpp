#pragma once
// Edge-server query service: newline-delimited JSON over TCP, one request and
// one response per line, plus a client that measures end-to-end and derived
// communication latency.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scenerag/answer.hpp"
#include "scenerag/knowledge_db.hpp"

namespace scenerag {

inline constexpr const char* kDefaultBind = "127.0.0.1:7077";

struct QueryRequest {
  std::string request_id;
  std::string question;
  UserPose user_pose;
  std::optional<std::size_t> k;

  friend bool operator==(const QueryRequest&, const QueryRequest&) = default;
};

struct ServerTimings {
  double retrieval_ms = 0.0;
  double generation_ms = 0.0;
  double server_total_ms = 0.0;

  friend bool operator==(const ServerTimings&, const ServerTimings&) = default;
};

struct QueryResponse {
  std::string request_id;
  std::string answer;
  std::vector<ScoredId> retrieved;
  ServerTimings timings;
  std::optional<std::string> error;  // set on error payloads only

  friend bool operator==(const QueryResponse&, const QueryResponse&) = default;
};

std::string encode_request(const QueryRequest& r);
/// Throws ParseError / ValidationError.
QueryRequest decode_request(std::string_view line);
std::string encode_response(const QueryResponse& r);
QueryResponse decode_response(std::string_view line);

/// "host:port" -> (host, port). Throws InvalidArgument.
std::pair<std::string, std::uint16_t> parse_address(std::string_view address);

/// Handles one request line and returns the response line (no newline).
/// Errors become error payloads; the service never throws on bad input.
std::string handle_request_line(KnowledgeDatabase& db, Answerer& answerer, std::string_view line);

class Server {
 public:
  Server(std::shared_ptr<KnowledgeDatabase> db, std::shared_ptr<Answerer> answerer);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Port 0 picks a free port. Throws NetworkError.
  void start(std::string_view bind_address);
  void stop();
  std::uint16_t port() const { return port_; }
  std::string address() const;
  bool running() const { return running_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<KnowledgeDatabase> db_;
  std::shared_ptr<Answerer> answerer_;
  int listen_fd_ = -1;
  std::string host_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> workers_;
};

/// Starts a server; the handle stops it on destruction.
std::unique_ptr<Server> serve(std::shared_ptr<KnowledgeDatabase> db,
                              std::shared_ptr<Answerer> answerer,
                              std::string_view bind_address = kDefaultBind);

struct ClientResult {
  QueryResponse response;
  double communication_ms = 0.0;  // end_to_end - server_total
  double end_to_end_ms = 0.0;     // send -> receive, client clock
};

/// Persistent connection to a query server.
class Client {
 public:
  /// Throws NetworkError on connection failure.
  explicit Client(std::string_view address,
                  std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  ClientResult query(const QueryRequest& request);
  /// Sends a raw line and returns the raw response line.
  std::string roundtrip(std::string_view line);

 private:
  int fd_ = -1;
  std::string buffer_;
};

/// Connects, sends one request, and disconnects. Connection setup is not
/// part of the measured latency.
ClientResult client_query(std::string_view address, const QueryRequest& request,
                          std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

struct LatencySample {
  std::string request_id;
  double communication_ms = 0.0;
  double generation_ms = 0.0;
  double end_to_end_ms = 0.0;
  double server_total_ms = 0.0;
};

struct LatencyReport {
  std::vector<LatencySample> samples;
  double mean_communication_ms = 0.0;
  double mean_generation_ms = 0.0;
  double mean_end_to_end_ms = 0.0;

  static LatencyReport from_samples(std::vector<LatencySample> samples);
  nlohmann::json to_json() const;
};

}  // namespace scenerag
