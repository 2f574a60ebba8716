#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mgp/distribution.hpp"

namespace mgp {

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port" or ":port".
    static Endpoint parse(std::string_view text);
    std::string str() const;
};

enum class ServiceTask { classification, regression };

namespace wire {

inline constexpr int kProtocolVersion = 1;
/// Probabilities in a response must sum to one within this tolerance.
inline constexpr double kSumTolerance = 1e-6;

struct Handshake {
    int protocol = kProtocolVersion;
    std::size_t max_context = 0;
};

/// Context rows are row-major with `dim` features each.
struct Request {
    std::int64_t id = 0;
    ServiceTask task = ServiceTask::classification;
    std::size_t dim = 0;
    std::vector<double> context_x;
    std::vector<double> context_y;
    std::vector<double> query_x;

    std::size_t context_rows() const noexcept { return context_y.size(); }
};

struct Response {
    std::int64_t id = 0;
    std::optional<PredictedDistribution> distribution;  // Categorical or BinnedContinuous
    std::string error;
};

std::string encode(const Handshake& h);
Handshake decode_handshake(std::string_view line);

/// Single-line JSON. The query-less context view avoids copying the context.
std::string encode_request(std::int64_t id, ServiceTask task, std::size_t dim, std::span<const double> context_x,
                           std::span<const double> context_y, std::span<const double> query_x);
Request decode_request(std::string_view line);

std::string encode(const Response& r);
/// Parses and validates; throws ProtocolError on malformed content, a sum off
/// by more than kSumTolerance, or non-ascending edges.
Response decode_response(std::string_view line);

}  // namespace wire

/// Blocking newline-delimited TCP stream.
class LineSocket {
public:
    LineSocket() = default;
    explicit LineSocket(int fd) : fd_(fd) {}
    ~LineSocket();
    LineSocket(LineSocket&& other) noexcept;
    LineSocket& operator=(LineSocket&& other) noexcept;
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;

    static LineSocket connect(const Endpoint& endpoint, std::chrono::milliseconds timeout);

    bool open() const noexcept { return fd_ >= 0; }
    void write_line(std::string_view line);
    /// Next line without its terminator; nullopt on orderly close.
    std::optional<std::string> read_line();
    /// Whether a complete line is buffered or data arrives within the wait.
    bool readable(std::chrono::milliseconds wait);
    void close() noexcept;

private:
    int fd_ = -1;
    std::string buffer_;
};

/// Client side of the predictive-service protocol over one connection.
class ServiceClient {
public:
    ServiceClient(const Endpoint& endpoint, ServiceTask task,
                  std::chrono::milliseconds timeout = std::chrono::seconds(30));

    const wire::Handshake& handshake() const noexcept { return handshake_; }

    PredictedDistribution query(std::size_t dim, std::span<const double> context_x, std::span<const double> context_y,
                                std::span<const double> query_x);
    /// Pipelines one request per query row; answers may arrive in any order and
    /// are returned in query order.
    std::vector<PredictedDistribution> query_many(std::size_t dim, std::span<const double> context_x,
                                                  std::span<const double> context_y,
                                                  std::span<const double> queries);

private:
    LineSocket socket_;
    ServiceTask task_;
    wire::Handshake handshake_;
    std::int64_t next_id_ = 1;
};

enum class MockMode {
    constant,     // fixed categorical probabilities
    empirical,    // class frequencies of the context labels
    gaussian,     // grid discretization of N(mean, sd) of the context responses
    bad_sum,      // probabilities scaled to sum to 0.8
    bad_edges,    // grid with descending edges
    error,        // error object for every request
};

struct MockServerOptions {
    MockMode mode = MockMode::constant;
    std::vector<double> probs{0.3, 0.7};
    std::size_t num_classes = 2;
    std::size_t bins = 64;
    std::size_t max_context = 10000;
    /// Answer requests that arrive together in reverse order.
    bool reverse_batches = false;
};

MockMode parse_mock_mode(std::string_view name);

/// Deterministic in-process predictive service for tests and offline runs.
/// Each connection is served on its own thread.
class MockServer {
public:
    MockServer(MockServerOptions options, const Endpoint& bind = {});
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    Endpoint endpoint() const;
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

    /// Reply to one decoded request.
    static wire::Response respond(const MockServerOptions& options, const wire::Request& request);

private:
    void accept_loop();
    void serve(int fd);

    MockServerOptions options_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::string host_;
    std::atomic<bool> stopping_{false};
    std::mutex mutex_;
    std::vector<std::jthread> workers_;
    std::vector<int> client_fds_;
    std::jthread acceptor_;
};

}  // namespace mgp
