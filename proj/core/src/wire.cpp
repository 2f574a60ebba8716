#include "mgp/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mgp/error.hpp"
#include "mgp/normal.hpp"

namespace mgp {

using nlohmann::json;

Endpoint Endpoint::parse(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos) throw ValidationError("endpoint '" + std::string(text) + "' is not host:port");
    Endpoint e;
    if (colon > 0) e.host = std::string(text.substr(0, colon));
    const auto port = text.substr(colon + 1);
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc{} || ptr != port.data() + port.size() || value > 65535) {
        throw ValidationError("endpoint '" + std::string(text) + "' has an invalid port");
    }
    e.port = static_cast<std::uint16_t>(value);
    return e;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

namespace wire {

namespace {

std::string_view task_name(ServiceTask t) { return t == ServiceTask::classification ? "classification" : "regression"; }

json parse_line(std::string_view line) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON line: ") + e.what());
    }
}

std::vector<double> numbers(const json& j, const char* field) {
    if (!j.is_array()) throw ProtocolError(std::string("field '") + field + "' is not an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw ProtocolError(std::string("field '") + field + "' holds a non-number");
        out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace

std::string encode(const Handshake& h) {
    return json{{"protocol", h.protocol}, {"max_context", h.max_context}}.dump();
}

Handshake decode_handshake(std::string_view line) {
    const json j = parse_line(line);
    if (!j.is_object() || !j.contains("protocol") || !j.contains("max_context")) {
        throw ProtocolError("handshake lacks protocol or max_context");
    }
    Handshake h;
    h.protocol = j.at("protocol").get<int>();
    h.max_context = j.at("max_context").get<std::size_t>();
    if (h.protocol != kProtocolVersion) throw ProtocolError("unsupported protocol version " + std::to_string(h.protocol));
    return h;
}

std::string encode_request(std::int64_t id, ServiceTask task, std::size_t dim, std::span<const double> context_x,
                           std::span<const double> context_y, std::span<const double> query_x) {
    json rows = json::array();
    for (std::size_t i = 0; i < context_y.size(); ++i) {
        rows.push_back(std::vector<double>(context_x.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                           context_x.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim)));
    }
    json j{{"id", id},
           {"task", task_name(task)},
           {"context", {{"x", std::move(rows)}, {"y", std::vector<double>(context_y.begin(), context_y.end())}}},
           {"query_x", std::vector<double>(query_x.begin(), query_x.end())}};
    return j.dump();
}

Request decode_request(std::string_view line) {
    const json j = parse_line(line);
    Request r;
    try {
        r.id = j.at("id").get<std::int64_t>();
        const auto task = j.at("task").get<std::string>();
        if (task == "classification") {
            r.task = ServiceTask::classification;
        } else if (task == "regression") {
            r.task = ServiceTask::regression;
        } else {
            throw ProtocolError("unknown task '" + task + "'");
        }
        r.query_x = numbers(j.at("query_x"), "query_x");
        r.dim = r.query_x.size();
        const auto& ctx = j.at("context");
        r.context_y = numbers(ctx.at("y"), "y");
        const auto& xs = ctx.at("x");
        if (!xs.is_array() || xs.size() != r.context_y.size()) throw ProtocolError("context x and y lengths differ");
        for (const auto& row : xs) {
            auto v = numbers(row, "x");
            if (v.size() != r.dim) throw ProtocolError("context row width differs from query width");
            r.context_x.insert(r.context_x.end(), v.begin(), v.end());
        }
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed request: ") + e.what());
    }
    return r;
}

std::string encode(const Response& r) {
    json j{{"id", r.id}};
    if (!r.error.empty() || !r.distribution) {
        j["error"] = r.error.empty() ? "no distribution" : r.error;
    } else if (const auto* c = std::get_if<Categorical>(&*r.distribution)) {
        j["type"] = "categorical";
        j["probs"] = c->probs;
    } else if (const auto* b = std::get_if<BinnedContinuous>(&*r.distribution)) {
        j["type"] = "grid";
        j["edges"] = b->edges;
        j["probs"] = b->probs;
    } else {
        throw ProtocolError("analytic distributions cannot be sent over the wire");
    }
    return j.dump();
}

Response decode_response(std::string_view line) {
    const json j = parse_line(line);
    Response r;
    try {
        r.id = j.at("id").get<std::int64_t>();
        if (j.contains("error")) {
            r.error = j.at("error").is_string() ? j.at("error").get<std::string>() : j.at("error").dump();
            return r;
        }
        const auto type = j.at("type").get<std::string>();
        if (type == "categorical") {
            r.distribution = Categorical{numbers(j.at("probs"), "probs")};
        } else if (type == "grid") {
            r.distribution = BinnedContinuous{numbers(j.at("edges"), "edges"), numbers(j.at("probs"), "probs")};
        } else {
            throw ProtocolError("unknown response type '" + type + "'");
        }
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed response: ") + e.what());
    }
    validate(*r.distribution, kSumTolerance);
    return r;
}

}  // namespace wire

LineSocket::~LineSocket() { close(); }

LineSocket::LineSocket(LineSocket&& other) noexcept : fd_(other.fd_), buffer_(std::move(other.buffer_)) {
    other.fd_ = -1;
}

LineSocket& LineSocket::operator=(LineSocket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        buffer_ = std::move(other.buffer_);
        other.fd_ = -1;
    }
    return *this;
}

void LineSocket::close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

LineSocket LineSocket::connect(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const auto port = std::to_string(endpoint.port);
    if (const int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
        throw TransportError("cannot resolve " + endpoint.str() + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(found);
    if (fd < 0) throw TransportError("cannot connect to " + endpoint.str() + ": " + std::strerror(errno));
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return LineSocket(fd);
}

void LineSocket::write_line(std::string_view line) {
    if (fd_ < 0) throw TransportError("write on a closed socket");
    std::string data(line);
    data.push_back('\n');
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("send failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::optional<std::string> LineSocket::read_line() {
    if (fd_ < 0) throw TransportError("read on a closed socket");
    for (;;) {
        if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
            std::string line = buffer_.substr(0, pos);
            buffer_.erase(0, pos + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        char chunk[65536];
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n == 0) {
            if (!buffer_.empty()) throw TransportError("connection closed mid-line");
            return std::nullopt;
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK) throw TransportError("read timed out");
            throw TransportError(std::string("recv failed: ") + std::strerror(errno));
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

bool LineSocket::readable(std::chrono::milliseconds wait) {
    if (buffer_.find('\n') != std::string::npos) return true;
    pollfd p{fd_, POLLIN, 0};
    return ::poll(&p, 1, static_cast<int>(wait.count())) > 0;
}

ServiceClient::ServiceClient(const Endpoint& endpoint, ServiceTask task, std::chrono::milliseconds timeout)
    : socket_(LineSocket::connect(endpoint, timeout)), task_(task) {
    const auto line = socket_.read_line();
    if (!line) throw TransportError("service closed the connection before the handshake");
    handshake_ = wire::decode_handshake(*line);
}

PredictedDistribution ServiceClient::query(std::size_t dim, std::span<const double> context_x,
                                           std::span<const double> context_y, std::span<const double> query_x) {
    return std::move(query_many(dim, context_x, context_y, query_x).front());
}

std::vector<PredictedDistribution> ServiceClient::query_many(std::size_t dim, std::span<const double> context_x,
                                                             std::span<const double> context_y,
                                                             std::span<const double> queries) {
    if (context_y.size() > handshake_.max_context) {
        throw ProtocolError("context of " + std::to_string(context_y.size()) + " rows exceeds the service maximum " +
                            std::to_string(handshake_.max_context));
    }
    if (context_x.size() != context_y.size() * dim) throw ValidationError("context shape mismatch");
    const std::size_t count = dim == 0 ? 1 : queries.size() / dim;
    if (count * dim != queries.size() || count == 0) throw ValidationError("query shape mismatch");

    std::map<std::int64_t, std::size_t> pending;
    for (std::size_t q = 0; q < count; ++q) {
        const std::int64_t id = next_id_++;
        pending.emplace(id, q);
        socket_.write_line(wire::encode_request(id, task_, dim, context_x, context_y, queries.subspan(q * dim, dim)));
    }
    std::vector<std::optional<PredictedDistribution>> out(count);
    while (!pending.empty()) {
        const auto line = socket_.read_line();
        if (!line) throw TransportError("service closed the connection with requests outstanding");
        auto response = wire::decode_response(*line);
        const auto it = pending.find(response.id);
        if (it == pending.end()) throw ProtocolError("response id " + std::to_string(response.id) + " was not requested");
        if (!response.error.empty()) throw ProtocolError("service error: " + response.error);
        if (task_ == ServiceTask::classification && !std::holds_alternative<Categorical>(*response.distribution)) {
            throw ProtocolError("classification request answered with a grid");
        }
        if (task_ == ServiceTask::regression && !std::holds_alternative<BinnedContinuous>(*response.distribution)) {
            throw ProtocolError("regression request answered with categorical probabilities");
        }
        out[it->second] = std::move(response.distribution);
        pending.erase(it);
    }
    std::vector<PredictedDistribution> result;
    result.reserve(count);
    for (auto& d : out) result.push_back(std::move(*d));
    return result;
}

MockMode parse_mock_mode(std::string_view name) {
    if (name == "constant") return MockMode::constant;
    if (name == "empirical") return MockMode::empirical;
    if (name == "gaussian") return MockMode::gaussian;
    if (name == "bad_sum") return MockMode::bad_sum;
    if (name == "bad_edges") return MockMode::bad_edges;
    if (name == "error") return MockMode::error;
    throw ValidationError("unknown mock mode '" + std::string(name) + "'");
}

wire::Response MockServer::respond(const MockServerOptions& options, const wire::Request& request) {
    wire::Response r;
    r.id = request.id;
    if (request.context_rows() > options.max_context) {
        r.error = "context exceeds max_context";
        return r;
    }
    if (options.mode == MockMode::error) {
        r.error = "mock failure";
        return r;
    }
    if (request.task == ServiceTask::regression || options.mode == MockMode::gaussian) {
        const auto& y = request.context_y;
        double mean = 0.0;
        double sd = 1.0;
        if (!y.empty()) {
            mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
            double ss = 0.0;
            for (const double v : y) ss += (v - mean) * (v - mean);
            if (y.size() > 1 && ss > 0.0) sd = std::sqrt(ss / static_cast<double>(y.size() - 1));
        }
        BinnedContinuous grid;
        const std::size_t bins = std::max<std::size_t>(options.bins, 2);
        for (std::size_t k = 0; k <= bins; ++k) {
            grid.edges.push_back(mean + sd * (-6.0 + 12.0 * static_cast<double>(k) / static_cast<double>(bins)));
        }
        double total = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double p = normal::cdf((grid.edges[k + 1] - mean) / sd) - normal::cdf((grid.edges[k] - mean) / sd);
            grid.probs.push_back(p);
            total += p;
        }
        for (double& p : grid.probs) p /= total;
        if (options.mode == MockMode::bad_edges) std::reverse(grid.edges.begin(), grid.edges.end());
        if (options.mode == MockMode::bad_sum) {
            for (double& p : grid.probs) p *= 0.8;
        }
        r.distribution = std::move(grid);
        return r;
    }
    std::vector<double> probs = options.probs;
    if (options.mode == MockMode::empirical) {
        probs.assign(options.num_classes, 0.0);
        for (const double y : request.context_y) {
            const auto k = static_cast<std::size_t>(y);
            if (k < probs.size()) probs[k] += 1.0;
        }
        const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
        for (double& p : probs) p = total > 0.0 ? p / total : 1.0 / static_cast<double>(probs.size());
    }
    if (options.mode == MockMode::bad_sum) {
        for (double& p : probs) p *= 0.8;
    }
    r.distribution = Categorical{std::move(probs)};
    return r;
}

MockServer::MockServer(MockServerOptions options, const Endpoint& bind) : options_(std::move(options)) {
    host_ = bind.host.empty() ? "127.0.0.1" : bind.host;
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(bind.port);
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw ValidationError("mock server binds IPv4 addresses only, got '" + host_ + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
        const std::string msg = std::strerror(errno);
        ::close(listen_fd_);
        throw TransportError("cannot listen on " + bind.str() + ": " + msg);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::jthread([this] { accept_loop(); });
}

MockServer::~MockServer() { stop(); }

Endpoint MockServer::endpoint() const { return Endpoint{host_, port_}; }

void MockServer::stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    std::vector<std::jthread> workers;
    {
        std::lock_guard lock(mutex_);
        for (const int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    workers.clear();
}

void MockServer::wait() {
    while (!stopping_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void MockServer::accept_loop() {
    while (!stopping_.load()) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 100) <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        std::lock_guard lock(mutex_);
        if (stopping_.load()) {
            ::close(fd);
            break;
        }
        client_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve(fd); });
    }
}

void MockServer::serve(int fd) {
    LineSocket socket(fd);
    try {
        socket.write_line(wire::encode(wire::Handshake{wire::kProtocolVersion, options_.max_context}));
        for (;;) {
            std::vector<std::string> batch;
            auto line = socket.read_line();
            if (!line) break;
            batch.push_back(std::move(*line));
            if (options_.reverse_batches) {
                while (socket.readable(std::chrono::milliseconds(50))) {
                    auto more = socket.read_line();
                    if (!more) break;
                    batch.push_back(std::move(*more));
                }
                std::reverse(batch.begin(), batch.end());
            }
            for (const auto& request_line : batch) {
                wire::Response response;
                try {
                    response = respond(options_, wire::decode_request(request_line));
                } catch (const Error& e) {
                    response.error = e.what();
                }
                socket.write_line(wire::encode(response));
            }
        }
    } catch (const Error&) {
        // peer went away
    }
    std::lock_guard lock(mutex_);
    client_fds_.erase(std::remove(client_fds_.begin(), client_fds_.end(), fd), client_fds_.end());
}

}  // namespace mgp
