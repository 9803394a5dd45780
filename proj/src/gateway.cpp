#include "fepagent/gateway.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fepagent/error.hpp"

namespace fep::gateway {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;
using nlohmann::ordered_json;

Endpoint parse_endpoint(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == bind.size()) {
        throw InvalidConfiguration("bind address must look like host:port, got '" + bind + "'");
    }
    Endpoint ep;
    ep.host = bind.substr(0, colon);
    const auto port_text = bind.substr(colon + 1);
    char* end = nullptr;
    const long port = std::strtol(port_text.c_str(), &end, 10);
    if (*end != '\0' || port < 0 || port > 65535) throw InvalidConfiguration("invalid port '" + port_text + "'");
    ep.port = static_cast<unsigned short>(port);
    return ep;
}

ServerConfig config_from_env() {
    ServerConfig cfg;
    const char* bind = std::getenv("FEP_BIND");
    cfg.bind = parse_endpoint(bind && *bind ? bind : kDefaultBind);
    return cfg;
}

void configure_logging_from_env() {
    const char* level = std::getenv("FEP_LOG");
    if (!level || !*level) {
        spdlog::set_level(spdlog::level::info);
        return;
    }
    const auto parsed = spdlog::level::from_str(level);
    // from_str maps unknown names to off; only accept that for "off" itself.
    if (parsed == spdlog::level::off && std::string(level) != "off") {
        throw InvalidConfiguration(std::string("unknown FEP_LOG level '") + level + "'");
    }
    spdlog::set_level(parsed);
}

namespace {

std::string error_frame(const std::string& code, const std::string& reason) {
    ordered_json j;
    j["error"] = code;
    j["reason"] = reason;
    return j.dump();
}

std::string mismatch_frame(const std::string& code, std::size_t expected, std::size_t got) {
    ordered_json j;
    j["error"] = code;
    j["expected"] = expected;
    j["got"] = got;
    return j.dump();
}

}  // namespace

Session::Session(const arena::Models& models, SessionDefaults defaults)
    : models_(&models), defaults_(std::move(defaults)) {}

std::string Session::heartbeat() const {
    ordered_json j;
    j["hb"] = frames_;
    return j.dump();
}

Session::Reply Session::handshake(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        return {{error_frame("malformed", e.what())}, false};
    }
    if (!j.is_object() || !j.contains("session") || !j["session"].is_object()) {
        return {{error_frame("handshake_required", "first message must be {\"session\": {...}}")}, false};
    }
    const auto& s = j["session"];
    try {
        if (!s.contains("dim")) return {{error_frame("malformed", "session.dim is required")}, false};
        const auto dim = s["dim"].get<std::size_t>();
        if (dim != models_->dim()) return {{mismatch_frame("dim_mismatch", models_->dim(), dim)}, true};
        if (s.contains("n_states")) {
            const auto n = s["n_states"].get<std::size_t>();
            if (n != models_->hmm.n_states) {
                return {{mismatch_frame("n_states_mismatch", models_->hmm.n_states, n)}, true};
            }
        }
        arena::AgentConfig cfg = defaults_.agent;
        if (s.contains("method")) cfg.method = arena::method_from_string(s["method"].get<std::string>());
        if (s.contains("weights")) {
            const auto& w = s["weights"];
            cfg.fep.w_epistemic = w.value("w_e", cfg.fep.w_epistemic);
            cfg.fep.w_pragmatic = w.value("w_p", cfg.fep.w_pragmatic);
        }
        const auto seed = s.value("seed", std::uint64_t{0});
        agent_ = std::make_unique<arena::Agent>(*models_, cfg, seed);

        ordered_json ok;
        ok["tick_hz"] = kTickHz;
        ok["L"] = models_->window();
        ok["K"] = cfg.fep.horizon;
        ok["dim"] = models_->dim();
        ok["n_states"] = models_->hmm.n_states;
        ok["method"] = arena::to_string(cfg.method);
        ok["rate_policy"] = "one_in_one_out";
        ordered_json reply;
        reply["ok"] = ok;
        spdlog::info("session established: method={} seed={}", arena::to_string(cfg.method), seed);
        return {{reply.dump()}, false};
    } catch (const json::exception& e) {
        return {{error_frame("malformed", e.what())}, false};
    } catch (const Error& e) {
        return {{error_frame("bad_config", e.what())}, false};
    }
}

Session::Reply Session::handle(const std::string& text) {
    if (!agent_) return handshake(text);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        return {{error_frame("malformed", e.what())}, false};
    }
    if (!j.is_object()) return {{error_frame("malformed", "expected a JSON object")}, false};
    if (j.contains("session")) return {{error_frame("already_established", "handshake already done")}, false};
    if (!j.contains("tick") || !j["tick"].is_number_integer() || !j.contains("partner_pose") ||
        !j["partner_pose"].is_array()) {
        return {{error_frame("malformed", "frame needs integer tick and partner_pose array")}, false};
    }
    const auto tick = j["tick"].get<std::int64_t>();
    if (last_tick_ && tick <= *last_tick_) {
        ordered_json e;
        e["error"] = "tick_order";
        e["last"] = *last_tick_;
        e["got"] = tick;
        return {{e.dump()}, false};
    }
    PoseVector pose;
    try {
        pose = j["partner_pose"].get<PoseVector>();
    } catch (const json::exception& e) {
        return {{error_frame("malformed", e.what())}, false};
    }
    if (pose.size() != models_->dim()) return {{mismatch_frame("dim_mismatch", models_->dim(), pose.size())}, false};

    arena::TickRecord rec;
    try {
        rec = agent_->step(pose);
    } catch (const Error& e) {
        return {{error_frame("runtime", e.what())}, false};
    }
    last_tick_ = tick;
    ++frames_;
    ordered_json out;
    out["tick"] = tick;
    out["agent_pose"] = rec.agent;
    out["belief"] = rec.belief;
    out["chosen_free_energy"] = rec.chosen_free_energy ? ordered_json(*rec.chosen_free_energy) : ordered_json(nullptr);
    out["disc_score"] = rec.disc_score ? ordered_json(*rec.disc_score) : ordered_json(nullptr);
    return {{out.dump()}, false};
}

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket&& socket, const arena::Models& models, const ServerConfig& cfg,
               std::atomic<std::size_t>& live)
        : ws_(std::move(socket)),
          heartbeat_(ws_.get_executor()),
          session_(models, cfg.defaults),
          period_(cfg.heartbeat),
          live_(live) {
        ++live_;
    }
    ~Connection() { --live_; }

    void run() {
        net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->on_run(); });
    }

    // Drops the socket; pending operations finish with an error and release the connection.
    void abort() {
        net::dispatch(ws_.get_executor(), [self = shared_from_this()] {
            self->dead_ = true;
            self->heartbeat_.cancel();
            beast::error_code ignored;
            beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_both, ignored);
            beast::get_lowest_layer(self->ws_).close();
        });
    }

private:
    void on_run() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.text(true);
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

    void on_accept(beast::error_code ec) {
        if (ec) {
            spdlog::debug("websocket accept failed: {}", ec.message());
            return;
        }
        spdlog::debug("client connected");
        schedule_heartbeat();
        do_read();
    }

    void schedule_heartbeat() {
        heartbeat_.expires_after(period_);
        heartbeat_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->closing_ || self->dead_) return;
            self->send(self->session_.heartbeat());
            self->schedule_heartbeat();
        });
    }

    void do_read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            if (ec != websocket::error::closed) spdlog::debug("read ended: {}", ec.message());
            shutdown();
            return;
        }
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        auto reply = session_.handle(text);
        for (auto& m : reply.messages) send(std::move(m));
        if (reply.close) {
            closing_ = true;
            if (outbox_.empty()) do_close();
            return;
        }
        do_read();
    }

    void send(std::string message) {
        if (dead_) return;
        outbox_.push_back(std::move(message));
        if (outbox_.size() == 1) do_write();
    }

    void do_write() {
        ws_.async_write(net::buffer(outbox_.front()),
                        [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
    }

    void on_write(beast::error_code ec) {
        if (ec) {
            shutdown();
            return;
        }
        outbox_.pop_front();
        if (!outbox_.empty()) {
            do_write();
        } else if (closing_) {
            do_close();
        }
    }

    void do_close() {
        ws_.async_close(websocket::close_code::policy_error,
                        [self = shared_from_this()](beast::error_code) { self->shutdown(); });
    }

    void shutdown() {
        dead_ = true;
        heartbeat_.cancel();
    }

    websocket::stream<beast::tcp_stream> ws_;
    net::steady_timer heartbeat_;
    beast::flat_buffer buffer_;
    std::deque<std::string> outbox_;
    Session session_;
    std::chrono::milliseconds period_;
    std::atomic<std::size_t>& live_;
    bool closing_ = false;
    bool dead_ = false;
};

}  // namespace

struct Server::Impl {
    Impl(const arena::Models& m, ServerConfig c)
        : models(m), cfg(std::move(c)), ioc(static_cast<int>(std::max<std::size_t>(1, cfg.threads))), acceptor(ioc) {}

    void do_accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (!ec) {
                auto conn = std::make_shared<Connection>(std::move(socket), models, cfg, live);
                {
                    std::lock_guard lock(mu);
                    std::erase_if(connections, [](const auto& w) { return w.expired(); });
                    connections.push_back(conn);
                }
                conn->run();
            } else if (ec == net::error::operation_aborted) {
                return;
            }
            if (acceptor.is_open()) do_accept();
        });
    }

    const arena::Models& models;
    ServerConfig cfg;
    net::io_context ioc;
    tcp::acceptor acceptor;
    std::vector<std::thread> workers;
    std::atomic<std::size_t> live{0};
    bool started = false;
    std::mutex mu;
    std::condition_variable stopped;
    std::vector<std::weak_ptr<Connection>> connections;
};

Server::Server(const arena::Models& models, ServerConfig cfg) : impl_(std::make_unique<Impl>(models, std::move(cfg))) {
    models.check();
}

Server::~Server() { stop(); }

unsigned short Server::start() {
    auto& im = *impl_;
    if (im.started) throw InvalidConfiguration("server already started");
    beast::error_code ec;
    const auto address = net::ip::make_address(im.cfg.bind.host, ec);
    if (ec) throw InvalidConfiguration("invalid bind host '" + im.cfg.bind.host + "'");
    const tcp::endpoint ep(address, im.cfg.bind.port);
    im.acceptor.open(ep.protocol());
    im.acceptor.set_option(net::socket_base::reuse_address(true));
    im.acceptor.bind(ep, ec);
    if (ec) throw Error("cannot bind " + im.cfg.bind.host + ":" + std::to_string(im.cfg.bind.port) + ": " + ec.message());
    im.acceptor.listen(net::socket_base::max_listen_connections);
    {
        std::lock_guard lock(im.mu);
        im.started = true;
    }
    im.do_accept();
    const auto port = im.acceptor.local_endpoint().port();
    spdlog::info("gateway listening on {}:{}", im.cfg.bind.host, port);
    for (std::size_t i = 0; i < std::max<std::size_t>(1, im.cfg.threads); ++i) {
        im.workers.emplace_back([&im] { im.ioc.run(); });
    }
    return port;
}

void Server::wait() {
    std::unique_lock lock(impl_->mu);
    impl_->stopped.wait(lock, [this] { return !impl_->started; });
}

void Server::stop() {
    auto& im = *impl_;
    if (!im.started) return;
    net::post(im.ioc, [&im] {
        beast::error_code ignored;
        im.acceptor.close(ignored);
    });
    std::vector<std::shared_ptr<Connection>> open;
    {
        std::lock_guard lock(im.mu);
        for (auto& w : im.connections) {
            if (auto c = w.lock()) open.push_back(std::move(c));
        }
        im.connections.clear();
    }
    for (auto& c : open) c->abort();
    open.clear();
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    while (im.live.load() > 0 && std::chrono::steady_clock::now() < deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    im.ioc.stop();
    for (auto& t : im.workers) t.join();
    im.workers.clear();
    im.ioc.restart();
    {
        std::lock_guard lock(im.mu);
        im.started = false;
    }
    im.stopped.notify_all();
}

std::size_t Server::active_sessions() const { return impl_->live.load(); }

}  // namespace fep::gateway
