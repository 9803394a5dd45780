#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fepagent/arena.hpp"

// Live streaming service. A client sends partner pose frames over a
// WebSocket; every frame is answered by exactly one agent frame.
namespace fep::gateway {

inline constexpr const char* kDefaultBind = "127.0.0.1:7878";
inline constexpr double kTickHz = 8.0;

struct Endpoint {
    std::string host = "127.0.0.1";
    unsigned short port = 7878;
};
// "host:port"; throws InvalidConfiguration.
Endpoint parse_endpoint(const std::string& bind);

struct SessionDefaults {
    arena::AgentConfig agent;
};

// Transport-free protocol state of one connection. handle() consumes one
// text message and returns the replies to send, in order.
class Session {
public:
    Session(const arena::Models& models, SessionDefaults defaults = {});

    struct Reply {
        std::vector<std::string> messages;
        bool close = false;  // reject: send messages, then close the connection
    };
    Reply handle(const std::string& text);

    bool established() const { return agent_ != nullptr; }
    std::size_t frames() const { return frames_; }
    std::string heartbeat() const;

private:
    Reply handshake(const std::string& text);

    const arena::Models* models_;
    SessionDefaults defaults_;
    std::unique_ptr<arena::Agent> agent_;
    std::optional<std::int64_t> last_tick_;
    std::size_t frames_ = 0;
};

struct ServerConfig {
    Endpoint bind;
    std::chrono::milliseconds heartbeat{5000};
    std::size_t threads = 2;
    SessionDefaults defaults;
};

// Reads FEP_BIND (default kDefaultBind).
ServerConfig config_from_env();
// Applies FEP_LOG (trace, debug, info, warn, error, off) to the gateway logger.
void configure_logging_from_env();

class Server {
public:
    Server(const arena::Models& models, ServerConfig cfg);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts the worker threads; returns the bound port (useful with port 0).
    unsigned short start();
    // Blocks until stop() is called from elsewhere.
    void wait();
    void stop();
    std::size_t active_sessions() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace fep::gateway
