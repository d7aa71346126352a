#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "evcorridor/serve.hpp"

namespace evc {

// WebSocket front end for one ServeSession: one text frame per WireMessage, one console
// at a time (later connections get an error and are closed). Everything, including the
// control-step timer, runs on the thread that calls run().
class WsServer {
public:
    WsServer(ServeSession& session, const std::string& address, uint16_t port);
    ~WsServer();
    WsServer(const WsServer&) = delete;
    WsServer& operator=(const WsServer&) = delete;

    uint16_t port() const;
    void run();
    // Safe from any thread.
    void stop();
    // SIGINT/SIGTERM stop run().
    void stop_on_signals();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace evc
