#pragma once

#include <memory>
#include <string>
#include <thread>

#include "geoproof/coordinator.hpp"

namespace httplib {
class Server;
}

namespace geoproof::coordinator {

/// JSON-over-HTTP front end for a Coordinator:
///   POST /register        {id, public_key, location:{lat,lon}, mapping}
///   POST /register-waldo  {id, public_key, host, port}
///   POST /heartbeat       {id, timestamp_ms, signature}
///   POST /initiate        {waldo_id, claimed:{lat,lon}, beta, tau_ms}
///   GET  /pending?challenger_id=ID
///   POST /submit          {challenge_id, challenger_id, transcript}
///   POST /finalize        {challenge_id}
///   GET  /bundle?challenge_id=ID
///   POST /verify          {bundle}
///   GET  /registry
/// Errors come back as status 400/404 with {error, message}.
class CoordinatorServer {
public:
    /// port 0 binds an ephemeral port; see port() after start().
    CoordinatorServer(Coordinator& core, const std::string& host = "127.0.0.1", int port = 0);
    ~CoordinatorServer();

    CoordinatorServer(const CoordinatorServer&) = delete;
    CoordinatorServer& operator=(const CoordinatorServer&) = delete;

    void start();
    void stop();
    int port() const { return port_; }

private:
    void route();

    Coordinator& core_;
    std::string host_;
    int port_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace geoproof::coordinator
