#include "geoproof/coordinator_http.hpp"

#include <httplib.h>

namespace geoproof::coordinator {

namespace {

using nlohmann::json;

void reply_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

/// Runs a handler and converts coordinator errors into structured responses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const CoordinatorError& e) {
        reply_json(res, {{"error", e.code}, {"message", e.what()}}, 400);
    } catch (const std::exception& e) {
        reply_json(res, {{"error", "BadRequest"}, {"message", e.what()}}, 400);
    }
}

json pending_json(const PendingChallenge& p) {
    return {{"challenge_id", p.challenge_id},
            {"packet_challenge_id", crypto::to_hex(p.packet_challenge_id)},
            {"waldo_id", p.waldo_id},
            {"host", p.waldo_endpoint.host},
            {"port", p.waldo_endpoint.port},
            {"waldo_public_key", crypto::to_hex(p.waldo_public_key)}};
}

}  // namespace

CoordinatorServer::CoordinatorServer(Coordinator& core, const std::string& host, int port)
    : core_(core), host_(host), port_(port), server_(std::make_unique<httplib::Server>()) {
    route();
}

CoordinatorServer::~CoordinatorServer() { stop(); }

void CoordinatorServer::route() {
    server_->Post("/register", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            core_.register_challenger(body.at("id").get<std::string>(),
                                      crypto::from_hex(body.at("public_key").get<std::string>()),
                                      GeoPoint{body.at("location").at("lat").get<double>(),
                                               body.at("location").at("lon").get<double>()},
                                      poig::mapping_from_json(body.at("mapping").dump()));
            reply_json(res, {{"ok", true}});
        });
    });

    server_->Post("/register-waldo", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            core_.register_waldo(body.at("id").get<std::string>(),
                                 crypto::from_hex(body.at("public_key").get<std::string>()),
                                 {body.at("host").get<std::string>(), body.at("port").get<uint16_t>()});
            reply_json(res, {{"ok", true}});
        });
    });

    server_->Post("/heartbeat", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            core_.heartbeat(body.at("id").get<std::string>(), body.at("timestamp_ms").get<int64_t>(),
                            crypto::from_hex(body.at("signature").get<std::string>()));
            reply_json(res, {{"ok", true}});
        });
    });

    server_->Post("/initiate", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            const Challenge ch = core_.initiate_challenge(
                body.at("waldo_id").get<std::string>(),
                GeoPoint{body.at("claimed").at("lat").get<double>(), body.at("claimed").at("lon").get<double>()},
                body.at("beta").get<double>(), body.at("tau_ms").get<int64_t>());
            reply_json(res, {{"challenge_id", ch.id},
                             {"selected", ch.selected},
                             {"packet_challenge_id", crypto::to_hex(packet_challenge_id(ch.id))}});
        });
    });

    server_->Get("/pending", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto pending = core_.pending_for(req.get_param_value("challenger_id"));
            json out = json::array();
            for (const auto& p : pending) out.push_back(pending_json(p));
            reply_json(res, out);
        });
    });

    server_->Post("/submit", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            core_.submit_estimate(body.at("challenge_id").get<std::string>(),
                                  body.at("challenger_id").get<std::string>(),
                                  netprobe::transcript_from_json(body.at("transcript").dump()));
            reply_json(res, {{"ok", true}});
        });
    });

    server_->Post("/finalize", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            reply_json(res, core_.finalize(body.at("challenge_id").get<std::string>()));
        });
    });

    server_->Get("/bundle", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto bundle = core_.get_bundle(req.get_param_value("challenge_id"));
            if (!bundle)
                reply_json(res, {{"error", "NotFound"}, {"message", "no bundle for this challenge"}}, 404);
            else
                reply_json(res, *bundle);
        });
    });

    server_->Post("/verify", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            reply_json(res, {{"valid", verify_bundle(body.at("bundle"), core_.registry_snapshot())}});
        });
    });

    server_->Get("/registry", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            const auto snap = core_.registry_snapshot();
            json challengers = json::object();
            for (const auto& [id, entry] : snap.challengers) {
                json e = {{"public_key", crypto::to_hex(entry.public_key)}};
                if (entry.location) e["location"] = {{"lat", entry.location->lat}, {"lon", entry.location->lon}};
                if (entry.mapping_digest) e["mapping_digest"] = *entry.mapping_digest;
                challengers[id] = std::move(e);
            }
            json waldos = json::object();
            for (const auto& [id, key] : snap.waldos) waldos[id] = crypto::to_hex(key);
            reply_json(res, {{"challengers", challengers}, {"waldos", waldos}});
        });
    });
}

void CoordinatorServer::start() {
    if (thread_.joinable()) return;
    if (port_ == 0)
        port_ = server_->bind_to_any_port(host_);
    else if (!server_->bind_to_port(host_, port_))
        throw std::runtime_error("cannot bind coordinator port " + std::to_string(port_));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void CoordinatorServer::stop() {
    if (!thread_.joinable()) return;
    server_->stop();
    thread_.join();
}

}  // namespace geoproof::coordinator
