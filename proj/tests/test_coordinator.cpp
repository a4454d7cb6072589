#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <memory>

#include <httplib.h>

#include "geoproof/coordinator.hpp"
#include "geoproof/coordinator_http.hpp"

using namespace geoproof;
using namespace geoproof::coordinator;

namespace {

namespace fs = std::filesystem;

struct ManualClock {
    std::shared_ptr<int64_t> t = std::make_shared<int64_t>(1'000'000);
    std::function<int64_t()> fn() const {
        auto p = t;
        return [p] { return *p; };
    }
    void advance(int64_t ms) { *t += ms; }
    int64_t now() const { return *t; }
};

crypto::KeyPair keys_of(uint8_t fill) { return crypto::KeyPair::from_seed(crypto::Bytes(32, fill)); }

// Loopback rtts land below the first knot, mapping to a distance that
// dominates every challenger's range; the index keeps digests distinct.
poig::MonotoneMapping wide_mapping(int i = 0) {
    poig::MonotoneMapping m;
    m.breakpoints = {{0.01, 1000.0 + 10.0 * i}, {1000.0, 3000.0 + 10.0 * i}};
    m.t_max_ms = 10'000.0;
    return m;
}

// A full local rig: coordinator, one waldo responder on loopback, and a set
// of challengers placed around a claimed location.
struct Rig {
    ManualClock clock;
    CoordinatorConfig cfg;
    std::unique_ptr<Coordinator> coord;
    crypto::KeyPair waldo_keys = keys_of(200);
    std::unique_ptr<netprobe::PingResponder> waldo;
    std::vector<crypto::KeyPair> challenger_keys;
    GeoPoint claimed{40.0, -75.0};

    explicit Rig(int n_challengers, const std::string& persist = "", int grid = 90) {
        cfg.persist_dir = persist;
        cfg.proving.grid_size = grid;
        coord = std::make_unique<Coordinator>(cfg, clock.fn());

        waldo = std::make_unique<netprobe::PingResponder>(0, waldo_keys);
        waldo->start();
        coord->register_waldo("waldo-1", waldo_keys.public_key, {"127.0.0.1", waldo->port()});

        for (int i = 0; i < n_challengers; ++i) {
            auto kp = keys_of(uint8_t(10 + i));
            const GeoPoint loc = destination(claimed, Bearing::from_degrees(i * 360.0 / n_challengers),
                                             200.0 + 40.0 * i);
            coord->register_challenger("ch-" + std::to_string(i), kp.public_key, loc, wide_mapping(i));
            waldo->allow(kp.public_key);
            challenger_keys.push_back(std::move(kp));
        }
    }

    std::string challenger_id(int i) const { return "ch-" + std::to_string(i); }

    netprobe::PingTranscript measure_for(int i, const PendingChallenge& pending, int q = 3) {
        netprobe::MeasureOptions opts;
        opts.q = q;
        opts.timeout_ms = 500;
        opts.spacing_ms = 1;
        opts.challenger_id = challenger_id(i);
        opts.waldo_id = pending.waldo_id;
        opts.challenge_id = pending.packet_challenge_id;
        return netprobe::measure({"127.0.0.1", waldo->port()}, opts, challenger_keys[i],
                                 waldo_keys.public_key);
    }
};

void heartbeat_as(Coordinator& coord, const std::string& id, const crypto::KeyPair& keys, int64_t ts) {
    coord.heartbeat(id, ts, crypto::sign(heartbeat_message(id, ts), keys.secret_key));
}

}  // namespace

TEST_CASE("heartbeats: liveness, stale exclusion, replay and bad signature rejection") {
    Rig rig(3);
    auto& coord = *rig.coord;

    CHECK(coord.active_challengers().size() == 3);

    // beyond the ttl every challenger goes stale and selection fails
    rig.clock.advance(61'000);
    CHECK(coord.active_challengers().empty());
    CHECK_THROWS_AS((void)coord.initiate_challenge("waldo-1", rig.claimed, 0.0, 1000), NoChallengersInRange);

    // a fresh signed heartbeat revives one challenger
    heartbeat_as(coord, "ch-0", rig.challenger_keys[0], rig.clock.now());
    CHECK(coord.active_challengers() == std::vector<std::string>{"ch-0"});

    // replayed (non-increasing) timestamp
    CHECK_THROWS_AS(heartbeat_as(coord, "ch-0", rig.challenger_keys[0], rig.clock.now() - 5), StaleTimestamp);
    // signature by the wrong key
    const auto msg = heartbeat_message("ch-1", rig.clock.now());
    CHECK_THROWS_AS(coord.heartbeat("ch-1", rig.clock.now(), crypto::sign(msg, rig.challenger_keys[2].secret_key)),
                    BadSignature);
    CHECK_THROWS_AS(heartbeat_as(coord, "ghost", rig.challenger_keys[0], rig.clock.now()), UnknownChallenger);
}

TEST_CASE("initiate selects exactly the active in-range challengers") {
    Rig rig(8);
    auto& coord = *rig.coord;

    // three of the eight sit beyond the 2000 km selection limit
    for (int i = 0; i < 3; ++i) {
        auto kp = keys_of(uint8_t(60 + i));
        coord.register_challenger("far-" + std::to_string(i), kp.public_key,
                                  destination(rig.claimed, Bearing::from_degrees(i * 100.0), 2500.0 + i * 300),
                                  wide_mapping());
    }

    const auto ch = coord.initiate_challenge("waldo-1", rig.claimed, 0.25, 5000);
    CHECK(ch.selected.size() == 8);
    for (const auto& id : ch.selected) CHECK(id.starts_with("ch-"));
    CHECK(ch.state == ChallengeState::collecting);

    CHECK_THROWS_AS((void)coord.initiate_challenge("waldo-1", rig.claimed, 0.25, 5000), ChallengeInProgress);
    CHECK_THROWS_AS((void)coord.initiate_challenge("nobody", rig.claimed, 0.25, 5000), WaldoUnknown);
}

TEST_CASE("submit: mapping evaluation, disqualification, and every error path") {
    Rig rig(4);
    auto& coord = *rig.coord;
    const auto ch = coord.initiate_challenge("waldo-1", rig.claimed, 0.25, 60'000);

    const auto pending = coord.pending_for("ch-0");
    REQUIRE(pending.size() == 1);
    const auto transcript = rig.measure_for(0, pending[0]);

    coord.submit_estimate(ch.id, "ch-0", transcript);
    const auto stored = coord.challenge(ch.id).estimates.at("ch-0");
    CHECK(!stored.disqualified);
    CHECK(stored.d_hat_km == poig::evaluate(wide_mapping(0), transcript.min_rtt_ms).value());
    CHECK(coord.pending_for("ch-0").empty());

    // duplicate
    CHECK_THROWS_AS(coord.submit_estimate(ch.id, "ch-0", transcript), DuplicateSubmission);
    // not selected
    CHECK_THROWS_AS(coord.submit_estimate(ch.id, "outsider", transcript), NotSelected);
    // unknown challenge
    CHECK_THROWS_AS(coord.submit_estimate("ch-nope", "ch-0", transcript), UnknownChallenge);

    // tampered transcript: edited min rtt
    auto tampered = rig.measure_for(1, coord.pending_for("ch-1").at(0));
    tampered.min_rtt_ms += 1.0;
    CHECK_THROWS_AS(coord.submit_estimate(ch.id, "ch-1", tampered), InvalidTranscript);
    // transcript by the right challenger under the wrong name
    auto misattributed = rig.measure_for(1, coord.pending_for("ch-1").at(0));
    CHECK_THROWS_AS(coord.submit_estimate(ch.id, "ch-2", misattributed), InvalidTranscript);

    // close the first challenge (below quorum after the timer) so a new one
    // can start for the same prover
    rig.clock.advance(60'001);
    CHECK_THROWS_AS((void)coord.finalize(ch.id), QuorumNotMet);

    // a mapping whose cutoff is below any real loopback rtt disqualifies
    poig::MonotoneMapping tiny;
    tiny.breakpoints = {{1e-7, 1.0}};
    tiny.t_max_ms = 1e-6;
    auto kp = keys_of(97);
    coord.register_challenger("ch-tight", kp.public_key, rig.claimed, tiny);
    rig.waldo->allow(kp.public_key);
    const auto ch2 = coord.initiate_challenge("waldo-1", rig.claimed, 0.0, 60'000);
    REQUIRE(std::find(ch2.selected.begin(), ch2.selected.end(), "ch-tight") != ch2.selected.end());

    netprobe::MeasureOptions opts;
    opts.q = 2;
    opts.timeout_ms = 500;
    opts.spacing_ms = 1;
    opts.challenger_id = "ch-tight";
    opts.waldo_id = "waldo-1";
    opts.challenge_id = packet_challenge_id(ch2.id);
    const auto slow = netprobe::measure({"127.0.0.1", rig.waldo->port()}, opts, kp, rig.waldo_keys.public_key);
    coord.submit_estimate(ch2.id, "ch-tight", slow);
    const auto dq = coord.challenge(ch2.id).estimates.at("ch-tight");
    CHECK(dq.disqualified);
    CHECK(dq.d_hat_km == 0.0);
}

TEST_CASE("finalize: quorum rules, bundle verification, tamper detection") {
    Rig rig(5);
    auto& coord = *rig.coord;
    const auto ch = coord.initiate_challenge("waldo-1", rig.claimed, 0.4, 10'000);
    const size_t n = ch.selected.size();
    const int quorum = int(std::ceil((1.0 - 0.4) * double(n))); // 3 of 5

    // nothing submitted, timer still running
    CHECK_THROWS_AS((void)coord.finalize(ch.id), ChallengeNotReady);

    for (int i = 0; i < quorum; ++i)
        coord.submit_estimate(ch.id, rig.challenger_id(i), rig.measure_for(i, coord.pending_for(rig.challenger_id(i)).at(0)));

    // timer not expired and not all estimates in: still not ready
    CHECK_THROWS_AS((void)coord.finalize(ch.id), ChallengeNotReady);

    rig.clock.advance(10'001);
    const auto bundle = coord.finalize(ch.id);
    CHECK(coord.challenge(ch.id).state == ChallengeState::proven);
    CHECK_THROWS_AS((void)coord.finalize(ch.id), AlreadyFinalized);

    const auto snapshot = coord.registry_snapshot();
    CHECK(verify_bundle(bundle, snapshot));

    // submissions after closing
    CHECK_THROWS_AS(coord.submit_estimate(ch.id, rig.challenger_id(3),
                                          rig.measure_for(3, {ch.id, packet_challenge_id(ch.id), "waldo-1",
                                                              {"127.0.0.1", rig.waldo->port()},
                                                              rig.waldo_keys.public_key})),
                    ChallengeClosed);

    // targeted tampering
    auto edited = bundle;
    edited["profile"]["r_star"] = edited["profile"]["r_star"].get<double>() + 1.0;
    CHECK(!verify_bundle(edited, snapshot));

    auto swapped = bundle;
    swapped["challengers"]["ch-0"]["mapping_digest"] = swapped["challengers"]["ch-1"]["mapping_digest"];
    CHECK(!verify_bundle(swapped, snapshot));

    auto inflated = bundle;
    inflated["estimates"]["ch-0"]["d_hat_km"] = 1.0;
    CHECK(!verify_bundle(inflated, snapshot));
}

TEST_CASE("finalize below quorum fails the challenge after the timer") {
    Rig rig(5);
    auto& coord = *rig.coord;
    const auto ch = coord.initiate_challenge("waldo-1", rig.claimed, 0.4, 10'000);

    // one fewer than the 3-of-5 quorum
    for (int i = 0; i < 2; ++i)
        coord.submit_estimate(ch.id, rig.challenger_id(i), rig.measure_for(i, coord.pending_for(rig.challenger_id(i)).at(0)));

    rig.clock.advance(10'001);
    CHECK_THROWS_AS((void)coord.finalize(ch.id), QuorumNotMet);
    CHECK(coord.challenge(ch.id).state == ChallengeState::failed);
    CHECK_THROWS_AS((void)coord.finalize(ch.id), AlreadyFinalized);
}

TEST_CASE("finalizing with every estimate in ignores the timer and is deterministic") {
    Rig rig(4);
    auto& coord = *rig.coord;
    const auto ch = coord.initiate_challenge("waldo-1", rig.claimed, 0.25, 600'000);
    for (int i = 0; i < 4; ++i)
        coord.submit_estimate(ch.id, rig.challenger_id(i), rig.measure_for(i, coord.pending_for(rig.challenger_id(i)).at(0)));

    const auto bundle = coord.finalize(ch.id);
    CHECK(verify_bundle(bundle, coord.registry_snapshot()));
    CHECK(coord.get_bundle(ch.id).value() == bundle);

    // missing challengers enter the proof as zeros: profile recomputation in
    // verify_bundle already pins this; double-check the stored inputs exist
    CHECK(bundle.at("estimates").size() == 4);
    CHECK(bundle.at("challenge").at("selected").size() == 4);
}

TEST_CASE("crash recovery replays the log into identical state") {
    const auto dir = (fs::temp_directory_path() / "gp_coord_persist").string();
    fs::remove_all(dir);

    ManualClock clock;
    nlohmann::json bundle;
    RegistrySnapshot before;
    std::string challenge_id;
    {
        Rig rig(5, dir);
        auto& coord = *rig.coord;
        heartbeat_as(coord, "ch-0", rig.challenger_keys[0], rig.clock.now() + 10);
        const auto ch = coord.initiate_challenge("waldo-1", rig.claimed, 0.2, 5'000);
        challenge_id = ch.id;
        for (int i = 0; i < 5; ++i)
            coord.submit_estimate(ch.id, rig.challenger_id(i), rig.measure_for(i, coord.pending_for(rig.challenger_id(i)).at(0)));
        bundle = coord.finalize(ch.id);
        before = coord.registry_snapshot();
    }

    CoordinatorConfig cfg;
    cfg.persist_dir = dir;
    cfg.proving.grid_size = 90;
    Coordinator revived(cfg, clock.fn());

    const auto after = revived.registry_snapshot();
    REQUIRE(after.challengers.size() == before.challengers.size());
    for (const auto& [id, entry] : before.challengers) {
        const auto& got = after.challengers.at(id);
        CHECK(got.public_key == entry.public_key);
        CHECK(got.mapping_digest == entry.mapping_digest);
    }
    CHECK(after.waldos == before.waldos);
    CHECK(revived.challenge(challenge_id).state == ChallengeState::proven);
    CHECK(revived.get_bundle(challenge_id).value() == bundle);
    CHECK(verify_bundle(revived.get_bundle(challenge_id).value(), after));

    fs::remove_all(dir);
}

TEST_CASE("HTTP endpoints cover the full challenge round trip") {
    Rig rig(3);
    CoordinatorServer server(*rig.coord, "127.0.0.1", 0);
    server.start();
    httplib::Client client("127.0.0.1", server.port());

    // an extra challenger registered over the wire
    const auto kp = keys_of(150);
    rig.waldo->allow(kp.public_key);
    const nlohmann::json reg = {{"id", "ch-http"},
                                {"public_key", crypto::to_hex(kp.public_key)},
                                {"location", {{"lat", rig.claimed.lat}, {"lon", rig.claimed.lon}}},
                                {"mapping", nlohmann::json::parse(poig::to_json(wide_mapping()))}};
    auto res = client.Post("/register", reg.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);

    const int64_t ts = rig.clock.now() + 1;
    const nlohmann::json hb = {{"id", "ch-http"},
                               {"timestamp_ms", ts},
                               {"signature", crypto::to_hex(crypto::sign(heartbeat_message("ch-http", ts), kp.secret_key))}};
    res = client.Post("/heartbeat", hb.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);

    // a replayed older heartbeat comes back as a structured error
    const nlohmann::json bad_hb = {{"id", "ch-http"},
                                   {"timestamp_ms", ts - 100},
                                   {"signature", crypto::to_hex(crypto::sign(heartbeat_message("ch-http", ts - 100),
                                                                             kp.secret_key))}};
    res = client.Post("/heartbeat", bad_hb.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(nlohmann::json::parse(res->body).at("error") == "StaleTimestamp");

    const nlohmann::json init = {{"waldo_id", "waldo-1"},
                                 {"claimed", {{"lat", rig.claimed.lat}, {"lon", rig.claimed.lon}}},
                                 {"beta", 0.0},
                                 {"tau_ms", 60'000}};
    res = client.Post("/initiate", init.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto initiated = nlohmann::json::parse(res->body);
    const std::string challenge_id = initiated.at("challenge_id").get<std::string>();
    CHECK(initiated.at("selected").size() == 4);

    res = client.Get(("/pending?challenger_id=ch-http"));
    REQUIRE(res);
    const auto pending = nlohmann::json::parse(res->body);
    REQUIRE(pending.size() == 1);

    // the HTTP challenger measures the waldo and submits its transcript
    netprobe::MeasureOptions opts;
    opts.q = 3;
    opts.timeout_ms = 500;
    opts.spacing_ms = 1;
    opts.challenger_id = "ch-http";
    opts.waldo_id = "waldo-1";
    const auto pid = crypto::from_hex(pending[0].at("packet_challenge_id").get<std::string>());
    std::copy(pid.begin(), pid.end(), opts.challenge_id.begin());
    const auto transcript = netprobe::measure({pending[0].at("host").get<std::string>(),
                                               pending[0].at("port").get<uint16_t>()},
                                              opts, kp, crypto::from_hex(pending[0].at("waldo_public_key").get<std::string>()));

    const nlohmann::json submit = {{"challenge_id", challenge_id},
                                   {"challenger_id", "ch-http"},
                                   {"transcript", nlohmann::json::parse(netprobe::transcript_to_json(transcript))}};
    res = client.Post("/submit", submit.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);

    for (int i = 0; i < 3; ++i) {
        const auto mine = rig.coord->pending_for(rig.challenger_id(i));
        REQUIRE(mine.size() == 1);
        const auto t = rig.measure_for(i, mine[0]);
        const nlohmann::json body = {{"challenge_id", challenge_id},
                                     {"challenger_id", rig.challenger_id(i)},
                                     {"transcript", nlohmann::json::parse(netprobe::transcript_to_json(t))}};
        res = client.Post("/submit", body.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 200);
    }

    res = client.Post("/finalize", nlohmann::json{{"challenge_id", challenge_id}}.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto bundle = nlohmann::json::parse(res->body);

    res = client.Get(("/bundle?challenge_id=" + challenge_id).c_str());
    REQUIRE(res);
    CHECK(nlohmann::json::parse(res->body) == bundle);

    res = client.Post("/verify", nlohmann::json{{"bundle", bundle}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(nlohmann::json::parse(res->body).at("valid").get<bool>());

    auto tampered = bundle;
    tampered["profile"]["r_star"] = 0.0;
    res = client.Post("/verify", nlohmann::json{{"bundle", tampered}}.dump(), "application/json");
    REQUIRE(res);
    CHECK(!nlohmann::json::parse(res->body).at("valid").get<bool>());

    res = client.Get("/registry");
    REQUIRE(res);
    CHECK(nlohmann::json::parse(res->body).at("challengers").contains("ch-http"));

    server.stop();
}
