// geoproof command line: calibration, agents, challenges, verification,
// simulation sweeps and exports.

#include "geoproof/coordinator.hpp"
#include "geoproof/coordinator_http.hpp"
#include "geoproof/crypto.hpp"
#include "geoproof/netprobe.hpp"
#include "geoproof/poig.hpp"
#include "geoproof/rmc.hpp"
#include "geoproof/sim.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geoproof;

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path().empty() ? "." : fs::path(path).parent_path().string());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

/// Deterministic output name: stem + first 8 hex chars of the config hash.
std::string hashed_name(const std::string& stem, const json& config, const std::string& ext) {
    return stem + "_" + crypto::to_hex(crypto::sha256(config.dump())).substr(0, 8) + ext;
}

void write_meta(const std::string& data_path, const json& config) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    json meta = {{"config", config},
                 {"written_at_ms", std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
    write_file(data_path + ".meta.json", meta.dump(2) + "\n");
}

void log_config(const std::string& name, const json& config) {
    std::cerr << "[" << name << "] resolved config: " << config.dump() << "\n";
}

crypto::KeyPair load_keys(const std::string& key_path, const std::string& pub_path) {
    crypto::KeyPair kp;
    kp.secret_key = crypto::from_hex(json::parse(read_file(key_path)).at("secret_key").get<std::string>());
    kp.public_key = crypto::from_hex(json::parse(read_file(pub_path)).at("public_key").get<std::string>());
    return kp;
}

std::vector<poig::DelayDistanceSample> read_samples_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<poig::DelayDistanceSample> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string id, rtt, dist;
        if (!std::getline(ss, id, ',') || !std::getline(ss, rtt, ',') || !std::getline(ss, dist, ','))
            throw std::runtime_error("bad sample line: " + line);
        if (id == "peer_id") continue; // header
        samples.push_back({id, std::stod(rtt), std::stod(dist), GeoPoint{}});
    }
    return samples;
}

coordinator::RegistrySnapshot snapshot_from_json(const json& j) {
    coordinator::RegistrySnapshot snap;
    for (const auto& [id, entry] : j.at("challengers").items()) {
        coordinator::RegistrySnapshot::Entry e;
        e.public_key = crypto::from_hex(entry.at("public_key").get<std::string>());
        if (entry.contains("location"))
            e.location = GeoPoint{entry.at("location").at("lat").get<double>(),
                                  entry.at("location").at("lon").get<double>()};
        if (entry.contains("mapping_digest")) e.mapping_digest = entry.at("mapping_digest").get<std::string>();
        snap.challengers[id] = std::move(e);
    }
    for (const auto& [id, key] : j.at("waldos").items())
        snap.waldos[id] = crypto::from_hex(key.get<std::string>());
    return snap;
}

struct CoordinatorUrl {
    std::string host;
    int port = 0;
};

CoordinatorUrl parse_coordinator(const std::string& value) {
    const auto colon = value.rfind(':');
    if (colon == std::string::npos) throw std::runtime_error("coordinator must be host:port");
    return {value.substr(0, colon), std::stoi(value.substr(colon + 1))};
}

json post_json(httplib::Client& client, const std::string& path, const json& body) {
    const auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("no response from coordinator at " + path);
    const json parsed = json::parse(res->body);
    if (res->status != 200)
        throw std::runtime_error(path + " failed: " + parsed.value("error", "?") + " " +
                                 parsed.value("message", ""));
    return parsed;
}

int64_t wall_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------- keygen ---

int run_keygen(const std::string& id, const std::string& out_dir, const std::string& seed_hex) {
    crypto::KeyPair kp;
    if (!seed_hex.empty())
        kp = crypto::KeyPair::from_seed(crypto::from_hex(seed_hex));
    else
        kp = crypto::KeyPair::generate();

    write_file((fs::path(out_dir) / (id + ".pub.json")).string(),
               json{{"id", id}, {"public_key", crypto::to_hex(kp.public_key)}}.dump(2) + "\n");
    write_file((fs::path(out_dir) / (id + ".key.json")).string(),
               json{{"id", id},
                    {"public_key", crypto::to_hex(kp.public_key)},
                    {"secret_key", crypto::to_hex(kp.secret_key)}}
                       .dump(2) +
                   "\n");
    std::cout << "wrote " << (fs::path(out_dir) / (id + ".pub.json")).string() << "\n";
    return 0;
}

// ----------------------------------------------------------- coordinator ---

int run_coordinator(int port, const std::string& persist, double x_limit, int64_t ttl_ms, int grid) {
    coordinator::CoordinatorConfig cfg;
    cfg.persist_dir = persist;
    cfg.x_limit_km = x_limit;
    cfg.heartbeat_ttl_ms = ttl_ms;
    cfg.proving.grid_size = grid;

    coordinator::Coordinator core(cfg);
    coordinator::CoordinatorServer server(core, "0.0.0.0", port);
    server.start();
    std::cerr << "coordinator listening on port " << server.port() << "\n";
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

// ------------------------------------------------------------- challenger ---

int run_challenger(const std::string& id, const CoordinatorUrl& coord, const crypto::KeyPair& keys,
                   double lat, double lon, const std::string& mapping_path, int q, int poll_ms,
                   int64_t heartbeat_every_ms, int max_rounds) {
    httplib::Client client(coord.host, coord.port);
    const auto mapping = poig::mapping_from_json(read_file(mapping_path));

    post_json(client, "/register",
              {{"id", id},
               {"public_key", crypto::to_hex(keys.public_key)},
               {"location", {{"lat", lat}, {"lon", lon}}},
               {"mapping", json::parse(poig::to_json(mapping))}});
    std::cerr << "challenger " << id << " registered\n";

    int64_t last_heartbeat = 0;
    for (int round = 0; !g_stop && (max_rounds <= 0 || round < max_rounds); ++round) {
        try {
        const int64_t now = wall_ms();
        if (now - last_heartbeat >= heartbeat_every_ms) {
            const auto msg = coordinator::heartbeat_message(id, now);
            post_json(client, "/heartbeat",
                      {{"id", id},
                       {"timestamp_ms", now},
                       {"signature", crypto::to_hex(crypto::sign(msg, keys.secret_key))}});
            last_heartbeat = now;
        }

        const auto res = client.Get(("/pending?challenger_id=" + id).c_str());
        if (res && res->status == 200) {
            for (const auto& task : json::parse(res->body)) {
                netprobe::MeasureOptions opts;
                opts.q = q;
                opts.timeout_ms = 1000;
                opts.challenger_id = id;
                opts.waldo_id = task.at("waldo_id").get<std::string>();
                const auto pid = crypto::from_hex(task.at("packet_challenge_id").get<std::string>());
                std::copy(pid.begin(), pid.end(), opts.challenge_id.begin());
                try {
                    const auto transcript = netprobe::measure(
                        {task.at("host").get<std::string>(), task.at("port").get<uint16_t>()}, opts, keys,
                        crypto::from_hex(task.at("waldo_public_key").get<std::string>()));
                    post_json(client, "/submit",
                              {{"challenge_id", task.at("challenge_id")},
                               {"challenger_id", id},
                               {"transcript", json::parse(netprobe::transcript_to_json(transcript))}});
                    std::cerr << "submitted estimate for " << task.at("challenge_id") << "\n";
                } catch (const netprobe::NoResponses&) {
                    std::cerr << "prover unresponsive for " << task.at("challenge_id") << "\n";
                }
            }
        }
        } catch (const std::exception& e) {
            std::cerr << "challenger loop error: " << e.what() << "\n";
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
    }
    return 0;
}

// ------------------------------------------------------------------ waldo ---

int run_waldo(const std::string& id, const CoordinatorUrl& coord, const crypto::KeyPair& keys, int port,
              int poll_ms) {
    netprobe::PingResponder responder(uint16_t(port), keys);
    responder.start();

    httplib::Client client(coord.host, coord.port);
    post_json(client, "/register-waldo",
              {{"id", id},
               {"public_key", crypto::to_hex(keys.public_key)},
               {"host", "127.0.0.1"},
               {"port", responder.port()}});
    std::cerr << "waldo " << id << " responding on port " << responder.port() << "\n";

    while (!g_stop) {
        // allow every registered challenger to ping us
        const auto res = client.Get("/registry");
        if (res && res->status == 200) {
            const auto registry = json::parse(res->body);
            for (const auto& [cid, entry] : registry.at("challengers").items())
                responder.allow(crypto::from_hex(entry.at("public_key").get<std::string>()));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
    }
    responder.stop();
    return 0;
}

// -------------------------------------------------------------- calibrate ---

int run_calibrate(const std::string& samples_path, double x_limit, double beta, const std::string& filter,
                  double eta, const std::string& out_path) {
    poig::CalibrationConfig cfg;
    cfg.x_limit_km = x_limit;
    cfg.beta = beta;
    cfg.eta = eta;
    cfg.filter_mode = filter == "ratio"  ? poig::FilterMode::ratio
                      : filter == "bin" ? poig::FilterMode::bin
                                        : poig::FilterMode::none;

    const auto all = read_samples_csv(samples_path);
    const auto selection = poig::select_samples(all, cfg.x_limit_km);
    std::cerr << "selected " << selection.samples.size() << " of " << all.size()
              << " samples, t_max=" << fmt(selection.t_max_ms) << " ms\n";

    std::vector<poig::DelayDistanceSample> kept = selection.samples;
    switch (cfg.filter_mode) {
        case poig::FilterMode::ratio: kept = poig::ratio_filter(kept, cfg.beta); break;
        case poig::FilterMode::bin: kept = poig::bin_filter(kept, cfg.beta); break;
        case poig::FilterMode::none: break;
    }

    auto mapping = poig::build_monotone(kept);
    mapping.t_max_ms = selection.t_max_ms;
    mapping.eta = cfg.eta;
    write_file(out_path, poig::to_json(mapping) + "\n");
    std::cout << "wrote " << out_path << " (" << mapping.breakpoints.size() << " breakpoints)\n";
    return 0;
}

// -------------------------------------------------------------- challenge ---

int run_challenge(const CoordinatorUrl& coord, const std::string& waldo_id, double lat, double lon,
                  double beta, int64_t tau_ms, const std::string& out_dir, int poll_ms) {
    httplib::Client client(coord.host, coord.port);
    const auto initiated = post_json(client, "/initiate",
                                     {{"waldo_id", waldo_id},
                                      {"claimed", {{"lat", lat}, {"lon", lon}}},
                                      {"beta", beta},
                                      {"tau_ms", tau_ms}});
    const std::string challenge_id = initiated.at("challenge_id").get<std::string>();
    const size_t n = initiated.at("selected").size();
    std::cerr << "challenge " << challenge_id << " started with " << n << " challengers\n";

    const int64_t deadline = wall_ms() + tau_ms;
    json bundle;
    while (true) {
        std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
        try {
            bundle = post_json(client, "/finalize", {{"challenge_id", challenge_id}});
            break;
        } catch (const std::exception& e) {
            const std::string what = e.what();
            if (what.find("QuorumNotMet") != std::string::npos) {
                std::cerr << "challenge failed: quorum not met\n";
                return 1;
            }
            if (wall_ms() > deadline + 10 * poll_ms + 2000) {
                std::cerr << "gave up waiting for finalize: " << what << "\n";
                return 1;
            }
        }
        if (g_stop) return 1;
    }

    const std::string path =
        (fs::path(out_dir) / ("bundle-" + bundle.at("digest").get<std::string>().substr(0, 12) + ".json"))
            .string();
    write_file(path, bundle.dump() + "\n");
    std::cout << "R* = " << fmt(bundle.at("profile").at("r_star").get<double>()) << " km\n";
    std::cout << "wrote " << path << "\n";
    return 0;
}

// ----------------------------------------------------------------- verify ---

int run_verify(const std::string& bundle_path, const std::string& registry_path,
               const std::string& coordinator_url) {
    coordinator::RegistrySnapshot snap;
    if (!registry_path.empty()) {
        snap = snapshot_from_json(json::parse(read_file(registry_path)));
    } else if (!coordinator_url.empty()) {
        const auto coord = parse_coordinator(coordinator_url);
        httplib::Client client(coord.host, coord.port);
        const auto res = client.Get("/registry");
        if (!res || res->status != 200) throw std::runtime_error("cannot fetch /registry");
        snap = snapshot_from_json(json::parse(res->body));
    } else {
        throw std::runtime_error("pass --registry FILE or --coordinator HOST:PORT");
    }

    const bool ok = coordinator::verify_bundle_text(read_file(bundle_path), snap);
    std::cout << (ok ? "VALID" : "INVALID") << "\n";
    return ok ? 0 : 1;
}

// --------------------------------------------------------------- simulate ---

void write_csv(const std::string& path, const std::string& header, const std::vector<std::string>& rows,
               const json& config) {
    std::string body = "# " + config.dump() + "\n" + header + "\n";
    for (const auto& r : rows) body += r + "\n";
    write_file(path, body);
    write_meta(path, config);
    std::cout << "wrote " << path << "\n";
}

int run_simulate(const std::string& fig, uint64_t seed, const std::string& out_dir, int replicates,
                 int rmc_seeds) {
    fs::create_directories(out_dir);

    if (fig == "5" || fig == "6") {
        const std::vector<int> n_list{10, 20, 40, 50};
        const std::vector<double> beta_list{0.1, 0.2, 0.3, 0.4, 0.5};
        if (fig == "5") {
            const json config = {{"fig", fig}, {"seed", seed}, {"replicates", replicates},
                                 {"sigma", 0.1},  {"n", n_list}, {"beta", beta_list}};
            log_config("simulate", config);
            const auto rows = sim::sweep_uncertainty(n_list, beta_list, 0.1, replicates, seed);
            std::vector<std::string> lines;
            for (const auto& r : rows)
                lines.push_back(std::to_string(r.n) + "," + fmt(r.beta) + "," + fmt(r.mean_r_star));
            write_csv((fs::path(out_dir) / hashed_name("fig5", config, ".csv")).string(),
                      "n,beta,mean_r_star", lines, config);
        } else {
            const std::vector<double> sigmas{0.05, 0.1, 0.2, 0.4};
            const json config = {{"fig", fig}, {"seed", seed}, {"replicates", replicates},
                                 {"n", 20},    {"beta", beta_list}, {"sigma", sigmas}};
            log_config("simulate", config);
            std::vector<std::string> lines;
            for (const double sigma : sigmas)
                for (const auto& r : sim::sweep_uncertainty({20}, beta_list, sigma, replicates, seed))
                    lines.push_back(fmt(sigma) + "," + fmt(r.beta) + "," + fmt(r.mean_r_star));
            write_csv((fs::path(out_dir) / hashed_name("fig6", config, ".csv")).string(),
                      "sigma,beta,mean_r_star", lines, config);
        }
        return 0;
    }

    if (fig == "10" || fig == "12") {
        sim::LinearDelayModel model;
        model.sigma = 2.0;
        const double beta = fig == "10" ? 0.2 : 0.0;
        const double filter_beta = 0.2;
        const json config = {{"fig", fig},   {"seed", seed},               {"k", 400},
                             {"beta", beta}, {"filter_beta", filter_beta}, {"eta", 1.2}};
        log_config("simulate", config);

        const auto honest = sim::calibration_comparison(400, 0.0, model, seed, 1.2, 0.0);
        const auto curves = sim::calibration_comparison(400, beta, model, seed, 1.2, filter_beta);
        std::vector<std::string> lines;
        for (size_t i = 0; i < curves.delay_grid.size(); ++i)
            lines.push_back(fmt(curves.delay_grid[i]) + "," + fmt(curves.baseline[i]) + "," +
                            fmt(curves.ratio_filtered[i]) + "," + fmt(curves.bin_filtered[i]) + "," +
                            fmt(curves.corrected[i]) + "," + fmt(honest.baseline[i]));
        write_csv((fs::path(out_dir) / hashed_name("fig" + fig, config, ".csv")).string(),
                  "delay_ms,baseline,ratio_filtered,bin_filtered,corrected,honest_baseline", lines, config);
        return 0;
    }

    if (fig == "1a") {
        sim::LinearDelayModel model;
        model.noise = sim::LinearDelayModel::Noise::exponential;
        model.lambda = 0.5;
        const json config = {{"fig", fig}, {"seed", seed}, {"k", 400}, {"seeds", 20}};
        log_config("simulate", config);
        std::vector<std::string> lines;
        for (double beta : {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45}) {
            double acc_filtered = 0, acc_raw = 0;
            for (int s = 0; s < 20; ++s) {
                const auto curves = sim::calibration_comparison(400, beta, model, seed + s);
                const double raw = sim::mle_exponential_estimate(curves.samples);
                const double filtered =
                    sim::mle_exponential_estimate(poig::ratio_filter(curves.samples, beta));
                acc_raw += 1.0 - std::fabs(raw - model.c) / model.c;
                acc_filtered += 1.0 - std::fabs(filtered - model.c) / model.c;
            }
            lines.push_back(fmt(beta) + "," + fmt(acc_raw / 20) + "," + fmt(acc_filtered / 20));
        }
        write_csv((fs::path(out_dir) / hashed_name("fig1a", config, ".csv")).string(),
                  "beta,accuracy_unfiltered,accuracy_ratio_filtered", lines, config);
        return 0;
    }

    if (fig == "13") {
        const std::vector<double> beta_list{0.1, 0.2, 0.3, 0.4};
        const std::vector<double> p_list{0.3, 0.4, 0.5, 0.6};
        std::vector<uint64_t> seeds;
        for (int s = 0; s < rmc_seeds; ++s) seeds.push_back(seed + uint64_t(s));
        const json config = {{"fig", fig}, {"seed", seed}, {"m", 100},
                             {"beta", beta_list}, {"p", p_list}, {"seeds", rmc_seeds}};
        log_config("simulate", config);
        const auto cells = sim::rmc_grid(100, beta_list, p_list, seeds);
        std::vector<std::string> lines;
        for (const auto& c : cells) lines.push_back(fmt(c.beta) + "," + fmt(c.p) + "," + fmt(c.mean_accuracy));
        write_csv((fs::path(out_dir) / hashed_name("fig13", config, ".csv")).string(),
                  "beta,p,mean_detection_accuracy", lines, config);
        return 0;
    }

    if (fig == "14") {
        const json config = {{"fig", fig}, {"seed", seed}, {"m", 100}, {"beta", 0.3}, {"p", 0.6}};
        log_config("simulate", config);
        const auto inst = sim::plant_rmc_instance(100, 0.3, 0.6, seed);
        rmc::RmcConfig cfg;
        cfg.sample_p = 0.5;
        const auto res = rmc::complete(inst.matrix, cfg);
        std::vector<bool> planted(100, false), found(100, false);
        for (int j : inst.planted) planted[j] = true;
        for (int j : res.corrupted) found[j] = true;
        std::vector<std::string> lines;
        for (int j = 0; j < 100; ++j)
            lines.push_back(std::to_string(j) + "," + std::to_string(int(planted[j])) + "," +
                            std::to_string(int(found[j])));
        write_csv((fs::path(out_dir) / hashed_name("fig14", config, ".csv")).string(),
                  "column,planted,detected", lines, config);
        return 0;
    }

    throw std::runtime_error("unknown figure: " + fig + " (expected 1a, 5, 6, 10, 12, 13 or 14)");
}

// --------------------------------------------------------- complete-matrix ---

int run_complete_matrix(const std::string& matrix_path, const std::string& mask_path,
                        const std::string& out_dir, double lambda, double beta) {
    const auto dm = rmc::read_matrix_csv(matrix_path, mask_path);
    rmc::RmcConfig cfg;
    cfg.lambda = lambda;
    cfg.sample_p = 0.0; // accept whatever density the file has
    if (beta > 0.0) cfg.beta = beta;
    const auto res = rmc::complete(dm, cfg);

    fs::create_directories(out_dir);
    rmc::DelayMatrix l{dm.m, res.l_matrix, dm.mask};
    rmc::DelayMatrix c{dm.m, res.c_matrix, dm.mask};
    rmc::write_matrix_csv((fs::path(out_dir) / "l_matrix.csv").string(),
                          (fs::path(out_dir) / "l_mask.csv").string(), l, 0.0, 0);
    rmc::write_matrix_csv((fs::path(out_dir) / "c_matrix.csv").string(),
                          (fs::path(out_dir) / "c_mask.csv").string(), c, 0.0, 0);
    const json summary = {{"converged", res.converged},
                          {"iterations", res.iterations},
                          {"corrupted_columns", res.corrupted}};
    write_file((fs::path(out_dir) / "completion.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump() << "\n";
    return res.converged ? 0 : 1;
}

// ------------------------------------------------------------------- plot ---

int run_plot(const std::string& bundle_path, const std::string& out_dir) {
    const json bundle = json::parse(read_file(bundle_path));
    const auto& profile = bundle.at("profile");

    trig::UncertaintyProfile p;
    p.claimed = GeoPoint{profile.at("claimed").at("lat").get<double>(),
                         profile.at("claimed").at("lon").get<double>()};
    p.theta_grid = profile.at("theta_grid").get<std::vector<double>>();
    p.r_star_theta = profile.at("r_star_theta").get<std::vector<double>>();
    p.r_star = profile.at("r_star").get<double>();

    const auto boundary = trig::region_boundary(p);
    json ring = json::array();
    for (const auto& pt : boundary) ring.push_back({pt.lon, pt.lat});
    ring.push_back(ring.front()); // close the polygon

    const json geo = {{"type", "Feature"},
                      {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}},
                      {"properties",
                       {{"r_star_km", p.r_star},
                        {"challenge_id", bundle.at("challenge").at("id")},
                        {"waldo_id", bundle.at("challenge").at("waldo_id")}}}};

    fs::create_directories(out_dir);
    const json config = {{"bundle_digest", bundle.at("digest")}};
    const std::string geo_path = (fs::path(out_dir) / hashed_name("region", config, ".geojson")).string();
    write_file(geo_path, geo.dump() + "\n");

    std::vector<std::string> lines;
    for (size_t k = 0; k < p.theta_grid.size(); ++k)
        lines.push_back(fmt(p.theta_grid[k]) + "," + fmt(p.r_star_theta[k]));
    write_csv((fs::path(out_dir) / hashed_name("profile", config, ".csv")).string(), "theta_rad,r_star_km",
              lines, config);
    std::cout << "wrote " << geo_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);

    CLI::App app{"delay-based location proving toolkit"};
    app.require_subcommand(1);

    // keygen
    std::string kg_id = "node", kg_out = ".", kg_seed;
    auto* keygen = app.add_subcommand("keygen", "generate a signing keypair");
    keygen->add_option("--id", kg_id, "key owner id");
    keygen->add_option("--out", kg_out, "output directory");
    keygen->add_option("--seed", kg_seed, "32-byte hex seed for deterministic keys");

    // coordinator
    int co_port = 8080;
    std::string co_persist;
    double co_xlimit = 2000.0;
    int64_t co_ttl = 60'000;
    int co_grid = 360;
    auto* coord_cmd = app.add_subcommand("coordinator", "run the challenge coordinator service");
    coord_cmd->add_option("--port", co_port, "listen port (0 = ephemeral)");
    coord_cmd->add_option("--persist", co_persist, "event-log directory");
    coord_cmd->add_option("--x-limit", co_xlimit, "challenger selection radius, km");
    coord_cmd->add_option("--ttl", co_ttl, "heartbeat ttl, ms");
    coord_cmd->add_option("--grid", co_grid, "direction grid size");

    // challenger
    std::string ch_id, ch_coord = "127.0.0.1:8080", ch_key, ch_pub, ch_mapping;
    double ch_lat = 0, ch_lon = 0;
    int ch_q = 20, ch_poll = 500, ch_rounds = 0;
    int64_t ch_hb = 20'000;
    auto* chal = app.add_subcommand("challenger", "run a challenger agent");
    chal->add_option("--id", ch_id)->required();
    chal->add_option("--coordinator", ch_coord, "host:port");
    chal->add_option("--key", ch_key, "secret key file")->required();
    chal->add_option("--pub", ch_pub, "public key file")->required();
    chal->add_option("--lat", ch_lat)->required();
    chal->add_option("--lon", ch_lon)->required();
    chal->add_option("--mapping", ch_mapping, "calibrated mapping JSON")->required();
    chal->add_option("--q", ch_q, "probes per challenge");
    chal->add_option("--poll-ms", ch_poll);
    chal->add_option("--heartbeat-ms", ch_hb);
    chal->add_option("--rounds", ch_rounds, "poll rounds before exiting (0 = forever)");

    // waldo
    std::string wa_id, wa_coord = "127.0.0.1:8080", wa_key, wa_pub;
    int wa_port = 0, wa_poll = 1000;
    auto* waldo = app.add_subcommand("waldo", "run a prover responder");
    waldo->add_option("--id", wa_id)->required();
    waldo->add_option("--coordinator", wa_coord, "host:port");
    waldo->add_option("--key", wa_key)->required();
    waldo->add_option("--pub", wa_pub)->required();
    waldo->add_option("--port", wa_port, "udp port (0 = ephemeral)");
    waldo->add_option("--poll-ms", wa_poll);

    // calibrate
    std::string ca_samples, ca_filter = "ratio", ca_out = "mapping.json";
    double ca_xlimit = 2000.0, ca_beta = 0.2, ca_eta = 1.2;
    auto* calib = app.add_subcommand("calibrate", "build a monotone delay-distance mapping");
    calib->add_option("--samples", ca_samples, "CSV: peer_id,rtt_ms,dist_km")->required();
    calib->add_option("--x-limit", ca_xlimit, "nearby-sample distance limit, km");
    calib->add_option("--beta", ca_beta, "filter strength");
    calib->add_option("--filter", ca_filter)->check(CLI::IsMember({"none", "ratio", "bin"}));
    calib->add_option("--eta", ca_eta, "correction factor");
    calib->add_option("--out", ca_out);

    // challenge
    std::string cl_coord = "127.0.0.1:8080", cl_waldo, cl_out = ".";
    double cl_lat = 0, cl_lon = 0, cl_beta = 0.2;
    int64_t cl_tau = 30'000;
    int cl_poll = 500;
    auto* chall = app.add_subcommand("challenge", "initiate and finalize a location challenge");
    chall->add_option("--coordinator", cl_coord);
    chall->add_option("--waldo-id", cl_waldo)->required();
    chall->add_option("--lat", cl_lat)->required();
    chall->add_option("--lon", cl_lon)->required();
    chall->add_option("--beta", cl_beta);
    chall->add_option("--tau-ms", cl_tau);
    chall->add_option("--out", cl_out, "bundle output directory");
    chall->add_option("--poll-ms", cl_poll);

    // verify
    std::string ve_bundle, ve_registry, ve_coord;
    auto* verify = app.add_subcommand("verify", "verify a proof bundle");
    verify->add_option("bundle", ve_bundle, "bundle JSON file")->required();
    verify->add_option("--registry", ve_registry, "registry snapshot JSON");
    verify->add_option("--coordinator", ve_coord, "host:port to fetch the registry from");

    // simulate
    std::string si_fig = "5", si_out = "out";
    uint64_t si_seed = 1;
    int si_reps = 50, si_rmc_seeds = 10;
    auto* simulate = app.add_subcommand("simulate", "run a seeded simulation experiment");
    simulate->add_option("--fig", si_fig, "experiment: 1a, 5, 6, 10, 12, 13, 14");
    simulate->add_option("--seed", si_seed);
    simulate->add_option("--out", si_out);
    simulate->add_option("--replicates", si_reps);
    simulate->add_option("--rmc-seeds", si_rmc_seeds);

    // complete-matrix
    std::string cm_matrix, cm_mask, cm_out = "out";
    double cm_lambda = 0.0, cm_beta = 0.0;
    auto* complete = app.add_subcommand("complete-matrix", "robust delay-matrix completion");
    complete->add_option("--matrix", cm_matrix)->required();
    complete->add_option("--mask", cm_mask)->required();
    complete->add_option("--out", cm_out);
    complete->add_option("--lambda", cm_lambda, "0 = automatic");
    complete->add_option("--beta", cm_beta, "cap on the corrupted fraction");

    // plot
    std::string pl_bundle, pl_out = "out";
    auto* plot = app.add_subcommand("plot", "export a bundle's region as GeoJSON + CSV");
    plot->add_option("bundle", pl_bundle)->required();
    plot->add_option("--out", pl_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        if (*keygen) return run_keygen(kg_id, kg_out, kg_seed);
        if (*coord_cmd) return run_coordinator(co_port, co_persist, co_xlimit, co_ttl, co_grid);
        if (*chal)
            return run_challenger(ch_id, parse_coordinator(ch_coord), load_keys(ch_key, ch_pub), ch_lat,
                                  ch_lon, ch_mapping, ch_q, ch_poll, ch_hb, ch_rounds);
        if (*waldo) return run_waldo(wa_id, parse_coordinator(wa_coord), load_keys(wa_key, wa_pub), wa_port, wa_poll);
        if (*calib) return run_calibrate(ca_samples, ca_xlimit, ca_beta, ca_filter, ca_eta, ca_out);
        if (*chall)
            return run_challenge(parse_coordinator(cl_coord), cl_waldo, cl_lat, cl_lon, cl_beta, cl_tau,
                                 cl_out, cl_poll);
        if (*verify) return run_verify(ve_bundle, ve_registry, ve_coord);
        if (*simulate) return run_simulate(si_fig, si_seed, si_out, si_reps, si_rmc_seeds);
        if (*complete) return run_complete_matrix(cm_matrix, cm_mask, cm_out, cm_lambda, cm_beta);
        if (*plot) return run_plot(pl_bundle, pl_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
