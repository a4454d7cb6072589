#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "geoproof/poig.hpp"
#include "geoproof/rng.hpp"

using namespace geoproof;
using namespace geoproof::poig;

namespace {

DelayDistanceSample s(std::string id, double rtt, double dist) {
    return DelayDistanceSample{std::move(id), rtt, dist, GeoPoint{}};
}

std::vector<DelayDistanceSample> random_cloud(uint64_t seed, int n) {
    CounterRng rng(seed, 0);
    std::vector<DelayDistanceSample> out;
    for (int i = 0; i < n; ++i) {
        const double d = rng.uniform(10, 2000);
        const double t = 0.02 * d + 2.0 + rng.exponential(0.25);
        out.push_back(s("p" + std::to_string(i), t, d));
    }
    return out;
}

}  // namespace

TEST_CASE("select_samples keeps far peers whose delay beats t_max") {
    const std::vector<DelayDistanceSample> all{
        s("a", 20, 500), s("b", 60, 1900), s("c", 50, 2500), s("d", 90, 3000)};
    const auto sel = select_samples(all, 2000);
    CHECK(sel.t_max_ms == 60);
    REQUIRE(sel.samples.size() == 3);
    CHECK(sel.samples[0].peer_id == "a");
    CHECK(sel.samples[1].peer_id == "b");
    CHECK(sel.samples[2].peer_id == "c"); // 50 < 60 despite 2500 km
}

TEST_CASE("select_samples: all in range, strict cutoff, and no-nearby error") {
    const std::vector<DelayDistanceSample> close{s("a", 10, 100), s("b", 30, 900)};
    const auto sel = select_samples(close, 2000);
    CHECK(sel.samples.size() == 2);
    CHECK(sel.t_max_ms == 30);

    // a far sample at exactly t_max stays excluded
    const std::vector<DelayDistanceSample> edge{s("a", 30, 900), s("b", 30, 2500)};
    const auto sel2 = select_samples(edge, 2000);
    CHECK(sel2.samples.size() == 1);
    CHECK(sel2.samples[0].peer_id == "a");

    CHECK_THROWS_AS((void)select_samples({s("far", 10, 5000)}, 2000), NoNearbySamples);
}

TEST_CASE("build_monotone keeps the outer periphery only") {
    const auto m = build_monotone({s("a", 10, 100), s("b", 20, 80), s("c", 30, 150), s("d", 40, 120)});
    REQUIRE(m.breakpoints.size() == 2);
    CHECK(m.breakpoints[0] == std::pair{10.0, 100.0});
    CHECK(m.breakpoints[1] == std::pair{30.0, 150.0});
    CHECK(m.t_max_ms == 40);
    CHECK(m.eta == 1.0);
}

TEST_CASE("build_monotone: single sample, idempotence on monotone input, empty error") {
    const auto one = build_monotone({s("a", 12, 340)});
    REQUIRE(one.breakpoints.size() == 1);
    CHECK(one.breakpoints[0] == std::pair{12.0, 340.0});

    const std::vector<DelayDistanceSample> mono{s("a", 5, 10), s("b", 10, 40), s("c", 20, 90)};
    const auto m = build_monotone(mono);
    REQUIRE(m.breakpoints.size() == 3);
    for (size_t i = 0; i < mono.size(); ++i)
        CHECK(m.breakpoints[i] == std::pair{mono[i].rtt_ms, mono[i].dist_km});

    CHECK_THROWS_AS((void)build_monotone({}), EmptySampleSet);
}

TEST_CASE("evaluate: interpolation, knots, cutoff, correction factor") {
    MonotoneMapping m;
    m.breakpoints = {{10, 100}, {30, 150}};
    m.t_max_ms = 40;

    CHECK(evaluate(m, 20).value() == doctest::Approx(125.0));
    CHECK(evaluate(m, 10).value() == doctest::Approx(100.0));
    CHECK(evaluate(m, 5).value() == doctest::Approx(100.0));  // below first knot
    CHECK(evaluate(m, 35).value() == doctest::Approx(150.0)); // past last knot, within t_max
    CHECK(!evaluate(m, 40.5).has_value());                    // disqualified

    m.eta = 1.2;
    CHECK(evaluate(m, 20).value() == doctest::Approx(150.0));
}

TEST_CASE("evaluate is non-decreasing on (0, t_max]") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = build_monotone(random_cloud(seed, 120));
        double prev = 0.0;
        for (double t = 0.5; t <= m.t_max_ms; t += 0.25) {
            const double v = evaluate(m, t).value();
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("envelope is conservative on the samples it was built from") {
    for (uint64_t seed = 20; seed < 26; ++seed) {
        const auto cloud = random_cloud(seed, 150);
        const auto m = build_monotone(cloud);
        for (const auto& smp : cloud)
            CHECK(evaluate(m, smp.rtt_ms).value() >= smp.dist_km - 1e-9);
    }
}

TEST_CASE("ratio_filter removes the largest dist/rtt ratios") {
    const std::vector<DelayDistanceSample> in{
        s("a", 10, 100), s("b", 10, 50), s("c", 10, 40), s("d", 10, 30)};
    CHECK(ratio_filter(in, 0.0).size() == 4);

    const auto out = ratio_filter(in, 0.25);
    REQUIRE(out.size() == 3);
    for (const auto& smp : out) CHECK(smp.peer_id != "a");
}

TEST_CASE("ratio_filter never removes more than floor(beta*n)") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
        const auto cloud = random_cloud(seed + 40, 97);
        for (double beta : {0.1, 0.25, 0.5}) {
            const auto out = ratio_filter(cloud, beta);
            CHECK(cloud.size() - out.size() == size_t(std::floor(beta * 97)));
        }
    }
}

TEST_CASE("bin_filter drops the farthest member of each full bin") {
    // beta = 0.5 -> bins of two consecutive-rtt samples
    const std::vector<DelayDistanceSample> in{
        s("a", 1, 10), s("b", 2, 20), s("c", 3, 35), s("d", 4, 30), s("e", 5, 99)};
    const auto out = bin_filter(in, 0.5);
    REQUIRE(out.size() == 3); // two full bins lose one each; short bin intact
    CHECK(out[0].peer_id == "a");
    CHECK(out[1].peer_id == "d");
    CHECK(out[2].peer_id == "e");

    // fewer samples than one bin: nothing removed
    const auto untouched = bin_filter({s("a", 1, 10), s("b", 2, 20)}, 0.3);
    CHECK(untouched.size() == 2);
}

TEST_CASE("cbg_bestline: forced small instances") {
    const auto two = cbg_bestline({s("a", 10, 100), s("b", 20, 140)});
    CHECK(two.slope_km_per_ms == doctest::Approx(4.0));
    CHECK(two.intercept_km == doctest::Approx(60.0));

    const auto collinear = cbg_bestline({s("a", 10, 50), s("b", 20, 100), s("c", 30, 150)});
    CHECK(collinear.slope_km_per_ms == doctest::Approx(5.0));
    CHECK(collinear.intercept_km == doctest::Approx(0.0));

    const auto tri = cbg_bestline({s("a", 10, 100), s("b", 20, 80), s("c", 30, 150)});
    CHECK(tri.slope_km_per_ms == doctest::Approx(2.5));
    CHECK(tri.intercept_km == doctest::Approx(75.0));
    CHECK(tri(20) == doctest::Approx(125.0));

    CHECK_THROWS_AS((void)cbg_bestline({s("a", 10, 1)}), DegenerateInput);
    CHECK_THROWS_AS((void)cbg_bestline({s("a", 10, 1), s("b", 10, 2)}), DegenerateInput);
}

TEST_CASE("cbg_bestline dominates every sample and no feasible grid line beats it") {
    for (uint64_t seed = 0; seed < 6; ++seed) {
        const auto cloud = random_cloud(seed + 60, 25);
        const auto line = cbg_bestline(cloud);

        double sum_t = 0.0;
        for (const auto& smp : cloud) {
            CHECK(line(smp.rtt_ms) >= smp.dist_km - 1e-6);
            sum_t += smp.rtt_ms;
        }
        const double best_obj = line.slope_km_per_ms * sum_t + line.intercept_km * cloud.size();

        // independent coarse grid over the (slope, intercept) space
        for (int ai = 0; ai <= 60; ++ai) {
            for (int bi = 0; bi <= 60; ++bi) {
                const double a = 3.0 * ai / 60.0;
                const double b = 4000.0 * bi / 60.0;
                bool feasible = true;
                for (const auto& smp : cloud)
                    if (a * smp.rtt_ms + b < smp.dist_km) {
                        feasible = false;
                        break;
                    }
                if (feasible) CHECK(a * sum_t + b * cloud.size() >= best_obj - 1e-6);
            }
        }
    }
}

TEST_CASE("monotone envelope never exceeds the bestline at observed delays") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const auto cloud = random_cloud(seed + 80, 60);
        const auto m = build_monotone(cloud);
        const auto line = cbg_bestline(cloud);
        for (const auto& smp : cloud)
            CHECK(evaluate(m, smp.rtt_ms).value() <= line(smp.rtt_ms) + 1e-9);
    }
}

TEST_CASE("mapping JSON round-trips exactly") {
    auto m = build_monotone(random_cloud(7, 80));
    m.eta = 1.2;
    const auto text = to_json(m);
    const auto back = mapping_from_json(text);
    CHECK(back == m);
    CHECK(to_json(back) == text);
}

TEST_CASE("bin_filter removal count never exceeds the number of full bins") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
        const auto cloud = random_cloud(seed + 90, 83);
        for (double beta : {0.1, 0.3, 0.5}) {
            const size_t bin = size_t(std::ceil(1.0 / beta));
            const auto out = bin_filter(cloud, beta);
            CHECK(cloud.size() - out.size() == cloud.size() / bin);
        }
    }
}
