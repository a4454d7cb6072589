#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "geoproof/rmc.hpp"
#include "geoproof/rng.hpp"

using namespace geoproof;
using namespace geoproof::rmc;

namespace {

std::vector<PlanarPoint> random_points(uint64_t seed, int n, double radius) {
    CounterRng rng(seed, 1);
    std::vector<PlanarPoint> pts;
    for (int i = 0; i < n; ++i) pts.push_back(rng.in_disk(radius));
    return pts;
}

// Noiseless squared-delay matrix over planar points: t = c * d.
DelayMatrix delay_matrix_from_points(const std::vector<PlanarPoint>& pts, double c) {
    const int m = int(pts.size());
    DelayMatrix dm = DelayMatrix::zeros(m);
    dm.mask = Eigen::MatrixXd::Ones(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const double t = c * distance(pts[i], pts[j]);
            dm.entries(i, j) = t * t;
        }
    return dm;
}

std::vector<int> corrupt_columns(DelayMatrix& dm, double beta, uint64_t seed) {
    const int m = dm.m;
    const int k = int(beta * m);
    std::vector<int> idx(m);
    for (int i = 0; i < m; ++i) idx[i] = i;
    CounterRng pick(seed, 2);
    for (int i = 0; i < k; ++i) std::swap(idx[i], idx[i + int(pick.below(uint64_t(m - i)))]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());

    const double max_entry = dm.entries.maxCoeff();
    CounterRng noise(seed, 3);
    for (int j : idx)
        for (int i = 0; i < m; ++i) dm.entries(i, j) = noise.uniform(0, max_entry);
    return idx;
}

}  // namespace

TEST_CASE("exact recovery: fully observed noiseless rank-4, nothing corrupted") {
    auto dm = delay_matrix_from_points(random_points(11, 64, 1000.0), 0.02);
    const auto res = complete(dm, RmcConfig{});
    CHECK(res.converged);
    CHECK(res.objective_monotone);
    CHECK(res.corrupted.empty());
    CHECK((res.l_matrix - dm.entries).norm() / dm.entries.norm() < 1e-6);
}

TEST_CASE("planted corrupted columns are detected under partial observation") {
    // the documented operating point: m=100, beta=0.3, p=0.6
    auto dm = delay_matrix_from_points(random_points(21, 100, 1000.0), 0.02);
    const auto planted = corrupt_columns(dm, 0.3, 21);
    dm.mask = sample_mask(100, 0.6, 99);

    RmcConfig cfg;
    cfg.sample_p = 0.5;
    const auto res = complete(dm, cfg);
    CHECK(res.objective_monotone);

    int agree = 0;
    std::vector<bool> truth(100, false), found(100, false);
    for (int j : planted) truth[j] = true;
    for (int j : res.corrupted) found[j] = true;
    for (int j = 0; j < 100; ++j) agree += truth[j] == found[j];
    CHECK(agree >= 95);

    // removal rule: detected rows are zeroed in both parts
    for (int j : res.corrupted) {
        CHECK(res.l_matrix.row(j).norm() == 0.0);
        CHECK(res.c_matrix.row(j).norm() == 0.0);
    }

    // surviving principal submatrix keeps the low rank
    std::vector<int> keep;
    for (int j = 0; j < 100; ++j)
        if (!found[j]) keep.push_back(j);
    Eigen::MatrixXd sub(keep.size(), keep.size());
    for (size_t a = 0; a < keep.size(); ++a)
        for (size_t b = 0; b < keep.size(); ++b) sub(a, b) = res.l_matrix(keep[a], keep[b]);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(sub);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > 1e-6 * svd.singularValues()[0]) ++rank;
    CHECK(rank <= cfg.rank_hint + 2);
}

TEST_CASE("data fidelity holds on the mask at convergence") {
    auto dm = delay_matrix_from_points(random_points(31, 60, 500.0), 0.02);
    dm.mask = sample_mask(60, 0.7, 5);
    RmcConfig cfg;
    cfg.sample_p = 0.6;
    const auto res = complete(dm, cfg);
    REQUIRE(res.converged);
    const Eigen::MatrixXd resid =
        (dm.entries - res.l_matrix - res.c_matrix).cwiseProduct(dm.mask);
    const double rel = resid.norm() / dm.entries.cwiseProduct(dm.mask).norm();
    CHECK(rel < 10 * cfg.tol);
}

TEST_CASE("beta cap bounds the detected set") {
    auto dm = delay_matrix_from_points(random_points(41, 80, 800.0), 0.02);
    (void)corrupt_columns(dm, 0.25, 41);
    RmcConfig cfg;
    cfg.beta = 0.25;
    const auto res = complete(dm, cfg);
    CHECK(res.corrupted.size() <= size_t(std::ceil(0.25 * 80)));
}

TEST_CASE("permutation equivariance of the detected set") {
    auto dm = delay_matrix_from_points(random_points(51, 40, 600.0), 0.02);
    const auto planted = corrupt_columns(dm, 0.2, 51);
    (void)planted;
    const auto base = complete(dm, RmcConfig{});

    // reverse-permute rows and columns
    const int m = dm.m;
    DelayMatrix perm = DelayMatrix::zeros(m);
    perm.mask = Eigen::MatrixXd::Ones(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) perm.entries(m - 1 - i, m - 1 - j) = dm.entries(i, j);
    const auto mirrored = complete(perm, RmcConfig{});

    std::vector<int> expect;
    for (int j : base.corrupted) expect.push_back(m - 1 - j);
    std::sort(expect.begin(), expect.end());
    CHECK(mirrored.corrupted == expect);
}

TEST_CASE("squared-distance matrices of planar point sets have rank at most 4") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const auto pts = random_points(seed, 6 + int(seed % 25), 100.0);
        CHECK(squared_distance_rank_check(pts) <= 4);
    }
    const std::vector<PlanarPoint> same(7, PlanarPoint{3, 4});
    CHECK(squared_distance_rank_check(same) == 0);

    std::vector<PlanarPoint> collinear;
    for (int i = 0; i < 9; ++i) collinear.push_back(PlanarPoint{double(i), 2.0 * i});
    CHECK(squared_distance_rank_check(collinear) <= 3);
}

TEST_CASE("sample_mask: full observation, symmetry, density, determinism") {
    const auto full = sample_mask(20, 1.0, 1);
    CHECK(full.sum() == 400);

    const int m = 100;
    const auto mask = sample_mask(m, 0.5, 7);
    for (int i = 0; i < m; ++i) {
        CHECK(mask(i, i) == 1.0);
        for (int j = 0; j < m; ++j) CHECK(mask(i, j) == mask(j, i));
    }
    const double off_frac = (mask.sum() - m) / double(m * m - m);
    CHECK(off_frac == doctest::Approx(0.5).epsilon(0.06));

    CHECK(sample_mask(m, 0.5, 7) == mask);
    CHECK(sample_mask(m, 0.5, 8) != mask);
}

TEST_CASE("bad inputs are rejected") {
    CHECK_THROWS_AS((void)complete(DelayMatrix::zeros(4), RmcConfig{}), BadMask);

    DelayMatrix sparse = DelayMatrix::zeros(20);
    RmcConfig cfg;
    cfg.sample_p = 0.9; // diagonal-only mask cannot satisfy this floor
    CHECK_THROWS_AS((void)complete(sparse, cfg), BadMask);
}

TEST_CASE("matrix CSV round-trip with companion mask") {
    auto dm = delay_matrix_from_points(random_points(61, 24, 300.0), 0.02);
    dm.mask = sample_mask(24, 0.6, 3);
    dm.entries = dm.entries.cwiseProduct(dm.mask);

    const auto dir = std::filesystem::temp_directory_path();
    const auto mpath = (dir / "gp_rmc_matrix.csv").string();
    const auto kpath = (dir / "gp_rmc_mask.csv").string();
    write_matrix_csv(mpath, kpath, dm, 0.6, 3);
    const auto back = read_matrix_csv(mpath, kpath);

    CHECK(back.m == dm.m);
    CHECK((back.entries - dm.entries).norm() == 0.0);
    CHECK((back.mask - dm.mask).norm() == 0.0);
    std::filesystem::remove(mpath);
    std::filesystem::remove(kpath);
}

TEST_CASE("iteration starvation reports non-convergence with the best iterate") {
    auto dm = delay_matrix_from_points(random_points(71, 40, 700.0), 0.02);
    dm.mask = sample_mask(40, 0.5, 9);
    RmcConfig cfg;
    cfg.sample_p = 0.4;
    cfg.max_iter = 3;
    const auto res = complete(dm, cfg);
    CHECK(!res.converged);
    CHECK(res.iterations == 3);
    CHECK(res.l_matrix.norm() > 0.0);
    CHECK(res.objective_monotone);
}
