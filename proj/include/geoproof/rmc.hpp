#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geoproof/geo.hpp"

namespace geoproof::rmc {

struct BadMask : std::runtime_error {
    explicit BadMask(const std::string& what) : std::runtime_error(what) {}
};

/// Partially observed squared-RTT matrix. `mask` holds 0/1 observation
/// indicators; the diagonal is always observed and zero.
struct DelayMatrix {
    int m = 0;
    Eigen::MatrixXd entries; // ms^2, meaningful where mask is 1
    Eigen::MatrixXd mask;    // 0/1

    static DelayMatrix zeros(int m);
};

struct RmcConfig {
    int rank_hint = 4;
    double lambda = 0.0;       // <= 0: use lambda_scale / sqrt(p_observed * m)
    double lambda_scale = 4.0;
    double sample_p = 1.0;     // expected observation probability (sanity floor)
    double tol = 1e-7;         // relative Frobenius residual on the mask
    int max_iter = 1000;
    double detect_threshold = 0.1; // fraction of mean observed column norm
    std::optional<double> beta;    // when set, detected set capped at ceil(beta*m)
};

struct CompletionResult {
    Eigen::MatrixXd l_matrix; // recovered low-rank part, corrupted rows zeroed
    Eigen::MatrixXd c_matrix; // corruption part, corrupted rows zeroed
    std::vector<int> corrupted;
    int iterations = 0;
    bool converged = false;
    /// Augmented-Lagrangian objective was non-increasing across the primal
    /// steps of every iteration (a solver self-check).
    bool objective_monotone = true;
};

/// Decomposes the observed entries into a low-rank part and a column-sparse
/// corruption part by inexact augmented-Lagrangian iteration: singular-value
/// soft thresholding for L, column-wise shrinkage for C, dual update on the
/// masked residual. Columns of C with large norm are reported as corrupted
/// and the matching rows zeroed so the surviving submatrix of L is clean.
CompletionResult complete(const DelayMatrix& matrix, const RmcConfig& cfg);

/// Numerical rank (singular values above 1e-8 of the largest) of the squared
/// Euclidean distance matrix of the points.
int squared_distance_rank_check(const std::vector<PlanarPoint>& points);

/// Symmetric Bernoulli(p) observation mask with an always-observed diagonal;
/// deterministic under the seed.
Eigen::MatrixXd sample_mask(int m, double p, uint64_t seed);

/// Dense CSV plus companion 0/1 mask CSV, each with a "m,p,seed" comment
/// header.
void write_matrix_csv(const std::string& matrix_path, const std::string& mask_path, const DelayMatrix& dm,
                      double p, uint64_t seed);
DelayMatrix read_matrix_csv(const std::string& matrix_path, const std::string& mask_path);

}  // namespace geoproof::rmc
