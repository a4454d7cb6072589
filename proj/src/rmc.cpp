#include "geoproof/rmc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "geoproof/rng.hpp"

namespace geoproof::rmc {

namespace {

double l12_norm(const Eigen::MatrixXd& x) {
    double sum = 0.0;
    for (int j = 0; j < x.cols(); ++j) sum += x.col(j).norm();
    return sum;
}

double spectral_norm_estimate(const Eigen::MatrixXd& x) {
    // power iteration on x^T x; plenty accurate for a step-size seed
    Eigen::VectorXd v = Eigen::VectorXd::Ones(x.cols()).normalized();
    double sigma = 0.0;
    for (int it = 0; it < 30; ++it) {
        Eigen::VectorXd w = x.transpose() * (x * v);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        v = w / norm;
        sigma = std::sqrt(norm);
    }
    return sigma;
}

}  // namespace

DelayMatrix DelayMatrix::zeros(int m) {
    DelayMatrix dm;
    dm.m = m;
    dm.entries = Eigen::MatrixXd::Zero(m, m);
    dm.mask = Eigen::MatrixXd::Identity(m, m); // diagonal always observed
    return dm;
}

CompletionResult complete(const DelayMatrix& matrix, const RmcConfig& cfg) {
    const int m = matrix.m;
    if (m < 8) throw BadMask{"matrix too small (m >= 8 required)"};
    if (matrix.entries.rows() != m || matrix.entries.cols() != m || matrix.mask.rows() != m ||
        matrix.mask.cols() != m)
        throw BadMask{"shape mismatch between entries and mask"};

    const double observed = matrix.mask.sum();
    if (observed < cfg.sample_p * m * m / 2.0)
        throw BadMask{"too few observed entries for the configured sample probability"};

    const Eigen::MatrixXd& mask = matrix.mask;
    const Eigen::MatrixXd unmask = Eigen::MatrixXd::Ones(m, m) - mask;
    const Eigen::MatrixXd M = matrix.entries.cwiseProduct(mask);
    const double norm_M = M.norm();

    const double p_obs = observed / double(m) / double(m);
    const double lambda = cfg.lambda > 0.0 ? cfg.lambda : cfg.lambda_scale / std::sqrt(p_obs * m);

    CompletionResult res;
    res.l_matrix = Eigen::MatrixXd::Zero(m, m);
    res.c_matrix = Eigen::MatrixXd::Zero(m, m);
    if (norm_M == 0.0) {
        res.converged = true;
        return res;
    }

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(m, m);

    double mu = 1.25 / spectral_norm_estimate(M);
    const double mu_max = mu * 1e7;
    const double rho = 1.05;

    const auto quad = [&](const Eigen::MatrixXd& l, const Eigen::MatrixXd& c) {
        return 0.5 * mu * ((M - l - c).cwiseProduct(mask) + Y / mu).squaredNorm();
    };

    double nuc_prev = 0.0;
    const double mono_slack = 1e-9 * norm_M * norm_M + 1e-9;
    int it = 0;
    for (; it < cfg.max_iter; ++it) {
        const double phi_start = nuc_prev + lambda * l12_norm(C) + quad(L, C);

        // L step: fill unobserved entries with the current iterate, then
        // singular-value soft thresholding at 1/mu.
        const Eigen::MatrixXd w = (M - C + Y / mu).cwiseProduct(mask) + L.cwiseProduct(unmask);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::VectorXd sv = svd.singularValues();
        double nuc = 0.0;
        for (int i = 0; i < sv.size(); ++i) {
            sv[i] = std::max(0.0, sv[i] - 1.0 / mu);
            nuc += sv[i];
        }
        L = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();

        const double phi_after_l = nuc + lambda * l12_norm(C) + quad(L, C);
        if (phi_after_l > phi_start + mono_slack) res.objective_monotone = false;

        // C step: column-wise shrinkage of the masked residual at lambda/mu.
        const Eigen::MatrixXd g = (M - L + Y / mu).cwiseProduct(mask);
        for (int j = 0; j < m; ++j) {
            const double cn = g.col(j).norm();
            const double scale = cn > lambda / mu ? 1.0 - lambda / (mu * cn) : 0.0;
            C.col(j) = scale * g.col(j);
        }

        const double phi_after_c = nuc + lambda * l12_norm(C) + quad(L, C);
        if (phi_after_c > phi_after_l + mono_slack) res.objective_monotone = false;

        const Eigen::MatrixXd residual = (M - L - C).cwiseProduct(mask);
        Y += mu * residual;
        nuc_prev = nuc;

        if (residual.norm() / norm_M < cfg.tol) {
            res.converged = true;
            ++it;
            break;
        }
        mu = std::min(mu * rho, mu_max);
    }
    res.iterations = it;

    // Detection: columns of C whose norm stands out against the observed
    // data's mean column norm.
    double mean_col = 0.0;
    for (int j = 0; j < m; ++j) mean_col += M.col(j).norm();
    mean_col /= double(m);
    const double threshold = cfg.detect_threshold * mean_col;

    std::vector<int> detected;
    for (int j = 0; j < m; ++j)
        if (C.col(j).norm() > threshold) detected.push_back(j);

    if (cfg.beta.has_value()) {
        const size_t cap = size_t(std::ceil(*cfg.beta * m));
        if (detected.size() > cap) {
            std::sort(detected.begin(), detected.end(),
                      [&](int a, int b) { return C.col(a).norm() > C.col(b).norm(); });
            detected.resize(cap);
            std::sort(detected.begin(), detected.end());
        }
    }

    res.l_matrix = std::move(L);
    res.c_matrix = std::move(C);
    res.corrupted = std::move(detected);
    for (int j : res.corrupted) {
        res.l_matrix.row(j).setZero();
        res.c_matrix.row(j).setZero();
    }
    return res;
}

int squared_distance_rank_check(const std::vector<PlanarPoint>& points) {
    const int n = static_cast<int>(points.size());
    Eigen::MatrixXd d2(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dx = points[i].x - points[j].x;
            const double dy = points[i].y - points[j].y;
            d2(i, j) = dx * dx + dy * dy;
        }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(d2);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] == 0.0) return 0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-8 * sv[0]) ++rank;
    return rank;
}

Eigen::MatrixXd sample_mask(int m, double p, uint64_t seed) {
    CounterRng rng(seed, 0xa5a5);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Identity(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (rng.bernoulli(p)) {
                mask(i, j) = 1.0;
                mask(j, i) = 1.0;
            }
    return mask;
}

void write_matrix_csv(const std::string& matrix_path, const std::string& mask_path, const DelayMatrix& dm,
                      double p, uint64_t seed) {
    const auto write = [&](const std::string& path, const Eigen::MatrixXd& x, bool as_int) {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << "# m,p,seed\n# " << dm.m << "," << p << "," << seed << "\n";
        out.precision(17);
        for (int i = 0; i < x.rows(); ++i) {
            for (int j = 0; j < x.cols(); ++j) {
                if (j) out << ",";
                if (as_int)
                    out << int(x(i, j));
                else
                    out << x(i, j);
            }
            out << "\n";
        }
    };
    write(matrix_path, dm.entries, false);
    write(mask_path, dm.mask, true);
}

DelayMatrix read_matrix_csv(const std::string& matrix_path, const std::string& mask_path) {
    const auto read = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read " + path);
        std::vector<std::vector<double>> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::vector<double> row;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
            rows.push_back(std::move(row));
        }
        Eigen::MatrixXd x(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != size_t(x.cols())) throw std::runtime_error("ragged CSV " + path);
            for (size_t j = 0; j < rows[i].size(); ++j) x(i, j) = rows[i][j];
        }
        return x;
    };

    DelayMatrix dm;
    dm.entries = read(matrix_path);
    dm.mask = read(mask_path);
    dm.m = int(dm.entries.rows());
    if (dm.entries.rows() != dm.entries.cols() || dm.mask.rows() != dm.entries.rows() ||
        dm.mask.cols() != dm.entries.cols())
        throw BadMask{"matrix/mask shape mismatch"};
    return dm;
}

}  // namespace geoproof::rmc
