#pragma once

#include <cmath>
#include <vector>

// Test-only cyclic Jacobi eigensolver for symmetric matrices; the oracle is
// deliberately independent of the Eigen-backed implementation under test.
namespace egohome::testsupport {

struct JacobiResult {
    std::vector<double> values;   // D
    std::vector<double> vectors;  // D*D, column i is eigenvector i
};

inline JacobiResult jacobi_symmetric(std::vector<double> m, int d) {
    std::vector<double> v(size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i) v[size_t(i) * d + i] = 1.0;
    auto at = [&](std::vector<double>& a, int r, int c) -> double& { return a[size_t(r) * d + c]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += m[size_t(p) * d + q] * m[size_t(p) * d + q];
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                const double apq = at(m, p, q);
                if (std::fabs(apq) < 1e-30) continue;
                const double theta = (at(m, q, q) - at(m, p, p)) / (2 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < d; ++k) {
                    const double mkp = at(m, k, p), mkq = at(m, k, q);
                    at(m, k, p) = c * mkp - s * mkq;
                    at(m, k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < d; ++k) {
                    const double mpk = at(m, p, k), mqk = at(m, q, k);
                    at(m, p, k) = c * mpk - s * mqk;
                    at(m, q, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < d; ++k) {
                    const double vkp = at(v, k, p), vkq = at(v, k, q);
                    at(v, k, p) = c * vkp - s * vkq;
                    at(v, k, q) = s * vkp + c * vkq;
                }
            }
    }
    JacobiResult r;
    r.vectors = v;
    r.values.resize(size_t(d));
    for (int i = 0; i < d; ++i) r.values[size_t(i)] = m[size_t(i) * d + i];
    return r;
}

inline std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int d) {
    std::vector<double> out(size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            const double av = a[size_t(i) * d + k];
            for (int j = 0; j < d; ++j) out[size_t(i) * d + j] += av * b[size_t(k) * d + j];
        }
    return out;
}

inline std::vector<double> jacobi_sqrt(const std::vector<double>& m, int d) {
    const auto e = jacobi_symmetric(m, d);
    std::vector<double> out(size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0;
            for (int k = 0; k < d; ++k) {
                const double lam = std::max(0.0, e.values[size_t(k)]);
                s += e.vectors[size_t(i) * d + k] * std::sqrt(lam) * e.vectors[size_t(j) * d + k];
            }
            out[size_t(i) * d + j] = s;
        }
    return out;
}

// Independent route for the Frechet distance between feature statistics.
inline double frechet_oracle(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                             const std::vector<double>& mu_b, const std::vector<double>& cov_b, int d) {
    double mean_term = 0;
    for (int i = 0; i < d; ++i) {
        const double diff = mu_a[size_t(i)] - mu_b[size_t(i)];
        mean_term += diff * diff;
    }
    double tr_a = 0, tr_b = 0;
    for (int i = 0; i < d; ++i) {
        tr_a += cov_a[size_t(i) * d + i];
        tr_b += cov_b[size_t(i) * d + i];
    }
    const auto sq = jacobi_sqrt(cov_a, d);
    auto inner = matmul_sq(matmul_sq(sq, cov_b, d), sq, d);
    // symmetrize before the eigen pass
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double avg = 0.5 * (inner[size_t(i) * d + j] + inner[size_t(j) * d + i]);
            inner[size_t(i) * d + j] = inner[size_t(j) * d + i] = avg;
        }
    const auto ei = jacobi_symmetric(inner, d);
    double tr_sqrt = 0;
    for (double lam : ei.values) tr_sqrt += std::sqrt(std::max(0.0, lam));
    return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
}

}  // namespace egohome::testsupport
