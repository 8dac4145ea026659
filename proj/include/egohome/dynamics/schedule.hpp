#pragma once

#include <vector>

#include "egohome/core/common.hpp"
#include "egohome/nn/tensor.hpp"

namespace egohome::dynamics {

enum class ScheduleKind { Linear, Cosine };

struct NoiseSchedule {
    int K = 0;
    std::vector<real> beta;       // per-step variances, beta[0] is step 1
    std::vector<real> alpha_bar;  // cumulative products

    // Enforces: alpha_bar[k] = prod_{j<=k}(1-beta[j]) to 1e-12, values in
    // (0,1], strictly decreasing unless `allow_degenerate`.
    void validate(bool allow_degenerate = false) const;

    real alpha_bar_at(int k) const {  // k in [1, K]
        EGO_CHECK(k >= 1 && k <= K, "schedule: step %d out of range [1,%d]", k, K);
        return alpha_bar[size_t(k - 1)];
    }

    static NoiseSchedule from_betas(std::vector<real> betas, bool allow_degenerate = false);
};

NoiseSchedule make_schedule(int K, ScheduleKind kind, real beta_min, real beta_max);

// sqrt(alpha_bar_k) * x + sqrt(1 - alpha_bar_k) * eps.
nn::Tensor forward_diffuse(const nn::Tensor& x, int k, const nn::Tensor& eps,
                           const NoiseSchedule& schedule);

}  // namespace egohome::dynamics
