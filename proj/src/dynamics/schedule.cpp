#include "egohome/dynamics/schedule.hpp"

#include <cmath>

namespace egohome::dynamics {

void NoiseSchedule::validate(bool allow_degenerate) const {
    EGO_CHECK(K >= 1 && int(beta.size()) == K && int(alpha_bar.size()) == K,
              "schedule: inconsistent sizes");
    real prod = 1.0;
    for (int k = 0; k < K; ++k) {
        prod *= 1.0 - beta[size_t(k)];
        EGO_CHECK(std::fabs(prod - alpha_bar[size_t(k)]) <= 1e-12,
                  "schedule: alpha_bar[%d] does not match the product of (1-beta)", k + 1);
        EGO_CHECK(alpha_bar[size_t(k)] > 0 && alpha_bar[size_t(k)] <= 1.0,
                  "schedule: alpha_bar[%d] outside (0,1]", k + 1);
        if (!allow_degenerate && k > 0)
            EGO_CHECK(alpha_bar[size_t(k)] < alpha_bar[size_t(k - 1)],
                      "schedule: alpha_bar must be strictly decreasing");
    }
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<real> betas, bool allow_degenerate) {
    NoiseSchedule s;
    s.K = int(betas.size());
    s.beta = std::move(betas);
    s.alpha_bar.resize(s.beta.size());
    real prod = 1.0;
    for (size_t i = 0; i < s.beta.size(); ++i) {
        prod *= 1.0 - s.beta[i];
        s.alpha_bar[i] = prod;
    }
    s.validate(allow_degenerate);
    return s;
}

NoiseSchedule make_schedule(int K, ScheduleKind kind, real beta_min, real beta_max) {
    EGO_CHECK(K >= 1, "make_schedule: K must be >= 1");
    EGO_CHECK(beta_min > 0 && beta_min <= beta_max && beta_max < 1,
              "make_schedule: need 0 < beta_min <= beta_max < 1 (got %g, %g)", beta_min, beta_max);
    std::vector<real> betas(static_cast<size_t>(K), 0.0);
    if (kind == ScheduleKind::Linear) {
        for (int k = 0; k < K; ++k)
            betas[size_t(k)] = K == 1 ? beta_min : beta_min + (beta_max - beta_min) * real(k) / real(K - 1);
    } else {
        // Squared-cosine alpha_bar profile, betas clipped into the range.
        auto abar = [&](real t) {
            const real v = std::cos((t + 0.008) / 1.008 * M_PI / 2.0);
            return v * v;
        };
        for (int k = 0; k < K; ++k) {
            const real t0 = real(k) / K, t1 = real(k + 1) / K;
            betas[size_t(k)] = std::clamp<real>(1.0 - abar(t1) / abar(t0), beta_min, beta_max);
        }
    }
    return NoiseSchedule::from_betas(std::move(betas));
}

nn::Tensor forward_diffuse(const nn::Tensor& x, int k, const nn::Tensor& eps,
                           const NoiseSchedule& schedule) {
    EGO_CHECK(x.shape == eps.shape, "forward_diffuse: x and eps shapes differ");
    const real ab = schedule.alpha_bar_at(k);
    const real sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    nn::Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = sa * out.data[i] + sb * eps.data[i];
    return out;
}

}  // namespace egohome::dynamics
