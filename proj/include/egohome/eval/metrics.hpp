#pragma once

#include <functional>

#include "egohome/core/config.hpp"
#include "egohome/flow/flow.hpp"
#include "egohome/microhome/types.hpp"
#include "egohome/nn/layers.hpp"

namespace egohome::eval {

// --- feature statistics -------------------------------------------------------

struct FeatureStats {
    std::vector<real> mean;  // [D]
    std::vector<real> cov;   // [D*D], sample covariance (n-1)
    int count = 0;
    int dim() const { return int(mean.size()); }
};

// Streaming accumulator; equals the two-pass batch computation to 1e-10.
class FeatureAccumulator {
public:
    explicit FeatureAccumulator(int dim);
    void add(const std::vector<real>& feat);
    FeatureStats finalize() const;  // requires count >= 2

private:
    int dim_;
    int count_ = 0;
    std::vector<real> sum_;
    std::vector<real> sum_outer_;
};

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)); the matrix square root
// comes from a symmetric eigendecomposition with negative eigenvalues
// clipped at the -1e-8 tolerance (beyond that: non-PSD error).
real frechet_distance(const FeatureStats& a, const FeatureStats& b);

// --- frozen feature encoder -----------------------------------------------------

struct FeatureEncoderConfig {
    int image_size = 64;
    int feat_dim = 64;
    int ch = 8;
    int epochs = 8;
    int batch = 16;
    real lr = 2e-3;
    uint64_t seed = 77;

    static FeatureEncoderConfig from_config(const Config& cfg);
};

// Small convolutional autoencoder; after training once the encoder half is
// frozen and versioned, and only the bottleneck features are used.
class FeatureEncoder {
public:
    explicit FeatureEncoder(const FeatureEncoderConfig& cfg);

    FeatureEncoderConfig cfg;
    nn::ParamStore ps;

    std::vector<real> encode(const nn::Tensor& img) const;  // [3,S,S] -> [feat_dim]
    // Autoencoder training; returns final reconstruction loss.
    real train(const std::vector<nn::Tensor>& images);

    void save(const std::string& path, const std::string& config_echo) const;
    static FeatureEncoder load(const std::string& path);
};

FeatureStats extract_features(const FeatureEncoder& encoder, const std::vector<nn::Tensor>& images);

// --- motion correctness -----------------------------------------------------------

enum class MotionVerdict { Correct, Incorrect, Inconclusive };

// Automated stand-in for the human direction/amplitude judgment: estimates
// the flow between x_t and the generated image and compares its dominant
// vector with the ground truth (within 45 degrees, magnitude ratio in
// [0.5, 2]). Near-zero ground truth is inconclusive and excluded from rates.
MotionVerdict motion_correctness(const Image& x_t, const Image& generated,
                                 const flow::FlowField& gt_flow);

// --- bootstrap ----------------------------------------------------------------------

struct BootstrapStat {
    real mean = 0, variance = 0;
};
BootstrapStat bootstrap(int n_items, const std::function<real(const std::vector<int>&)>& stat,
                        int resamples, uint64_t seed);

}  // namespace egohome::eval
