#pragma once

#include "egohome/core/config.hpp"
#include "egohome/dataset/dataset.hpp"
#include "egohome/flow/flow.hpp"
#include "egohome/nn/layers.hpp"

namespace egohome::flowpred {

using microhome::Verb;

struct FlowPredictorConfig {
    int image_size = 64;       // flow-color resolution the model runs at
    int codebook_size = 128;
    int code_dim = 16;         // D
    real beta = 0.25;          // commitment weight
    bool action_conditioned = true;
    int ch1 = 16, ch2 = 32;
    real max_mag = 8.0;        // color codec scale (from the dataset manifest)
    int epochs = 30;
    int batch = 16;
    real lr = 2e-3;
    uint64_t seed = 1;

    static FlowPredictorConfig from_config(const Config& cfg);
};

// Per-term breakdown of the quantized-autoencoder objective. The terms are
// graph nodes so gradient routing (stop-gradients) is part of the contract.
struct VqLossTerms {
    nn::Var total, recon, codebook_term, commit_term;
};

// total = |x - x_hat|^2 + |sg[enc_out] - z_q|^2 + beta * |sg[z_q] - enc_out|^2.
// The codebook term trains only the codebook; the commit term only the encoder.
VqLossTerms vq_loss(const nn::Var& x, const nn::Var& x_hat, const nn::Var& enc_out,
                    const nn::Var& z_q, real beta);

struct QuantizeResult {
    nn::Var z_q;               // [T, D], gradients flow into the codebook
    std::vector<int> indices;  // chosen code per token
};
// Nearest codebook entry per latent vector, ties to the lowest index.
QuantizeResult quantize(const nn::Var& latents, const nn::Var& codebook);

class FlowPredictorModel {
public:
    explicit FlowPredictorModel(const FlowPredictorConfig& cfg, uint64_t init_seed = 0x71A9);

    FlowPredictorConfig cfg;
    nn::ParamStore ps;

    int latent_side() const { return cfg.image_size / 4; }

    nn::Var encode(const nn::Var& img) const;                     // [3,S,S] -> [T, D] tokens
    nn::Var decode(const nn::Var& dec_in_tokens, int verb) const; // -> [3,S,S]

    // Full inference path: color(prev flow) -> encode -> quantize -> decode.
    flow::FlowField predict(const flow::FlowField& f_prev, const std::string& action_text) const;

    void save(const std::string& path, const std::string& config_echo) const;
    static FlowPredictorModel load(const std::string& path);
};

struct FlowPair {
    nn::Tensor prev_color;  // [3,S,S]
    nn::Tensor cur_color;
    int verb;
    flow::FlowField prev_flow;  // at model resolution
    flow::FlowField cur_flow;
};

// Consecutive in-trajectory pairs from a generated dataset split, downscaled
// to the model resolution.
std::vector<FlowPair> load_flow_pairs(const dataset::DatasetManifest& manifest,
                                      const std::string& split, int model_size, real max_mag);

struct TrainCurve {
    std::vector<real> epoch_loss;
    std::string to_csv() const;
};

// Trains encoder/decoder/codebook with vq_loss; reconstruction target is the
// current flow map given the previous one plus the action embedding.
TrainCurve train_flow_predictor(FlowPredictorModel& model, const std::vector<FlowPair>& pairs);

}  // namespace egohome::flowpred
