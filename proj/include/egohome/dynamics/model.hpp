#pragma once

#include <optional>

#include "egohome/core/config.hpp"
#include "egohome/dataset/dataset.hpp"
#include "egohome/dynamics/schedule.hpp"
#include "egohome/nn/layers.hpp"

namespace egohome::dynamics {

// Conditioning vocabulary: the 13 skill verbs plus a navigation goal token
// ("walk to the X") used by the subgoal model.
constexpr int kWalkToToken = microhome::kNumVerbs;
constexpr int kVocabSize = microhome::kNumVerbs + 1;
int verb_token(const std::string& text);  // throws on unknown verbs

struct DynamicsConfig {
    int image_size = 64;
    int base = 32;   // stem width; levels are base, w1, w2
    int w1 = 48;
    int w2 = 64;
    int emb = 32;    // time/action embedding width
    int K = 200;
    ScheduleKind schedule_kind = ScheduleKind::Linear;
    real beta_min = 1.5e-3;
    real beta_max = 2.5e-2;
    int epochs = 25;
    int batch = 8;
    real lr = 2e-3;
    uint64_t seed = 1;

    static DynamicsConfig from_config(const Config& cfg, const std::string& prefix = "dynamics.");
};

// One training record: current frame, next frame, conditioning.
struct DynItem {
    nn::Tensor x_t;          // [3,S,S] in [0,1]
    nn::Tensor x_next;
    int verb_tok = 0;
    nn::Tensor flow_color;   // ground-truth current-flow color (control hint)
    std::optional<nn::Tensor> prev_flow_color;
    flow::FlowField gt_flow; // at model resolution
    std::string action_text;
};

// Epsilon-prediction U-Net conditioned on the current observation (channel
// concat), a step embedding and a verb embedding, with an optional
// zero-initialized control branch fed by a flow-color hint.
class DenoiserModel {
public:
    DenoiserModel(const DynamicsConfig& cfg, uint64_t init_seed = 0xD1F);

    DynamicsConfig cfg;
    NoiseSchedule schedule;
    nn::ParamStore ps;
    bool has_control = false;
    bool base_frozen = false;

    // Low-rank adapters keyed by dense-projection name ("attn.q", "mlp.fc1",
    // ...); managed by the adapt module.
    struct LoraEntry {
        nn::Var A, B;
        real scale;  // alpha / rank
    };
    std::map<std::string, LoraEntry> lora;
    bool lora_merged = false;
    static const std::vector<std::string>& lora_target_names();

    // flow_color null unless the control branch is attached.
    nn::Var forward(const nn::Var& noisy, const nn::Var& x_t, int k, int verb_tok,
                    const nn::Var& flow_color) const;

    // Clones the encoder into a zero-initialized residual branch and freezes
    // the base; output at init equals the base bit-for-bit.
    void attach_control_branch();

    void save(const std::string& path, const std::string& config_echo) const;
    static DenoiserModel load(const std::string& path);

private:
    nn::Var encode_cond(int k, int verb_tok) const;  // [emb]
    nn::Var apply_dense(const std::string& key, const nn::Var& x, const nn::Var& b) const;
};

// Per-item loss node with fixed (k, eps): exposed for gradient checks.
nn::Var denoise_loss_item(const DenoiserModel& model, const DynItem& item, int k,
                          const nn::Tensor& eps);

// Monte-Carlo batch loss: samples k uniform in [1,K] and eps ~ N(0,1) per
// item. Aborts with the batch id on a non-finite value.
real denoise_loss(const DenoiserModel& model, const std::vector<DynItem>& batch, Rng& rng,
                  int batch_id = 0);

struct DynTrainResult {
    std::vector<real> epoch_loss;
    std::string to_csv() const;
};

// Adam over epochs; aborts on divergence (loss > 10x initial over 3
// consecutive epochs). When the base is frozen only control/embedding
// parameters move.
DynTrainResult train_dynamics(DenoiserModel& model, const std::vector<DynItem>& items,
                              bool flow_mode);

// Strided deterministic ancestral sampler; pure function of (model, inputs,
// seed, steps). Output in [0,1].
nn::Tensor sample_next_obs(const DenoiserModel& model, const nn::Tensor& x_t,
                           const std::string& action_text,
                           const std::optional<nn::Tensor>& flow_color, int steps, uint64_t seed);
nn::Tensor sample_next_obs_tok(const DenoiserModel& model, const nn::Tensor& x_t, int verb_tok,
                               const std::optional<nn::Tensor>& flow_color, int steps, uint64_t seed);

// Dataset adapters.
std::vector<DynItem> load_dyn_items(const dataset::DatasetManifest& manifest, const std::string& split,
                                    int model_size, real max_mag, bool skill_trajs_only = true);
// (x_first, goal phrase, x_last) triples for the subgoal image model.
std::vector<DynItem> load_subgoal_items(const dataset::DatasetManifest& manifest,
                                        const std::string& split, int model_size);

}  // namespace egohome::dynamics
