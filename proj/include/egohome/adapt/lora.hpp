#pragma once

#include "egohome/dynamics/model.hpp"

namespace egohome::adapt {

using dynamics::DenoiserModel;
using dynamics::DynItem;

struct LoraConfig {
    int rank = 4;
    real alpha = 8.0;
    std::vector<std::string> targets;  // empty = all dense projections
    int steps = 100;                   // optimizer steps over the few-shot set
    int batch = 8;
    real lr = 2e-3;
    uint64_t seed = 21;

    static LoraConfig from_config(const Config& cfg);
};

// Adds rank-r adapters (A random, B zero) to the selected dense layers and
// freezes everything else. At init the adapted model output equals the base
// output exactly.
void inject_lora(DenoiserModel& model, const LoraConfig& cfg);

struct LoraCurve {
    std::vector<real> step_loss;
    std::string to_csv() const;
};

// Trains only the adapter parameters with the denoising objective on a
// few-shot restyled sample set.
LoraCurve finetune_lora(DenoiserModel& model, const std::vector<DynItem>& few_shot,
                        const LoraConfig& cfg);

// Folds the deltas into the base weights / restores them. Double-merge and
// unmerge-without-merge are rejected.
void merge_lora(DenoiserModel& model);
void unmerge_lora(DenoiserModel& model);

// Removes the adapters entirely; the model reverts to base behaviour.
void detach_lora(DenoiserModel& model);

// Adapter-only checkpoint, separate from the base model checkpoint.
void save_lora(const DenoiserModel& model, const std::string& path);
void load_lora(DenoiserModel& model, const std::string& path);

}  // namespace egohome::adapt
