#pragma once

#include <iosfwd>

#include "egohome/adapt/lora.hpp"
#include "egohome/eval/harness.hpp"

namespace egohome::cli {

struct Paths {
    std::string dataset_root;
    std::string restyled_root;
    std::string checkpoint_dir;
    std::string report_dir;
    static Paths from(const Config& cfg);

    std::string flowpred_ckpt() const { return checkpoint_dir + "/flowpred.bin"; }
    std::string dynamics_base_ckpt() const { return checkpoint_dir + "/dynamics_base.bin"; }
    std::string dynamics_flow_ckpt() const { return checkpoint_dir + "/dynamics_flow.bin"; }
    std::string subgoal_ckpt() const { return checkpoint_dir + "/subgoal.bin"; }
    std::string lora_ckpt() const { return checkpoint_dir + "/lora.bin"; }
    std::string features_ckpt() const { return checkpoint_dir + "/features.bin"; }
};

// Pipeline steps. Each is idempotent: when the target artifact already
// matches the config echo it is left untouched and the step reports
// "up to date". Missing prerequisites raise errors naming the producing
// subcommand.
bool gen_data(const Config& cfg, bool restyled, bool force, std::ostream& log);
bool train_flowpred(const Config& cfg, bool force, std::ostream& log);
bool train_dynamics(const Config& cfg, bool flow_control, bool force, std::ostream& log);
bool train_subgoal(const Config& cfg, bool force, std::ostream& log);
bool adapt_lora(const Config& cfg, bool force, std::ostream& log);

struct FlowEvalOutcome {
    real aee_pred = 0, aee_prev = 0, p_value = 1;
    real aee_pred_restyled = 0, aee_prev_restyled = 0, p_value_restyled = 1;
    int pairs = 0, pairs_restyled = 0;
    bool ordering_ok = false, ordering_ok_restyled = false;
};
FlowEvalOutcome eval_flow(const Config& cfg, std::ostream& log);

struct ImageEvalOutcome {
    eval::ImageEvalResult result;
    bool frechet_ordering_ok = false;      // predicted <= previous < none
    bool correctness_ordering_ok = false;  // predicted >= previous > none
    // LoRA generalization on the restyled validation split.
    real restyled_frechet_base = 0, restyled_frechet_adapted = 0;
    real lora_improvement = 0;  // relative
    bool lora_ok = false;
};
ImageEvalOutcome eval_images(const Config& cfg, std::ostream& log);

struct TaskEvalOutcome {
    eval::TaskEvalResult result;
    real oracle_rate_all = 0;     // all 12 tasks
    real full_text_rate = 0;      // single-room mean
    real full_image_rate = 0;
    real greedy_rate = 0;
    real noflow_rate = 0;
    bool full_beats_greedy = false;
    bool full_beats_noflow = false;
    bool image_ge_text = false;  // reported, not enforced
};
TaskEvalOutcome run_tasks(const Config& cfg, std::ostream& log);

// Assembles summary.md with the ordering pass/fail lines and the figures,
// and verifies that tables regenerate identically from the persisted logs.
void write_report(const Config& cfg, std::ostream& log);

// Loaders with prerequisite errors naming the producing subcommand.
dataset::DatasetManifest require_dataset(const Paths& paths, bool restyled);
flowpred::FlowPredictorModel require_flowpred(const Paths& paths);
dynamics::DenoiserModel require_dynamics(const Paths& paths, bool flow_control);
dynamics::DenoiserModel require_subgoal(const Paths& paths);
eval::FeatureEncoder require_features(const Config& cfg, std::ostream& log);

}  // namespace egohome::cli
