#pragma once

#include <functional>

#include "egohome/dynamics/model.hpp"
#include "egohome/eval/metrics.hpp"
#include "egohome/planner/planner.hpp"

namespace egohome::eval {

// --- image-generation comparison (Tables 1/2 analog) ---------------------------

struct ImageGenerator {
    std::string name;
    // Predicted next observation for validation item `idx`; nullopt counts as
    // a generation failure (reported, never silently dropped).
    std::function<std::optional<nn::Tensor>(const dynamics::DynItem&, size_t idx)> generate;
};

struct ImageEvalRow {
    std::string name;
    BootstrapStat frechet;       // vs ground-truth features, over resampled subsets
    BootstrapStat correctness;   // motion-correctness rate over conclusive items
    int generated = 0;
    int failures = 0;
    int correct = 0;
    int incorrect = 0;
    int inconclusive = 0;
};

struct ImageEvalResult {
    std::vector<ImageEvalRow> rows;
    std::string csv() const;
    const ImageEvalRow& row(const std::string& name) const;
};

ImageEvalResult run_image_eval(const std::vector<ImageGenerator>& models,
                               const std::vector<dynamics::DynItem>& validation,
                               const FeatureEncoder& encoder, int bootstrap_resamples, uint64_t seed);

// --- task success comparison (Fig. 6 analog) ------------------------------------

struct TaskPolicy {
    std::string name;
    std::function<planner::EpisodeResult(const planner::TaskDef&, int episode)> run;
};

struct TaskCell {
    int successes = 0;
    int episodes = 0;
    int crashes = 0;
    real rate() const { return episodes ? real(successes) / episodes : 0; }
    real ci_lo = 0, ci_hi = 0;  // Wilson interval
};

struct TaskEvalResult {
    std::vector<std::string> methods;
    std::vector<planner::TaskDef> tasks;
    std::map<std::string, std::map<int, TaskCell>> cells;  // method -> task id -> cell
    std::string csv() const;
    real mean_rate(const std::string& method, bool single_room_only) const;
};

TaskEvalResult run_task_eval(const std::vector<TaskPolicy>& methods,
                             const std::vector<planner::TaskDef>& tasks, int episodes_per_task,
                             const std::function<void(const std::string&)>& log_line);

// --- report assembly ----------------------------------------------------------------

// Deterministic run identifier derived from the config echo and subcommand.
std::string run_id(const std::string& config_echo, const std::string& subcommand);

struct Report {
    std::string dir;  // created on demand; tables/, plots/, logs/ inside
    explicit Report(std::string directory);
    void write_table(const std::string& name, const std::string& csv) const;
    void write_plot(const std::string& name, const Image& img) const;
    void append_log(const std::string& name, const std::string& jsonl) const;
    void write_summary(const std::string& markdown) const;
};

}  // namespace egohome::eval
