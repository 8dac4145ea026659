#include "egohome/eval/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "egohome/core/io.hpp"
#include <json.hpp>

#include "egohome/nn/image_bridge.hpp"

namespace fs = std::filesystem;

namespace egohome::eval {

std::string ImageEvalResult::csv() const {
    std::string out =
        "model,frechet_mean,frechet_var,correct_rate,correct_var,generated,failures,correct,"
        "incorrect,inconclusive\n";
    for (const auto& r : rows)
        out += strf("%s,%.8g,%.8g,%.8g,%.8g,%d,%d,%d,%d,%d\n", r.name.c_str(), r.frechet.mean,
                    r.frechet.variance, r.correctness.mean, r.correctness.variance, r.generated,
                    r.failures, r.correct, r.incorrect, r.inconclusive);
    return out;
}

const ImageEvalRow& ImageEvalResult::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return r;
    throw std::runtime_error("image eval: no row named " + name);
}

ImageEvalResult run_image_eval(const std::vector<ImageGenerator>& models,
                               const std::vector<dynamics::DynItem>& validation,
                               const FeatureEncoder& encoder, int bootstrap_resamples, uint64_t seed) {
    EGO_CHECK(!validation.empty(), "run_image_eval: empty validation set");
    ImageEvalResult result;

    // Ground-truth features once.
    std::vector<std::vector<real>> gt_feats;
    gt_feats.reserve(validation.size());
    for (const auto& item : validation) gt_feats.push_back(encoder.encode(item.x_next));

    for (const auto& model : models) {
        ImageEvalRow row;
        row.name = model.name;
        std::vector<std::vector<real>> gen_feats;
        std::vector<int> gen_index;         // validation index per generated image
        std::vector<int> conclusive_index;  // indices into verdicts
        std::vector<int> verdicts;          // 1 correct / 0 incorrect, conclusive only

        for (size_t i = 0; i < validation.size(); ++i) {
            const auto& item = validation[i];
            const auto gen = model.generate(item, i);
            if (!gen) {
                ++row.failures;
                continue;
            }
            ++row.generated;
            gen_feats.push_back(encoder.encode(*gen));
            gen_index.push_back(int(i));
            const auto verdict = motion_correctness(nn::image_from_tensor(item.x_t),
                                                    nn::image_from_tensor(*gen), item.gt_flow);
            if (verdict == MotionVerdict::Inconclusive) {
                ++row.inconclusive;
            } else {
                const bool correct = verdict == MotionVerdict::Correct;
                row.correct += correct;
                row.incorrect += !correct;
                verdicts.push_back(correct ? 1 : 0);
                conclusive_index.push_back(int(verdicts.size()) - 1);
            }
        }
        EGO_CHECK(row.generated >= 2, "run_image_eval: model %s generated too few images (%d)",
                  model.name.c_str(), row.generated);

        const uint64_t model_seed = Rng::derive(seed, {std::hash<std::string>{}(model.name)});
        row.frechet = bootstrap(
            int(gen_feats.size()),
            [&](const std::vector<int>& idx) {
                FeatureAccumulator acc_gen(encoder.cfg.feat_dim), acc_gt(encoder.cfg.feat_dim);
                for (int i : idx) {
                    acc_gen.add(gen_feats[size_t(i)]);
                    acc_gt.add(gt_feats[size_t(gen_index[size_t(i)])]);
                }
                return frechet_distance(acc_gen.finalize(), acc_gt.finalize());
            },
            bootstrap_resamples, model_seed);

        if (!verdicts.empty()) {
            row.correctness = bootstrap(
                int(verdicts.size()),
                [&](const std::vector<int>& idx) {
                    real s = 0;
                    for (int i : idx) s += verdicts[size_t(i)];
                    return s / real(idx.size());
                },
                bootstrap_resamples, Rng::derive(model_seed, {0xC0}));
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

namespace {

void wilson(TaskCell& cell) {
    if (cell.episodes == 0) return;
    const real z = 1.96, n = cell.episodes, p = cell.rate();
    const real denom = 1 + z * z / n;
    const real center = (p + z * z / (2 * n)) / denom;
    const real half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
    cell.ci_lo = std::max<real>(0.0, center - half);
    cell.ci_hi = std::min<real>(1.0, center + half);
}

}  // namespace

std::string TaskEvalResult::csv() const {
    std::string out = "method,task,successes,episodes,crashes,rate,ci_lo,ci_hi\n";
    for (const auto& m : methods) {
        const auto& per_task = cells.at(m);
        for (const auto& t : tasks) {
            const TaskCell& c = per_task.at(t.id);
            out += strf("%s,%d,%d,%d,%d,%.6g,%.6g,%.6g\n", m.c_str(), t.id, c.successes, c.episodes,
                        c.crashes, c.rate(), c.ci_lo, c.ci_hi);
        }
    }
    return out;
}

real TaskEvalResult::mean_rate(const std::string& method, bool single_room_only) const {
    real sum = 0;
    int n = 0;
    for (const auto& t : tasks) {
        if (single_room_only && t.two_room) continue;
        sum += cells.at(method).at(t.id).rate();
        ++n;
    }
    EGO_CHECK(n > 0, "mean_rate: no matching tasks");
    return sum / n;
}

TaskEvalResult run_task_eval(const std::vector<TaskPolicy>& methods,
                             const std::vector<planner::TaskDef>& tasks, int episodes_per_task,
                             const std::function<void(const std::string&)>& log_line) {
    TaskEvalResult result;
    result.tasks = tasks;
    for (const auto& method : methods) {
        result.methods.push_back(method.name);
        for (const auto& task : tasks) {
            TaskCell cell;
            for (int ep = 0; ep < episodes_per_task; ++ep) {
                ++cell.episodes;
                try {
                    const auto res = method.run(task, ep);
                    cell.successes += res.success ? 1 : 0;
                    if (log_line) {
                        nlohmann::json j;
                        j["event"] = "episode";
                        j["method"] = method.name;
                        j["task"] = task.id;
                        j["episode"] = ep;
                        j["success"] = res.success;
                        j["steps"] = res.steps_taken;
                        j["actions"] = res.actions;
                        log_line(j.dump());
                    }
                } catch (const std::exception& e) {
                    ++cell.crashes;  // a crash counts as a failure, with a log
                    if (log_line) {
                        nlohmann::json j;
                        j["event"] = "episode_crash";
                        j["method"] = method.name;
                        j["task"] = task.id;
                        j["episode"] = ep;
                        j["error"] = e.what();
                        log_line(j.dump());
                    }
                }
            }
            wilson(cell);
            result.cells[method.name][task.id] = cell;
        }
    }
    return result;
}

std::string run_id(const std::string& config_echo, const std::string& subcommand) {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    mix(subcommand);
    mix("\x1f");
    mix(config_echo);
    return strf("run-%016llx", (unsigned long long)h);
}

Report::Report(std::string directory) : dir(std::move(directory)) {
    for (const char* sub : {"", "/tables", "/plots", "/logs"}) {
        std::error_code ec;
        fs::create_directories(dir + sub, ec);
        EGO_CHECK(!ec, "cannot create report directory %s%s", dir.c_str(), sub);
    }
}

void Report::write_table(const std::string& name, const std::string& csv) const {
    write_text_file(dir + "/tables/" + name + ".csv", csv);
}

void Report::write_plot(const std::string& name, const Image& img) const {
    write_png(dir + "/plots/" + name + ".png", img);
}

void Report::append_log(const std::string& name, const std::string& jsonl) const {
    std::ofstream out(dir + "/logs/" + name + ".jsonl", std::ios::app);
    EGO_CHECK(out.good(), "cannot append to log %s", name.c_str());
    out << jsonl;
    if (!jsonl.empty() && jsonl.back() != '\n') out << '\n';
}

void Report::write_summary(const std::string& markdown) const {
    write_text_file(dir + "/summary.md", markdown);
}

}  // namespace egohome::eval
