#include "egohome/adapt/lora.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <sstream>

#include "egohome/core/io.hpp"

namespace egohome::adapt {

using namespace egohome::nn;

LoraConfig LoraConfig::from_config(const Config& cfg) {
    LoraConfig c;
    c.rank = cfg.get_int("lora.rank", c.rank);
    c.alpha = cfg.get_real("lora.alpha", c.alpha);
    c.steps = cfg.get_int("lora.steps", c.steps);
    c.batch = cfg.get_int("lora.batch", c.batch);
    c.lr = cfg.get_real("lora.lr", c.lr);
    c.seed = uint64_t(cfg.get_i64("seed", int64_t(c.seed)));
    EGO_CONFIG_CHECK(c.rank >= 1, "lora.rank must be >= 1");
    return c;
}

void inject_lora(DenoiserModel& model, const LoraConfig& cfg) {
    EGO_CHECK(model.lora.empty(), "inject_lora: model already has adapters");
    EGO_CHECK(cfg.rank >= 1, "inject_lora: rank must be >= 1");
    std::vector<std::string> targets = cfg.targets;
    if (targets.empty()) targets = DenoiserModel::lora_target_names();
    EGO_CHECK(!targets.empty(), "inject_lora: empty target list");

    Rng rng(Rng::derive(cfg.seed, {0x10AA}));
    const auto& known = DenoiserModel::lora_target_names();
    for (const auto& t : targets) {
        EGO_CHECK(std::find(known.begin(), known.end(), t) != known.end(),
                  "inject_lora: unknown target layer name '%s'", t.c_str());
        const Var W = model.ps.get("base." + t + ".w");
        const int out = W->val.dim(0), in = W->val.dim(1);
        DenoiserModel::LoraEntry e;
        e.A = model.ps.add("lora." + t + ".A", dense_init(rng, cfg.rank, in));
        e.B = model.ps.add("lora." + t + ".B", Tensor::zeros({out, cfg.rank}));
        e.scale = cfg.alpha / real(cfg.rank);
        model.lora[t] = e;
    }
    // Only the adapters train from here on.
    model.ps.set_trainable("base.", false);
    model.ps.set_trainable("emb.", false);
    if (model.has_control) model.ps.set_trainable("ctrl.", false);
    model.base_frozen = true;
}

std::string LoraCurve::to_csv() const {
    std::string out = "step,loss\n";
    for (size_t i = 0; i < step_loss.size(); ++i) out += strf("%zu,%.10g\n", i, step_loss[i]);
    return out;
}

LoraCurve finetune_lora(DenoiserModel& model, const std::vector<DynItem>& few_shot,
                        const LoraConfig& cfg) {
    EGO_CHECK(!model.lora.empty(), "finetune_lora: inject_lora first");
    EGO_CHECK(!few_shot.empty(), "finetune_lora: empty sample set");

    Rng rng(Rng::derive(cfg.seed, {0xF17E}));
    Adam opt;
    opt.lr = cfg.lr;
    LoraCurve curve;
    real baseline = -1;
    int diverged = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        model.ps.zero_grad();
        real batch_loss = 0;
        const int bsz = std::min<int>(cfg.batch, int(few_shot.size()));
        for (int b = 0; b < bsz; ++b) {
            const DynItem& item = few_shot[size_t(rng.uniform_int(int(few_shot.size())))];
            const int k = 1 + rng.uniform_int(model.cfg.K);
            Tensor eps({3, model.cfg.image_size, model.cfg.image_size});
            for (auto& v : eps.data) v = rng.normal();
            Var loss = scale(denoise_loss_item(model, item, k, eps), 1.0 / real(bsz));
            backward(loss);
            batch_loss += loss->val.data[0];
        }
        EGO_CHECK(std::isfinite(batch_loss), "finetune_lora: non-finite loss at step %d", step);
        if (baseline < 0) baseline = batch_loss;
        if (batch_loss > 10.0 * baseline) {
            if (++diverged >= 3)
                throw std::runtime_error(strf("finetune_lora: diverged at step %d", step));
        } else {
            diverged = 0;
        }
        opt.step(model.ps.params());
        curve.step_loss.push_back(batch_loss);
    }
    return curve;
}

namespace {

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor delta_of(const DenoiserModel::LoraEntry& e) {
    const int out = e.B->val.dim(0), r = e.B->val.dim(1), in = e.A->val.dim(1);
    Tensor d({out, in});
    Eigen::Map<const Mat> A(e.A->val.data.data(), r, in);
    Eigen::Map<const Mat> B(e.B->val.data.data(), out, r);
    Eigen::Map<Mat> D(d.data.data(), out, in);
    D.noalias() = e.scale * (B * A);
    return d;
}

}  // namespace

void merge_lora(DenoiserModel& model) {
    EGO_CHECK(!model.lora.empty(), "merge_lora: no adapters");
    EGO_CHECK(!model.lora_merged, "merge_lora: already merged");
    for (auto& [name, e] : model.lora) {
        const Tensor d = delta_of(e);
        Var W = model.ps.get("base." + name + ".w");
        for (size_t i = 0; i < W->val.data.size(); ++i) W->val.data[i] += d.data[i];
    }
    model.lora_merged = true;
}

void unmerge_lora(DenoiserModel& model) {
    EGO_CHECK(model.lora_merged, "unmerge_lora: nothing merged");
    for (auto& [name, e] : model.lora) {
        const Tensor d = delta_of(e);
        Var W = model.ps.get("base." + name + ".w");
        for (size_t i = 0; i < W->val.data.size(); ++i) W->val.data[i] -= d.data[i];
    }
    model.lora_merged = false;
}

void detach_lora(DenoiserModel& model) {
    EGO_CHECK(!model.lora_merged, "detach_lora: unmerge first");
    model.lora.clear();
}

void save_lora(const DenoiserModel& model, const std::string& path) {
    EGO_CHECK(!model.lora.empty(), "save_lora: no adapters");
    ParamStore store;
    std::string echo;
    for (const auto& [name, e] : model.lora) {
        store.add("lora." + name + ".A", e.A->val);
        store.add("lora." + name + ".B", e.B->val);
        echo += "target " + name + " = " + fmt_real(e.scale) + "\n";
    }
    store.save(path, echo);
}

void load_lora(DenoiserModel& model, const std::string& path) {
    std::string echo;
    auto tensors = ParamStore::peek(path, &echo);
    EGO_CHECK(model.lora.empty(), "load_lora: model already has adapters");
    Config meta;
    // echo lines: "target <name> = <scale>"
    std::istringstream lines(echo);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.rfind("target ", 0) != 0) continue;
        const size_t eq = line.find(" = ");
        EGO_CHECK(eq != std::string::npos, "load_lora: bad meta line '%s'", line.c_str());
        const std::string name = line.substr(7, eq - 7);
        const real scale = std::stod(line.substr(eq + 3));
        DenoiserModel::LoraEntry e;
        auto a_it = tensors.find("lora." + name + ".A");
        auto b_it = tensors.find("lora." + name + ".B");
        EGO_CHECK(a_it != tensors.end() && b_it != tensors.end(),
                  "load_lora: checkpoint missing tensors for %s", name.c_str());
        e.A = model.ps.add("lora." + name + ".A", a_it->second);
        e.B = model.ps.add("lora." + name + ".B", b_it->second);
        e.scale = scale;
        model.lora[name] = e;
    }
    EGO_CHECK(!model.lora.empty(), "load_lora: no adapters found in %s", path.c_str());
    model.ps.set_trainable("base.", false);
    model.ps.set_trainable("emb.", false);
    if (model.has_control) model.ps.set_trainable("ctrl.", false);
    model.base_frozen = true;
}

}  // namespace egohome::adapt
