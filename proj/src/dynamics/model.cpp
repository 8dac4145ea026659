#include "egohome/dynamics/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "egohome/core/io.hpp"
#include "egohome/flow/flow.hpp"
#include "egohome/nn/image_bridge.hpp"

namespace egohome::dynamics {

using namespace egohome::nn;

int verb_token(const std::string& text) {
    std::string t = text;
    for (const char* prefix : {"next timestep:", "the goal state:"}) {
        if (t.rfind(prefix, 0) == 0) {
            t = t.substr(std::string(prefix).size());
            while (!t.empty() && t.front() == ' ') t.erase(t.begin());
            break;
        }
    }
    if (t.rfind("walk to", 0) == 0) return kWalkToToken;
    const auto v = dataset::SynonymTable::instance().verb_in_text(t);
    EGO_CHECK(v.has_value(), "unknown verb in action text: '%s'", text.c_str());
    return int(*v);
}

DynamicsConfig DynamicsConfig::from_config(const Config& cfg, const std::string& prefix) {
    DynamicsConfig c;
    c.image_size = cfg.get_int("model.image_size", c.image_size);
    c.base = cfg.get_int(prefix + "base", c.base);
    c.w1 = cfg.get_int(prefix + "w1", c.base + c.base / 2);
    c.w2 = cfg.get_int(prefix + "w2", c.base * 2);
    c.emb = cfg.get_int(prefix + "emb", c.emb);
    c.K = cfg.get_int(prefix + "K", c.K);
    c.schedule_kind = cfg.get_str(prefix + "schedule", "linear") == "cosine" ? ScheduleKind::Cosine
                                                                             : ScheduleKind::Linear;
    c.beta_min = cfg.get_real(prefix + "beta_min", c.beta_min);
    c.beta_max = cfg.get_real(prefix + "beta_max", c.beta_max);
    c.epochs = cfg.get_int(prefix + "epochs", c.epochs);
    c.batch = cfg.get_int(prefix + "batch", c.batch);
    c.lr = cfg.get_real(prefix + "lr", c.lr);
    c.seed = uint64_t(cfg.get_i64("seed", int64_t(c.seed)));
    EGO_CONFIG_CHECK(c.image_size % 4 == 0, "dynamics: image_size must be divisible by 4");
    return c;
}

DenoiserModel::DenoiserModel(const DynamicsConfig& config, uint64_t init_seed) : cfg(config) {
    schedule = make_schedule(cfg.K, cfg.schedule_kind, cfg.beta_min, cfg.beta_max);
    Rng rng(Rng::derive(cfg.seed, {init_seed}));
    const int B = cfg.base, W1 = cfg.w1, W2 = cfg.w2, E = cfg.emb;

    ps.add("emb.table", Tensor::randn(rng, {kVocabSize, E}, 0.5));

    ps.add("base.t1.w", dense_init(rng, E, E));
    ps.add("base.t1.b", Tensor::zeros({E}));
    ps.add("base.t2.w", dense_init(rng, E, E));
    ps.add("base.t2.b", Tensor::zeros({E}));

    auto add_level = [&](const std::string& name, int cin, int cout) {
        ps.add(name + ".w", conv_init(rng, cout, cin, 3));
        ps.add(name + ".b", Tensor::zeros({cout}));
        ps.add(name + "_gn.g", Tensor::full({cout}, 1.0));
        ps.add(name + "_gn.b", Tensor::zeros({cout}));
        ps.add(name + "_cond.w", dense_init(rng, cout, E));
        ps.add(name + "_cond.b", Tensor::zeros({cout}));
    };
    add_level("base.stem", 6, B);
    add_level("base.d1", B, W1);
    add_level("base.d2", W1, W2);

    ps.add("base.attn_gn.g", Tensor::full({W2}, 1.0));
    ps.add("base.attn_gn.b", Tensor::zeros({W2}));
    for (const char* n : {"q", "k", "v"}) ps.add(strf("base.attn.%s.w", n), dense_init(rng, W2, W2));
    ps.add("base.attn.o.w", dense_init(rng, W2, W2));
    ps.add("base.attn.o.b", Tensor::zeros({W2}));
    ps.add("base.mlp_gn.g", Tensor::full({W2}, 1.0));
    ps.add("base.mlp_gn.b", Tensor::zeros({W2}));
    ps.add("base.mlp.fc1.w", dense_init(rng, 2 * W2, W2));
    ps.add("base.mlp.fc1.b", Tensor::zeros({2 * W2}));
    ps.add("base.mlp.fc2.w", dense_init(rng, W2, 2 * W2));
    ps.add("base.mlp.fc2.b", Tensor::zeros({W2}));

    add_level("base.mid", W2, W2);
    add_level("base.u1", W2 + W1, W1);
    add_level("base.u2", W1 + B, B);
    // Small head init keeps the epsilon prediction near zero at start.
    ps.add("base.head.w", Tensor::randn(rng, {3, B, 3, 3}, 0.02));
    ps.add("base.head.b", Tensor::zeros({3}));
}

Var DenoiserModel::encode_cond(int k, int verb_tok) const {
    EGO_CHECK(verb_tok >= 0 && verb_tok < kVocabSize, "verb token %d out of range", verb_tok);
    Var t = constant([&] {
        Tensor e = sinusoidal_embedding(k, cfg.emb);
        e.shape = {1, cfg.emb};
        return e;
    }());
    t = silu(dense_tokens(t, ps.get("base.t1.w"), ps.get("base.t1.b")));
    t = dense_tokens(t, ps.get("base.t2.w"), ps.get("base.t2.b"));
    Var verb = reshape(embed_row(ps.get("emb.table"), verb_tok), {1, cfg.emb});
    return add(t, verb);
}

namespace {

// conv -> group norm -> + conditioning bias -> silu
Var level(const ParamStore& ps, const std::string& name, const Var& x, const Var& cond, int stride = 1) {
    Var h = conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), stride, 1);
    h = group_norm(h, ps.get(name + "_gn.g"), ps.get(name + "_gn.b"), gn_groups(h->val.dim(0)));
    Var bias = dense_tokens(cond, ps.get(name + "_cond.w"), ps.get(name + "_cond.b"));
    h = add_channel_bias(h, reshape(bias, {h->val.dim(0)}));
    return silu(h);
}

}  // namespace

Var DenoiserModel::forward(const Var& noisy, const Var& x_t, int k, int verb_tok,
                           const Var& flow_color) const {
    EGO_CHECK(noisy->val.dim(1) == cfg.image_size && x_t->val.dim(1) == cfg.image_size,
              "forward: inputs are %dx%d, model expects %d", noisy->val.dim(1), noisy->val.dim(2),
              cfg.image_size);
    EGO_CHECK(!has_control || flow_color, "forward: control branch attached but no flow hint given");
    EGO_CHECK(has_control || !flow_color, "forward: flow hint given but no control branch attached");

    const Var cond = encode_cond(k, verb_tok);
    const Var x_in = concat_channels(noisy, x_t);

    Var h0 = level(ps, "base.stem", x_in, cond);
    Var h1 = level(ps, "base.d1", avg_pool2(h0), cond);
    Var h2 = level(ps, "base.d2", avg_pool2(h1), cond);

    if (has_control) {
        Var hint = conv2d(flow_color, ps.get("ctrl.hint.w"), ps.get("ctrl.hint.b"), 1, 1);
        Var c0 = conv2d(x_in, ps.get("ctrl.stem.w"), ps.get("ctrl.stem.b"), 1, 1);
        c0 = add(c0, hint);
        c0 = group_norm(c0, ps.get("ctrl.stem_gn.g"), ps.get("ctrl.stem_gn.b"), gn_groups(cfg.base));
        Var cbias = dense_tokens(cond, ps.get("ctrl.stem_cond.w"), ps.get("ctrl.stem_cond.b"));
        c0 = silu(add_channel_bias(c0, reshape(cbias, {cfg.base})));
        Var c1 = level(ps, "ctrl.d1", avg_pool2(c0), cond);
        Var c2 = level(ps, "ctrl.d2", avg_pool2(c1), cond);
        // Zero convolutions inject into the skips and the bottleneck input.
        h0 = add(h0, conv2d(c0, ps.get("ctrl.z0.w"), ps.get("ctrl.z0.b"), 1, 0));
        h1 = add(h1, conv2d(c1, ps.get("ctrl.z1.w"), ps.get("ctrl.z1.b"), 1, 0));
        h2 = add(h2, conv2d(c2, ps.get("ctrl.z2.w"), ps.get("ctrl.z2.b"), 1, 0));
    }

    // Bottleneck: self-attention and a channel MLP with residuals.
    const int side = cfg.image_size / 4;
    {
        Var t = group_norm(h2, ps.get("base.attn_gn.g"), ps.get("base.attn_gn.b"), gn_groups(cfg.w2));
        Var tok = grid_to_tokens(t);
        Var q = apply_dense("attn.q", tok, nullptr);
        Var kk = apply_dense("attn.k", tok, nullptr);
        Var v = apply_dense("attn.v", tok, nullptr);
        Var att = softmax_rows(scale(matmul_nt(q, kk), 1.0 / std::sqrt(real(cfg.w2))));
        Var o = apply_dense("attn.o", matmul(att, v), ps.get("base.attn.o.b"));
        h2 = add(h2, tokens_to_grid(o, side, side));

        Var m = group_norm(h2, ps.get("base.mlp_gn.g"), ps.get("base.mlp_gn.b"), gn_groups(cfg.w2));
        Var mtok = grid_to_tokens(m);
        mtok = silu(apply_dense("mlp.fc1", mtok, ps.get("base.mlp.fc1.b")));
        mtok = apply_dense("mlp.fc2", mtok, ps.get("base.mlp.fc2.b"));
        h2 = add(h2, tokens_to_grid(mtok, side, side));
    }
    h2 = level(ps, "base.mid", h2, cond);

    Var u1 = level(ps, "base.u1", concat_channels(upsample2(h2), h1), cond);
    Var u2 = level(ps, "base.u2", concat_channels(upsample2(u1), h0), cond);
    return conv2d(u2, ps.get("base.head.w"), ps.get("base.head.b"), 1, 1);
}

const std::vector<std::string>& DenoiserModel::lora_target_names() {
    static const std::vector<std::string> names = {"attn.q", "attn.k", "attn.v",
                                                   "attn.o", "mlp.fc1", "mlp.fc2"};
    return names;
}

Var DenoiserModel::apply_dense(const std::string& key, const Var& x, const Var& b) const {
    Var y = dense_tokens(x, ps.get("base." + key + ".w"), b);
    const auto it = lora.find(key);
    if (it != lora.end() && !lora_merged) {
        Var low = dense_tokens(dense_tokens(x, it->second.A, nullptr), it->second.B, nullptr);
        y = add(y, scale(low, it->second.scale));
    }
    return y;
}

void DenoiserModel::attach_control_branch() {
    EGO_CHECK(!has_control, "attach_control_branch: model already has a branch");
    Rng rng(Rng::derive(cfg.seed, {0xC7A1}));
    const int B = cfg.base, W1 = cfg.w1, W2 = cfg.w2, E = cfg.emb;

    ps.add("ctrl.hint.w", conv_init(rng, B, 3, 3));
    ps.add("ctrl.hint.b", Tensor::zeros({B}));
    auto clone = [&](const std::string& from, const std::string& to) {
        ps.add(to, ps.get(from)->val);
    };
    clone("base.stem.w", "ctrl.stem.w");
    clone("base.stem.b", "ctrl.stem.b");
    clone("base.stem_gn.g", "ctrl.stem_gn.g");
    clone("base.stem_gn.b", "ctrl.stem_gn.b");
    clone("base.stem_cond.w", "ctrl.stem_cond.w");
    clone("base.stem_cond.b", "ctrl.stem_cond.b");
    for (const char* lvl : {"d1", "d2"}) {
        for (const char* part : {".w", ".b", "_gn.g", "_gn.b", "_cond.w", "_cond.b"})
            clone(strf("base.%s%s", lvl, part), strf("ctrl.%s%s", lvl, part));
    }
    ps.add("ctrl.z0.w", Tensor::zeros({B, B, 1, 1}));
    ps.add("ctrl.z0.b", Tensor::zeros({B}));
    ps.add("ctrl.z1.w", Tensor::zeros({W1, W1, 1, 1}));
    ps.add("ctrl.z1.b", Tensor::zeros({W1}));
    ps.add("ctrl.z2.w", Tensor::zeros({W2, W2, 1, 1}));
    ps.add("ctrl.z2.b", Tensor::zeros({W2}));
    (void)E;

    ps.set_trainable("base.", false);
    has_control = true;
    base_frozen = true;
}

void DenoiserModel::save(const std::string& path, const std::string& config_echo) const {
    std::string echo = config_echo;
    echo += strf("dyn.image_size = %d\n", cfg.image_size);
    echo += strf("dyn.base = %d\ndyn.w1 = %d\ndyn.w2 = %d\ndyn.emb = %d\n", cfg.base, cfg.w1, cfg.w2,
                 cfg.emb);
    echo += strf("dyn.K = %d\n", cfg.K);
    echo += strf("dyn.schedule = %s\n", cfg.schedule_kind == ScheduleKind::Cosine ? "cosine" : "linear");
    echo += "dyn.beta_min = " + fmt_real(cfg.beta_min) + "\n";
    echo += "dyn.beta_max = " + fmt_real(cfg.beta_max) + "\n";
    echo += strf("dyn.has_control = %d\n", has_control ? 1 : 0);
    ps.save(path, echo);
}

DenoiserModel DenoiserModel::load(const std::string& path) {
    std::string echo;
    ParamStore::peek(path, &echo);
    Config meta = Config::from_string(echo);
    DynamicsConfig cfg;
    cfg.image_size = meta.get_int("dyn.image_size");
    cfg.base = meta.get_int("dyn.base");
    cfg.w1 = meta.get_int("dyn.w1");
    cfg.w2 = meta.get_int("dyn.w2");
    cfg.emb = meta.get_int("dyn.emb");
    cfg.K = meta.get_int("dyn.K");
    cfg.schedule_kind =
        meta.get_str("dyn.schedule") == "cosine" ? ScheduleKind::Cosine : ScheduleKind::Linear;
    cfg.beta_min = meta.get_real("dyn.beta_min");
    cfg.beta_max = meta.get_real("dyn.beta_max");
    DenoiserModel model(cfg);
    if (meta.get_int("dyn.has_control") != 0) model.attach_control_branch();
    model.ps.load(path);
    return model;
}

Var denoise_loss_item(const DenoiserModel& model, const DynItem& item, int k, const Tensor& eps) {
    auto to_signed = [](const Tensor& t) {
        Tensor out = t;
        for (auto& v : out.data) v = 2 * v - 1;
        return out;
    };
    const Tensor noisy = forward_diffuse(to_signed(item.x_next), k, eps, model.schedule);
    Var flow_hint = model.has_control ? constant(item.flow_color) : nullptr;
    Var pred = model.forward(constant(noisy), constant(to_signed(item.x_t)), k, item.verb_tok, flow_hint);
    return mse(pred, constant(eps));
}

real denoise_loss(const DenoiserModel& model, const std::vector<DynItem>& batch, Rng& rng,
                  int batch_id) {
    EGO_CHECK(!batch.empty(), "denoise_loss: empty batch");
    real total = 0;
    for (const auto& item : batch) {
        const int k = 1 + rng.uniform_int(model.cfg.K);
        Tensor eps({3, model.cfg.image_size, model.cfg.image_size});
        for (auto& v : eps.data) v = rng.normal();
        total += denoise_loss_item(model, item, k, eps)->val.data[0];
    }
    const real loss = total / real(batch.size());
    EGO_CHECK(std::isfinite(loss), "denoise_loss: non-finite loss in batch %d", batch_id);
    return loss;
}

std::string DynTrainResult::to_csv() const {
    std::string out = "epoch,loss\n";
    for (size_t i = 0; i < epoch_loss.size(); ++i) out += strf("%zu,%.10g\n", i, epoch_loss[i]);
    return out;
}

DynTrainResult train_dynamics(DenoiserModel& model, const std::vector<DynItem>& items, bool flow_mode) {
    EGO_CHECK(!items.empty(), "train_dynamics: empty dataset");
    EGO_CHECK(flow_mode == model.has_control,
              "train_dynamics: flow_mode requires the control branch (and vice versa)");

    Rng rng(Rng::derive(model.cfg.seed, {flow_mode ? 0xF10Du : 0xBA5Eu}));
    Adam opt;
    opt.lr = model.cfg.lr;
    DynTrainResult res;
    std::vector<size_t> order(items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int diverged_epochs = 0;
    real baseline = -1;
    for (int epoch = 0; epoch < model.cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.uniform_int(int(i)))]);
        real epoch_sum = 0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += size_t(model.cfg.batch)) {
            const size_t end = std::min(order.size(), start + size_t(model.cfg.batch));
            model.ps.zero_grad();
            real batch_loss = 0;
            for (size_t bi = start; bi < end; ++bi) {
                const DynItem& item = items[order[bi]];
                const int k = 1 + rng.uniform_int(model.cfg.K);
                Tensor eps({3, model.cfg.image_size, model.cfg.image_size});
                for (auto& v : eps.data) v = rng.normal();
                Var loss = scale(denoise_loss_item(model, item, k, eps), 1.0 / real(end - start));
                backward(loss);
                batch_loss += loss->val.data[0];
            }
            EGO_CHECK(std::isfinite(batch_loss), "train_dynamics: non-finite loss in epoch %d batch %zu",
                      epoch, batches);
            if (baseline < 0) baseline = batch_loss;
            opt.step(model.ps.params());
            epoch_sum += batch_loss;
            ++batches;
        }
        res.epoch_loss.push_back(epoch_sum / real(std::max<size_t>(1, batches)));
        if (res.epoch_loss.back() > 10.0 * baseline) {
            if (++diverged_epochs >= 3)
                throw std::runtime_error(strf("train_dynamics: diverged at epoch %d (loss %.4g vs %.4g)",
                                              epoch, res.epoch_loss.back(), res.epoch_loss.front()));
        } else {
            diverged_epochs = 0;
        }
    }
    return res;
}

nn::Tensor sample_next_obs_tok(const DenoiserModel& model, const Tensor& x_t, int verb_tok,
                               const std::optional<Tensor>& flow_color, int steps, uint64_t seed) {
    EGO_CHECK(steps >= 1 && steps <= model.cfg.K, "sample: steps must be in [1,K]");
    Rng rng(Rng::derive(seed, {0x5A3D1E}));
    const int S = model.cfg.image_size;
    Tensor x({3, S, S});
    for (auto& v : x.data) v = rng.normal();

    Tensor x_cond = x_t;
    for (auto& v : x_cond.data) v = 2 * v - 1;
    Var x_cond_v = constant(x_cond);
    Var flow_v = flow_color ? constant(*flow_color) : nullptr;

    std::vector<int> ks(static_cast<size_t>(steps), 0);
    for (int i = 0; i < steps; ++i)
        ks[size_t(i)] = steps == 1 ? model.cfg.K
                                   : int(std::lround(model.cfg.K - real(i) * (model.cfg.K - 1) / (steps - 1)));

    Tensor x0;
    for (int i = 0; i < steps; ++i) {
        const int k = ks[size_t(i)];
        Var eps_hat = model.forward(constant(x), x_cond_v, k, verb_tok, flow_v);
        const real ab = model.schedule.alpha_bar_at(k);
        const real sa = std::sqrt(ab), sb = std::sqrt(1 - ab);
        x0 = x;
        for (size_t j = 0; j < x0.data.size(); ++j) {
            x0.data[j] = (x.data[j] - sb * eps_hat->val.data[j]) / sa;
            x0.data[j] = std::clamp<real>(x0.data[j], -1.0, 1.0);
        }
        if (i + 1 < steps) {
            const real ab_next = model.schedule.alpha_bar_at(ks[size_t(i + 1)]);
            const real sa2 = std::sqrt(ab_next), sb2 = std::sqrt(1 - ab_next);
            for (size_t j = 0; j < x.data.size(); ++j)
                x.data[j] = sa2 * x0.data[j] + sb2 * eps_hat->val.data[j];
        }
    }
    for (auto& v : x0.data) v = std::clamp<real>((v + 1) / 2, 0.0, 1.0);
    return x0;
}

nn::Tensor sample_next_obs(const DenoiserModel& model, const Tensor& x_t, const std::string& action_text,
                           const std::optional<Tensor>& flow_color, int steps, uint64_t seed) {
    return sample_next_obs_tok(model, x_t, verb_token(action_text), flow_color, steps, seed);
}

namespace {

Tensor downscaled_image_tensor(const Image& img, int model_size) {
    const int factor = img.h / model_size;
    EGO_CHECK(factor * model_size == img.h, "image size %d not divisible to model size %d", img.h,
              model_size);
    return tensor_from_image(downscale(img, factor));
}

}  // namespace

std::vector<DynItem> load_dyn_items(const dataset::DatasetManifest& manifest, const std::string& split,
                                    int model_size, real max_mag, bool skill_trajs_only) {
    std::vector<DynItem> out;
    for (const auto& traj : manifest.trajectories(split)) {
        const auto addr = dataset::parse_trajectory_path(traj);
        const bool is_skill = microhome::verb_from_name(addr.action).has_value();
        if (skill_trajs_only && !is_skill) continue;
        const auto dirs = dataset::trajectory_sample_dirs(manifest.root, traj);
        std::optional<Tensor> prev_color;
        for (const auto& dir : dirs) {
            const auto s = dataset::load_sample(dir);
            DynItem item;
            item.x_t = downscaled_image_tensor(s.x_t.rgb, model_size);
            item.x_next = downscaled_image_tensor(s.x_next.rgb, model_size);
            item.verb_tok = verb_token(s.action_text);
            item.action_text = s.action_text;
            const int factor = s.flow.h / model_size;
            item.gt_flow = flow::downscale(s.flow, factor);
            item.flow_color = tensor_from_image(flow::flow_to_color(item.gt_flow, max_mag));
            item.prev_flow_color = prev_color;
            prev_color = item.flow_color;
            out.push_back(std::move(item));
        }
    }
    return out;
}

std::vector<DynItem> load_subgoal_items(const dataset::DatasetManifest& manifest,
                                        const std::string& split, int model_size) {
    std::vector<DynItem> out;
    for (const auto& traj : manifest.trajectories(split)) {
        const auto dirs = dataset::trajectory_sample_dirs(manifest.root, traj);
        if (dirs.empty()) continue;
        const auto first = dataset::load_sample(dirs.front());
        const auto last = dataset::load_sample(dirs.back());
        const auto prompt = nlohmann::json::parse(
            read_text_file((std::filesystem::path(dirs.front()) / "prompt.json").string()));
        DynItem item;
        item.x_t = downscaled_image_tensor(first.x_t.rgb, model_size);
        item.x_next = downscaled_image_tensor(last.x_next.rgb, model_size);
        item.action_text = prompt.at("goal").get<std::string>();
        item.verb_tok = verb_token(item.action_text);
        out.push_back(std::move(item));
    }
    return out;
}

}  // namespace egohome::dynamics
