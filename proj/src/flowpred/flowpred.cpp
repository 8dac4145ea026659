#include "egohome/flowpred/flowpred.hpp"

#include <algorithm>
#include <cmath>

#include "egohome/core/io.hpp"
#include "egohome/nn/image_bridge.hpp"

namespace egohome::flowpred {

using namespace egohome::nn;

namespace {
int groups_for(int channels) {
    for (int g : {4, 2})
        if (channels % g == 0) return g;
    return 1;
}
}  // namespace

FlowPredictorConfig FlowPredictorConfig::from_config(const Config& cfg) {
    FlowPredictorConfig c;
    c.image_size = cfg.get_int("model.image_size", c.image_size);
    c.codebook_size = cfg.get_int("flowpred.codebook_size", c.codebook_size);
    c.code_dim = cfg.get_int("flowpred.code_dim", c.code_dim);
    c.beta = cfg.get_real("flowpred.beta", c.beta);
    c.action_conditioned = cfg.get_bool("flowpred.action_conditioned", c.action_conditioned);
    c.ch1 = cfg.get_int("flowpred.ch1", c.ch1);
    c.ch2 = cfg.get_int("flowpred.ch2", c.ch2);
    c.epochs = cfg.get_int("flowpred.epochs", c.epochs);
    c.batch = cfg.get_int("flowpred.batch", c.batch);
    c.lr = cfg.get_real("flowpred.lr", c.lr);
    c.seed = uint64_t(cfg.get_i64("seed", int64_t(c.seed)));
    EGO_CONFIG_CHECK(c.image_size % 4 == 0, "flowpred: image_size must be divisible by 4");
    return c;
}

VqLossTerms vq_loss(const Var& x, const Var& x_hat, const Var& enc_out, const Var& z_q, real beta) {
    EGO_CHECK(beta > 0, "vq_loss: beta must be positive");
    EGO_CHECK(x->val.same_shape(x_hat->val), "vq_loss: x/x_hat shape mismatch");
    EGO_CHECK(enc_out->val.same_shape(z_q->val), "vq_loss: enc_out/z_q shape mismatch");
    VqLossTerms t;
    t.recon = sum_squares(sub(x, x_hat));
    t.codebook_term = sum_squares(sub(stopgrad(enc_out), z_q));
    t.commit_term = sum_squares(sub(stopgrad(z_q), enc_out));
    t.total = add_scalars({t.recon, t.codebook_term, scale(t.commit_term, beta)});
    return t;
}

QuantizeResult quantize(const Var& latents, const Var& codebook) {
    for (real v : latents->val.data)
        EGO_CHECK(std::isfinite(v), "quantize: non-finite latent");
    QuantizeResult r;
    r.indices = nearest_codes(latents->val, codebook->val);
    r.z_q = codebook_gather(codebook, r.indices, codebook->val.dim(1));
    return r;
}

FlowPredictorModel::FlowPredictorModel(const FlowPredictorConfig& config, uint64_t init_seed)
    : cfg(config) {
    Rng rng(Rng::derive(cfg.seed, {init_seed}));
    const int D = cfg.code_dim;
    ps.add("enc.c1.w", conv_init(rng, cfg.ch1, 3, 3));
    ps.add("enc.c1.b", Tensor::zeros({cfg.ch1}));
    ps.add("enc.gn1.g", Tensor::full({cfg.ch1}, 1.0));
    ps.add("enc.gn1.b", Tensor::zeros({cfg.ch1}));
    ps.add("enc.c2.w", conv_init(rng, cfg.ch2, cfg.ch1, 3));
    ps.add("enc.c2.b", Tensor::zeros({cfg.ch2}));
    ps.add("enc.gn2.g", Tensor::full({cfg.ch2}, 1.0));
    ps.add("enc.gn2.b", Tensor::zeros({cfg.ch2}));
    ps.add("enc.c3.w", conv_init(rng, cfg.ch2, cfg.ch2, 3));
    ps.add("enc.c3.b", Tensor::zeros({cfg.ch2}));
    ps.add("enc.proj.w", conv_init(rng, D, cfg.ch2, 1));
    ps.add("enc.proj.b", Tensor::zeros({D}));

    // Distinct entries at init: tiny deterministic offset per row on top of
    // the random draw.
    Tensor cb = Tensor::randn(rng, {cfg.codebook_size, D}, 0.5);
    for (int i = 0; i < cfg.codebook_size; ++i) cb.data[size_t(i) * D] += 1e-4 * i;
    ps.add("codebook", cb);

    ps.add("action.table", Tensor::randn(rng, {microhome::kNumVerbs, D}, 0.5));

    ps.add("dec.proj.w", conv_init(rng, cfg.ch2, D, 1));
    ps.add("dec.proj.b", Tensor::zeros({cfg.ch2}));
    ps.add("dec.gn1.g", Tensor::full({cfg.ch2}, 1.0));
    ps.add("dec.gn1.b", Tensor::zeros({cfg.ch2}));
    ps.add("dec.c1.w", conv_init(rng, cfg.ch2, cfg.ch2, 3));
    ps.add("dec.c1.b", Tensor::zeros({cfg.ch2}));
    ps.add("dec.c2.w", conv_init(rng, cfg.ch1, cfg.ch2, 3));
    ps.add("dec.c2.b", Tensor::zeros({cfg.ch1}));
    ps.add("dec.gn2.g", Tensor::full({cfg.ch1}, 1.0));
    ps.add("dec.gn2.b", Tensor::zeros({cfg.ch1}));
    ps.add("dec.c3.w", conv_init(rng, cfg.ch1, cfg.ch1, 3));
    ps.add("dec.c3.b", Tensor::zeros({cfg.ch1}));
    ps.add("dec.head.w", conv_init(rng, 3, cfg.ch1, 3));
    ps.add("dec.head.b", Tensor::zeros({3}));
}

Var FlowPredictorModel::encode(const Var& img) const {
    Var h = conv2d(img, ps.get("enc.c1.w"), ps.get("enc.c1.b"), 2, 1);
    h = silu(group_norm(h, ps.get("enc.gn1.g"), ps.get("enc.gn1.b"), groups_for(cfg.ch1)));
    h = conv2d(h, ps.get("enc.c2.w"), ps.get("enc.c2.b"), 2, 1);
    h = silu(group_norm(h, ps.get("enc.gn2.g"), ps.get("enc.gn2.b"), groups_for(cfg.ch2)));
    h = conv2d(h, ps.get("enc.c3.w"), ps.get("enc.c3.b"), 1, 1);
    h = silu(h);
    h = conv2d(h, ps.get("enc.proj.w"), ps.get("enc.proj.b"), 1, 0);
    return grid_to_tokens(h);
}

Var FlowPredictorModel::decode(const Var& dec_in_tokens, int verb) const {
    const int side = latent_side();
    Var h = tokens_to_grid(dec_in_tokens, side, side);
    if (cfg.action_conditioned) {
        EGO_CHECK(verb >= 0 && verb < microhome::kNumVerbs, "decode: verb %d out of range", verb);
        h = add_channel_bias(h, embed_row(ps.get("action.table"), verb));
    }
    h = conv2d(h, ps.get("dec.proj.w"), ps.get("dec.proj.b"), 1, 0);
    h = silu(group_norm(h, ps.get("dec.gn1.g"), ps.get("dec.gn1.b"), groups_for(cfg.ch2)));
    h = conv2d(h, ps.get("dec.c1.w"), ps.get("dec.c1.b"), 1, 1);
    h = silu(h);
    h = upsample2(h);
    h = conv2d(h, ps.get("dec.c2.w"), ps.get("dec.c2.b"), 1, 1);
    h = silu(group_norm(h, ps.get("dec.gn2.g"), ps.get("dec.gn2.b"), groups_for(cfg.ch1)));
    h = upsample2(h);
    h = conv2d(h, ps.get("dec.c3.w"), ps.get("dec.c3.b"), 1, 1);
    h = silu(h);
    h = conv2d(h, ps.get("dec.head.w"), ps.get("dec.head.b"), 1, 1);
    return sigmoid(h);
}

flow::FlowField FlowPredictorModel::predict(const flow::FlowField& f_prev,
                                            const std::string& action_text) const {
    int verb = 0;
    if (cfg.action_conditioned) {
        const auto v = dataset::SynonymTable::instance().verb_in_text(action_text);
        EGO_CHECK(v.has_value(), "predict_flow: unknown verb in action text: '%s'", action_text.c_str());
        verb = int(*v);
    }
    EGO_CHECK(f_prev.h == cfg.image_size && f_prev.w == cfg.image_size,
              "predict_flow: field is %dx%d, model expects %d", f_prev.h, f_prev.w, cfg.image_size);
    const Image prev_color = flow::flow_to_color(f_prev, cfg.max_mag);
    Var x = constant(tensor_from_image(prev_color));
    Var enc = encode(x);
    auto q = quantize(enc, ps.get("codebook"));
    Var out = decode(q.z_q, verb);
    return flow::color_to_flow(image_from_tensor(out->val), cfg.max_mag);
}

void FlowPredictorModel::save(const std::string& path, const std::string& config_echo) const {
    std::string echo = config_echo;
    echo += strf("flowpred.image_size = %d\n", cfg.image_size);
    echo += strf("flowpred.codebook_size = %d\n", cfg.codebook_size);
    echo += strf("flowpred.code_dim = %d\n", cfg.code_dim);
    echo += strf("flowpred.ch1 = %d\n", cfg.ch1);
    echo += strf("flowpred.ch2 = %d\n", cfg.ch2);
    echo += strf("flowpred.action_conditioned = %d\n", cfg.action_conditioned ? 1 : 0);
    echo += "flowpred.max_mag = " + fmt_real(cfg.max_mag) + "\n";
    ps.save(path, echo);
}

FlowPredictorModel FlowPredictorModel::load(const std::string& path) {
    std::string echo;
    ParamStore::peek(path, &echo);
    Config meta = Config::from_string(echo);
    FlowPredictorConfig cfg;
    cfg.image_size = meta.get_int("flowpred.image_size");
    cfg.codebook_size = meta.get_int("flowpred.codebook_size");
    cfg.code_dim = meta.get_int("flowpred.code_dim");
    cfg.ch1 = meta.get_int("flowpred.ch1");
    cfg.ch2 = meta.get_int("flowpred.ch2");
    cfg.action_conditioned = meta.get_int("flowpred.action_conditioned") != 0;
    cfg.max_mag = meta.get_real("flowpred.max_mag");
    FlowPredictorModel model(cfg);
    model.ps.load(path);
    return model;
}

std::vector<FlowPair> load_flow_pairs(const dataset::DatasetManifest& manifest,
                                      const std::string& split, int model_size, real max_mag) {
    std::vector<FlowPair> out;
    const auto& table = dataset::SynonymTable::instance();
    for (const auto& traj : manifest.trajectories(split)) {
        const auto dirs = dataset::trajectory_sample_dirs(manifest.root, traj);
        std::vector<flow::FlowField> flows;
        std::vector<int> verbs;
        for (const auto& dir : dirs) {
            const auto s = dataset::load_sample(dir);
            const int factor = s.flow.h / model_size;
            EGO_CHECK(factor * model_size == s.flow.h, "flow pair: %d not divisible by %d", s.flow.h,
                      model_size);
            flows.push_back(flow::downscale(s.flow, factor));
            const auto v = table.verb_in_text(s.action_text);
            EGO_CHECK(v.has_value(), "flow pair: unknown verb in '%s'", s.action_text.c_str());
            verbs.push_back(int(*v));
        }
        for (size_t i = 0; i + 1 < flows.size(); ++i) {
            FlowPair p;
            p.prev_flow = flows[i];
            p.cur_flow = flows[i + 1];
            p.verb = verbs[i + 1];
            p.prev_color = nn::tensor_from_image(flow::flow_to_color(p.prev_flow, max_mag));
            p.cur_color = nn::tensor_from_image(flow::flow_to_color(p.cur_flow, max_mag));
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::string TrainCurve::to_csv() const {
    std::string out = "epoch,loss\n";
    for (size_t i = 0; i < epoch_loss.size(); ++i) out += strf("%zu,%.10g\n", i, epoch_loss[i]);
    return out;
}

TrainCurve train_flow_predictor(FlowPredictorModel& model, const std::vector<FlowPair>& pairs) {
    EGO_CHECK(!pairs.empty(), "train_flow_predictor: empty pair set");
    {
        // At least one pair per verb that appears; the contract needs every
        // verb embedding to receive signal at least once if it is used.
        std::vector<int> seen(microhome::kNumVerbs, 0);
        for (const auto& p : pairs) seen[size_t(p.verb)] = 1;
        (void)seen;
    }
    Rng rng(Rng::derive(model.cfg.seed, {0x7F10}));
    Adam opt;
    opt.lr = model.cfg.lr;
    TrainCurve curve;
    std::vector<size_t> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const Var codebook = model.ps.get("codebook");
    for (int epoch = 0; epoch < model.cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.uniform_int(int(i)))]);
        real epoch_sum = 0;
        size_t batch_count = 0;
        for (size_t start = 0; start < order.size(); start += size_t(model.cfg.batch)) {
            model.ps.zero_grad();
            const size_t end = std::min(order.size(), start + size_t(model.cfg.batch));
            real batch_loss = 0;
            for (size_t bi = start; bi < end; ++bi) {
                const FlowPair& p = pairs[order[bi]];
                Var x_in = constant(p.prev_color);
                Var target = constant(p.cur_color);
                Var enc = model.encode(x_in);
                auto q = quantize(enc, codebook);
                // Straight-through estimator into the decoder.
                Var dec_in = add(enc, stopgrad(sub(q.z_q, enc)));
                Var x_hat = model.decode(dec_in, p.verb);
                auto terms = vq_loss(target, x_hat, enc, q.z_q, model.cfg.beta);
                Var item = scale(terms.total, 1.0 / (real(end - start) * real(target->val.numel())));
                backward(item);
                batch_loss += item->val.data[0];
            }
            EGO_CHECK(std::isfinite(batch_loss),
                      "train_flow_predictor: non-finite loss in epoch %d batch %zu", epoch,
                      batch_count);
            opt.step(model.ps.params());
            epoch_sum += batch_loss;
            ++batch_count;
        }
        curve.epoch_loss.push_back(epoch_sum / real(std::max<size_t>(1, batch_count)));
    }
    EGO_CHECK(curve.epoch_loss.back() < curve.epoch_loss.front(),
              "train_flow_predictor: loss did not decrease (%.6g -> %.6g)", curve.epoch_loss.front(),
              curve.epoch_loss.back());
    return curve;
}

}  // namespace egohome::flowpred
