#include "egohome/eval/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "egohome/core/io.hpp"
#include "egohome/nn/image_bridge.hpp"

namespace egohome::eval {

using namespace egohome::nn;

FeatureAccumulator::FeatureAccumulator(int dim)
    : dim_(dim), sum_(size_t(dim), 0.0), sum_outer_(size_t(dim) * dim, 0.0) {}

void FeatureAccumulator::add(const std::vector<real>& feat) {
    EGO_CHECK(int(feat.size()) == dim_, "FeatureAccumulator: dim mismatch");
    ++count_;
    for (int i = 0; i < dim_; ++i) {
        sum_[size_t(i)] += feat[size_t(i)];
        for (int j = 0; j < dim_; ++j) sum_outer_[size_t(i) * dim_ + j] += feat[size_t(i)] * feat[size_t(j)];
    }
}

FeatureStats FeatureAccumulator::finalize() const {
    EGO_CHECK(count_ >= 2, "feature stats need at least 2 images, got %d", count_);
    FeatureStats s;
    s.count = count_;
    s.mean.resize(size_t(dim_));
    s.cov.resize(size_t(dim_) * dim_);
    const real n = real(count_);
    for (int i = 0; i < dim_; ++i) s.mean[size_t(i)] = sum_[size_t(i)] / n;
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j)
            s.cov[size_t(i) * dim_ + j] =
                (sum_outer_[size_t(i) * dim_ + j] - n * s.mean[size_t(i)] * s.mean[size_t(j)]) / (n - 1);
    return s;
}

real frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    EGO_CHECK(a.dim() == b.dim() && a.dim() > 0, "frechet_distance: dimension mismatch (%d vs %d)",
              a.dim(), b.dim());
    const int D = a.dim();
    using Mat = Eigen::MatrixXd;
    Eigen::Map<const Mat> Sa(a.cov.data(), D, D);
    Eigen::Map<const Mat> Sb(b.cov.data(), D, D);

    auto checked_clip = [&](Eigen::VectorXd evals, const char* what) {
        for (int i = 0; i < evals.size(); ++i) {
            EGO_CHECK(evals[i] >= -1e-8, "frechet_distance: %s not PSD (eigenvalue %g)", what, evals[i]);
            evals[i] = std::max(0.0, evals[i]);
        }
        return evals;
    };

    Eigen::SelfAdjointEigenSolver<Mat> ea(0.5 * (Sa + Sa.transpose()));
    const Eigen::VectorXd da = checked_clip(ea.eigenvalues(), "covariance A");
    const Mat sqrt_a = ea.eigenvectors() * da.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();

    {
        Eigen::SelfAdjointEigenSolver<Mat> eb(0.5 * (Sb + Sb.transpose()));
        checked_clip(eb.eigenvalues(), "covariance B");
    }

    Mat inner = sqrt_a * Sb * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> ei(inner);
    Eigen::VectorXd di = ei.eigenvalues();
    real tr_sqrt = 0;
    for (int i = 0; i < di.size(); ++i) tr_sqrt += std::sqrt(std::max(0.0, di[i]));

    real mean_term = 0;
    for (int i = 0; i < D; ++i) {
        const real d = a.mean[size_t(i)] - b.mean[size_t(i)];
        mean_term += d * d;
    }
    return mean_term + Sa.trace() + Sb.trace() - 2.0 * tr_sqrt;
}

FeatureEncoderConfig FeatureEncoderConfig::from_config(const Config& cfg) {
    FeatureEncoderConfig c;
    c.image_size = cfg.get_int("model.image_size", c.image_size);
    c.feat_dim = cfg.get_int("feat.dim", c.feat_dim);
    c.ch = cfg.get_int("feat.ch", c.ch);
    c.epochs = cfg.get_int("feat.epochs", c.epochs);
    c.batch = cfg.get_int("feat.batch", c.batch);
    c.lr = cfg.get_real("feat.lr", c.lr);
    c.seed = uint64_t(cfg.get_i64("seed", int64_t(c.seed)));
    EGO_CONFIG_CHECK(c.image_size % 8 == 0, "feature encoder: image_size must be divisible by 8");
    return c;
}

FeatureEncoder::FeatureEncoder(const FeatureEncoderConfig& config) : cfg(config) {
    Rng rng(Rng::derive(cfg.seed, {0xFEA7}));
    const int C = cfg.ch;
    const int side = cfg.image_size / 8;
    ps.add("enc.c1.w", conv_init(rng, C, 3, 3));
    ps.add("enc.c1.b", Tensor::zeros({C}));
    ps.add("enc.c2.w", conv_init(rng, 2 * C, C, 3));
    ps.add("enc.c2.b", Tensor::zeros({2 * C}));
    ps.add("enc.c3.w", conv_init(rng, 2 * C, 2 * C, 3));
    ps.add("enc.c3.b", Tensor::zeros({2 * C}));
    ps.add("enc.fc.w", dense_init(rng, cfg.feat_dim, 2 * C * side * side));
    ps.add("enc.fc.b", Tensor::zeros({cfg.feat_dim}));
    ps.add("dec.fc.w", dense_init(rng, 2 * C * side * side, cfg.feat_dim));
    ps.add("dec.fc.b", Tensor::zeros({2 * C * side * side}));
    ps.add("dec.c1.w", conv_init(rng, 2 * C, 2 * C, 3));
    ps.add("dec.c1.b", Tensor::zeros({2 * C}));
    ps.add("dec.c2.w", conv_init(rng, C, 2 * C, 3));
    ps.add("dec.c2.b", Tensor::zeros({C}));
    ps.add("dec.c3.w", conv_init(rng, 3, C, 3));
    ps.add("dec.c3.b", Tensor::zeros({3}));
}

namespace {

Var encoder_forward(const ParamStore& ps, const Var& img, int feat_dim, int side) {
    Var h = silu(conv2d(img, ps.get("enc.c1.w"), ps.get("enc.c1.b"), 2, 1));
    h = silu(conv2d(h, ps.get("enc.c2.w"), ps.get("enc.c2.b"), 2, 1));
    h = silu(conv2d(h, ps.get("enc.c3.w"), ps.get("enc.c3.b"), 2, 1));
    h = reshape(h, {1, h->val.dim(0) * side * side});
    Var f = dense_tokens(h, ps.get("enc.fc.w"), ps.get("enc.fc.b"));
    return reshape(f, {feat_dim});
}

}  // namespace

std::vector<real> FeatureEncoder::encode(const Tensor& img) const {
    EGO_CHECK(img.dim(1) == cfg.image_size, "feature encoder: image is %dx%d, expected %d", img.dim(1),
              img.dim(2), cfg.image_size);
    const Var f = encoder_forward(ps, constant(img), cfg.feat_dim, cfg.image_size / 8);
    return f->val.data;
}

real FeatureEncoder::train(const std::vector<Tensor>& images) {
    EGO_CHECK(images.size() >= 4, "feature encoder: need a few training images, got %zu", images.size());
    Rng rng(Rng::derive(cfg.seed, {0x7EA1}));
    Adam opt;
    opt.lr = cfg.lr;
    const int side = cfg.image_size / 8;
    real last = 0;
    std::vector<size_t> order(images.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.uniform_int(int(i)))]);
        real sum = 0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch)) {
            const size_t end = std::min(order.size(), start + size_t(cfg.batch));
            ps.zero_grad();
            real bl = 0;
            for (size_t bi = start; bi < end; ++bi) {
                const Tensor& img = images[order[bi]];
                Var x = constant(img);
                Var f = encoder_forward(ps, x, cfg.feat_dim, side);
                Var h = dense_tokens(reshape(f, {1, cfg.feat_dim}), ps.get("dec.fc.w"), ps.get("dec.fc.b"));
                h = reshape(h, {2 * cfg.ch, side, side});
                h = silu(conv2d(upsample2(h), ps.get("dec.c1.w"), ps.get("dec.c1.b"), 1, 1));
                h = silu(conv2d(upsample2(h), ps.get("dec.c2.w"), ps.get("dec.c2.b"), 1, 1));
                h = sigmoid(conv2d(upsample2(h), ps.get("dec.c3.w"), ps.get("dec.c3.b"), 1, 1));
                Var loss = scale(mse(h, x), 1.0 / real(end - start));
                backward(loss);
                bl += loss->val.data[0];
            }
            EGO_CHECK(std::isfinite(bl), "feature encoder: non-finite loss");
            opt.step(ps.params());
            sum += bl;
            ++batches;
        }
        last = sum / real(std::max<size_t>(1, batches));
    }
    return last;
}

void FeatureEncoder::save(const std::string& path, const std::string& config_echo) const {
    std::string echo = config_echo;
    echo += strf("feat.image_size = %d\nfeat.dim = %d\nfeat.ch = %d\n", cfg.image_size, cfg.feat_dim,
                 cfg.ch);
    ps.save(path, echo);
}

FeatureEncoder FeatureEncoder::load(const std::string& path) {
    std::string echo;
    ParamStore::peek(path, &echo);
    Config meta = Config::from_string(echo);
    FeatureEncoderConfig cfg;
    cfg.image_size = meta.get_int("feat.image_size");
    cfg.feat_dim = meta.get_int("feat.dim");
    cfg.ch = meta.get_int("feat.ch");
    FeatureEncoder enc(cfg);
    enc.ps.load(path);
    return enc;
}

FeatureStats extract_features(const FeatureEncoder& encoder, const std::vector<Tensor>& images) {
    EGO_CHECK(images.size() >= 2, "extract_features: need at least 2 images, got %zu", images.size());
    FeatureAccumulator acc(encoder.cfg.feat_dim);
    for (const auto& img : images) acc.add(encoder.encode(img));
    return acc.finalize();
}

MotionVerdict motion_correctness(const Image& x_t, const Image& generated,
                                 const flow::FlowField& gt_flow) {
    real gu, gv;
    gt_flow.dominant(gu, gv);
    const real gmag = std::hypot(gu, gv);
    if (gmag < 0.25) return MotionVerdict::Inconclusive;

    // Turns sweep tens of pixels; give the estimator a deeper pyramid than
    // its small-motion default.
    flow::LkParams lk;
    lk.pyramid_levels = x_t.w >= 64 ? 5 : 4;
    lk.iterations = 4;
    const auto est = flow::estimate_flow(x_t, generated, lk);
    real eu, ev;
    est.dominant(eu, ev);
    const real emag = std::hypot(eu, ev);
    const real ratio = emag / gmag;
    if (ratio < 0.5 || ratio > 2.0) return MotionVerdict::Incorrect;
    const real dot = (gu * eu + gv * ev) / (gmag * emag);
    const real angle = std::acos(std::clamp<real>(dot, -1.0, 1.0));
    return angle <= M_PI / 4.0 ? MotionVerdict::Correct : MotionVerdict::Incorrect;
}

BootstrapStat bootstrap(int n_items, const std::function<real(const std::vector<int>&)>& stat,
                        int resamples, uint64_t seed) {
    EGO_CHECK(n_items > 0 && resamples > 0, "bootstrap: need items and resamples");
    Rng rng(Rng::derive(seed, {0xB007}));
    std::vector<real> values;
    values.reserve(size_t(resamples));
    std::vector<int> idx(static_cast<size_t>(n_items), 0);
    for (int r = 0; r < resamples; ++r) {
        for (auto& i : idx) i = rng.uniform_int(n_items);
        values.push_back(stat(idx));
    }
    BootstrapStat out;
    for (real v : values) out.mean += v;
    out.mean /= real(resamples);
    for (real v : values) out.variance += (v - out.mean) * (v - out.mean);
    out.variance /= real(std::max(1, resamples - 1));
    return out;
}

}  // namespace egohome::eval
