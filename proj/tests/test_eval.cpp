#include <doctest.h>

#include "egohome/eval/metrics.hpp"
#include "egohome/microhome/sim.hpp"
#include "egohome/nn/image_bridge.hpp"
#include "support/jacobi.hpp"

using namespace egohome;
using namespace egohome::eval;
using namespace egohome::nn;

namespace {

FeatureStats random_stats(Rng& rng, int d, real mean_shift = 0.0) {
    // PSD covariance via A A^T / n from random samples.
    const int n = d * 3;
    std::vector<std::vector<real>> samples;
    for (int i = 0; i < n; ++i) {
        std::vector<real> s(static_cast<size_t>(d), 0.0);
        for (auto& v : s) v = rng.normal() + mean_shift;
        samples.push_back(std::move(s));
    }
    FeatureAccumulator acc(d);
    for (const auto& s : samples) acc.add(s);
    return acc.finalize();
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("feature accumulator: streaming equals two-pass; permutation invariant") {
    Rng rng(3);
    const int d = 6, n = 40;
    std::vector<std::vector<real>> samples;
    for (int i = 0; i < n; ++i) {
        std::vector<real> s(static_cast<size_t>(d), 0.0);
        for (auto& v : s) v = rng.uniform(-2, 2);
        samples.push_back(std::move(s));
    }
    FeatureAccumulator acc(d);
    for (const auto& s : samples) acc.add(s);
    const auto streamed = acc.finalize();

    // Two-pass oracle.
    std::vector<real> mean(static_cast<size_t>(d), 0.0);
    for (const auto& s : samples)
        for (int i = 0; i < d; ++i) mean[size_t(i)] += s[size_t(i)] / n;
    std::vector<real> cov(size_t(d) * d, 0);
    for (const auto& s : samples)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                cov[size_t(i) * d + j] += (s[size_t(i)] - mean[size_t(i)]) * (s[size_t(j)] - mean[size_t(j)]) / (n - 1);
    for (int i = 0; i < d; ++i) CHECK(std::fabs(streamed.mean[size_t(i)] - mean[size_t(i)]) < 1e-10);
    for (size_t i = 0; i < cov.size(); ++i) CHECK(std::fabs(streamed.cov[i] - cov[i]) < 1e-10);

    // Permutation invariance.
    FeatureAccumulator acc2(d);
    for (auto it = samples.rbegin(); it != samples.rend(); ++it) acc2.add(*it);
    const auto permuted = acc2.finalize();
    for (size_t i = 0; i < permuted.cov.size(); ++i) CHECK(std::fabs(permuted.cov[i] - streamed.cov[i]) < 1e-10);

    // Duplicated single sample: covariance collapses to zero.
    FeatureAccumulator acc3(d);
    for (int i = 0; i < 10; ++i) acc3.add(samples[0]);
    const auto dup = acc3.finalize();
    for (real v : dup.cov) CHECK(std::fabs(v) < 1e-10);

    FeatureAccumulator too_few(d);
    too_few.add(samples[0]);
    CHECK_THROWS(too_few.finalize());
}

TEST_CASE("frechet distance: identity, analytic case, independent eigensolver oracle") {
    Rng rng(7);
    const int d = 8;
    const auto a = random_stats(rng, d);
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-9));

    // mu_a = 0, mu_b = m, Sa = Sb = I  ->  |m|^2.
    FeatureStats ia, ib;
    ia.mean.assign(size_t(d), 0.0);
    ib.mean.assign(size_t(d), 0.0);
    ia.cov.assign(size_t(d) * d, 0.0);
    ib.cov.assign(size_t(d) * d, 0.0);
    ia.count = ib.count = 10;
    real want = 0;
    for (int i = 0; i < d; ++i) {
        ia.cov[size_t(i) * d + i] = 1.0;
        ib.cov[size_t(i) * d + i] = 1.0;
        ib.mean[size_t(i)] = 0.3 * (i + 1);
        want += ib.mean[size_t(i)] * ib.mean[size_t(i)];
    }
    CHECK(frechet_distance(ia, ib) == doctest::Approx(want).epsilon(1e-10));

    // Random PSD pairs against the hand-rolled Jacobi route.
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_stats(rng, d, 0.0);
        const auto y = random_stats(rng, d, 0.4);
        const real got = frechet_distance(x, y);
        const real oracle = egohome::testsupport::frechet_oracle(x.mean, x.cov, y.mean, y.cov, d);
        CHECK(std::fabs(got - oracle) < 1e-6);
        CHECK(frechet_distance(y, x) == doctest::Approx(got).epsilon(1e-8));  // symmetry
    }

    FeatureStats wrong = a;
    wrong.mean.resize(size_t(d - 1));
    wrong.cov.resize(size_t(d - 1) * (d - 1));
    CHECK_THROWS(frechet_distance(a, wrong));

    FeatureStats bad = a;
    bad.cov[0] = -1.0;  // clearly non-PSD
    CHECK_THROWS(frechet_distance(bad, a));
}

TEST_CASE("frechet distance is invariant under simultaneous rotation") {
    Rng rng(11);
    const int d = 4;
    const auto a = random_stats(rng, d, 0.0);
    const auto b = random_stats(rng, d, 0.5);
    // Rotation in the (0,1) plane.
    const real th = 0.83;
    auto rotate = [&](const FeatureStats& s) {
        FeatureStats r = s;
        auto rot_vec = [&](std::vector<real>& v) {
            const real v0 = v[0], v1 = v[1];
            v[0] = std::cos(th) * v0 - std::sin(th) * v1;
            v[1] = std::sin(th) * v0 + std::cos(th) * v1;
        };
        rot_vec(r.mean);
        // R * C * R^T
        std::vector<real> c = s.cov;
        for (int col = 0; col < d; ++col) {
            const real c0 = c[size_t(0) * d + col], c1 = c[size_t(1) * d + col];
            c[size_t(0) * d + col] = std::cos(th) * c0 - std::sin(th) * c1;
            c[size_t(1) * d + col] = std::sin(th) * c0 + std::cos(th) * c1;
        }
        for (int row = 0; row < d; ++row) {
            const real c0 = c[size_t(row) * d + 0], c1 = c[size_t(row) * d + 1];
            c[size_t(row) * d + 0] = std::cos(th) * c0 - std::sin(th) * c1;
            c[size_t(row) * d + 1] = std::sin(th) * c0 + std::cos(th) * c1;
        }
        r.cov = c;
        return r;
    };
    CHECK(frechet_distance(rotate(a), rotate(b)) == doctest::Approx(frechet_distance(a, b)).epsilon(1e-7));
}

TEST_CASE("motion correctness: true next frame, mirror, and freeze") {
    using namespace egohome::microhome;
    const WorldState house = build_house(0, 41);
    Rng rng(5);
    auto staged = stage_for_skill(house, Verb::TurnLeft, rng);
    REQUIRE(staged);
    const auto res = step_skill(staged->first, staged->second);
    const Frame& a = res.frames[0];
    const Frame& b = res.frames[1];
    const auto gt = ground_truth_flow(a, b, res.snapshots[0], res.snapshots[1]);

    // The true next frame judges correct.
    CHECK(motion_correctness(a.rgb, b.rgb, gt) == MotionVerdict::Correct);

    // Horizontally mirrored motion flips the dominant direction.
    Image mirrored(b.rgb.h, b.rgb.w, 3);
    for (int y = 0; y < b.rgb.h; ++y)
        for (int x = 0; x < b.rgb.w; ++x)
            for (int c = 0; c < 3; ++c) mirrored.at(y, x, c) = a.rgb.at(y, b.rgb.w - 1 - x, c);
    flow::FlowField mirror_gt = gt;  // same expectation, opposite observation
    CHECK(motion_correctness(a.rgb, mirrored, mirror_gt) == MotionVerdict::Incorrect);

    // A frozen frame under a motion skill fails the magnitude-ratio bound.
    CHECK(motion_correctness(a.rgb, a.rgb, gt) == MotionVerdict::Incorrect);

    // Near-zero ground truth is inconclusive.
    flow::FlowField still(gt.h, gt.w);
    CHECK(motion_correctness(a.rgb, b.rgb, still) == MotionVerdict::Inconclusive);
}

TEST_CASE("bootstrap mean converges toward the point estimate") {
    Rng rng(13);
    std::vector<real> values(200);
    for (auto& v : values) v = rng.uniform(0, 1);
    auto stat = [&](const std::vector<int>& idx) {
        real s = 0;
        for (int i : idx) s += values[size_t(i)];
        return s / real(idx.size());
    };
    const auto few = bootstrap(int(values.size()), stat, 10, 99);
    const auto many = bootstrap(int(values.size()), stat, 200, 99);
    CHECK(std::fabs(few.mean - many.mean) / std::max<real>(1e-9, std::fabs(many.mean)) < 0.05);
}

TEST_CASE("feature encoder: deterministic training, save/load round trip") {
    FeatureEncoderConfig cfg;
    cfg.image_size = 16;
    cfg.feat_dim = 8;
    cfg.ch = 4;
    cfg.epochs = 3;
    cfg.batch = 8;
    Rng rng(17);
    std::vector<Tensor> images;
    for (int i = 0; i < 16; ++i) {
        Tensor t({3, 16, 16});
        for (auto& v : t.data) v = rng.uniform();
        images.push_back(std::move(t));
    }
    FeatureEncoder enc(cfg);
    const real loss_a = enc.train(images);
    FeatureEncoder enc2(cfg);
    const real loss_b = enc2.train(images);
    CHECK(loss_a == loss_b);  // bit-deterministic

    enc.save("/tmp/egohome_feat_test.bin", "seed = 77\n");
    const auto loaded = FeatureEncoder::load("/tmp/egohome_feat_test.bin");
    CHECK(loaded.encode(images[0]) == enc.encode(images[0]));

    const auto stats = extract_features(enc, images);
    CHECK(stats.count == int(images.size()));
    CHECK(stats.dim() == 8);
    std::vector<Tensor> one{images[0]};
    CHECK_THROWS(extract_features(enc, one));
}

}  // TEST_SUITE
