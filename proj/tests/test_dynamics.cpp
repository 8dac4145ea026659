#include <doctest.h>

#include "egohome/dynamics/model.hpp"

#include "egohome/flow/flow.hpp"
#include "egohome/microhome/sim.hpp"
#include "egohome/nn/image_bridge.hpp"
#include "support/gradcheck.hpp"

using namespace egohome;
using namespace egohome::dynamics;
using namespace egohome::nn;

namespace {

DynamicsConfig tiny_cfg() {
    DynamicsConfig c;
    c.image_size = 16;
    c.base = 8;
    c.w1 = 12;
    c.w2 = 16;
    c.emb = 16;
    c.K = 40;
    c.epochs = 4;
    c.batch = 4;
    c.lr = 2e-3;
    c.seed = 11;
    return c;
}

DynItem random_item(Rng& rng, int size) {
    DynItem item;
    item.x_t = Tensor::zeros({3, size, size});
    item.x_next = Tensor::zeros({3, size, size});
    for (auto& v : item.x_t.data) v = rng.uniform();
    for (auto& v : item.x_next.data) v = rng.uniform();
    item.verb_tok = rng.uniform_int(kVocabSize);
    item.flow_color = Tensor::full({3, size, size}, 1.0);
    item.gt_flow = flow::FlowField(size, size);
    item.action_text = "next timestep: walk forward";
    return item;
}

// Simulator-backed toy items for one verb.
std::vector<DynItem> sim_items(microhome::Verb verb, int count, int size, uint64_t seed) {
    using namespace egohome::microhome;
    std::vector<DynItem> out;
    const WorldState house = build_house(0, 29);
    Rng rng(seed);
    while (int(out.size()) < count) {
        auto staged = stage_for_skill(house, verb, rng);
        if (!staged) break;
        const auto res = step_skill(staged->first, staged->second, 64);
        for (size_t i = 0; i + 1 < res.frames.size() && int(out.size()) < count; ++i) {
            DynItem item;
            item.x_t = tensor_from_image(downscale(res.frames[i].rgb, 64 / size));
            item.x_next = tensor_from_image(downscale(res.frames[i + 1].rgb, 64 / size));
            item.verb_tok = int(verb);
            const auto f = ground_truth_flow(res.frames[i], res.frames[i + 1], res.snapshots[i],
                                             res.snapshots[i + 1]);
            item.gt_flow = flow::downscale(f, 64 / size);
            item.flow_color = tensor_from_image(flow::flow_to_color(item.gt_flow, 8.0));
            item.action_text = std::string("next timestep: ") + verb_name(verb);
            out.push_back(std::move(item));
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("make_schedule: product oracle and invariants") {
    // Degenerate all-zero betas (test-only construction).
    const auto degenerate = NoiseSchedule::from_betas({0, 0, 0, 0}, /*allow_degenerate=*/true);
    for (real ab : degenerate.alpha_bar) CHECK(ab == doctest::Approx(1.0));

    const auto s = make_schedule(4, ScheduleKind::Linear, 0.1, 0.4);
    CHECK(s.beta[0] == doctest::Approx(0.1));
    CHECK(s.beta[3] == doctest::Approx(0.4));
    CHECK(s.alpha_bar[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(s.alpha_bar[1] == doctest::Approx(0.72).epsilon(1e-12));
    CHECK(s.alpha_bar[2] == doctest::Approx(0.504).epsilon(1e-12));
    CHECK(s.alpha_bar[3] == doctest::Approx(0.3024).epsilon(1e-12));

    for (auto kind : {ScheduleKind::Linear, ScheduleKind::Cosine}) {
        const auto sched = make_schedule(50, kind, 1e-3, 0.05);
        for (int k = 1; k < sched.K; ++k) CHECK(sched.alpha_bar[size_t(k)] < sched.alpha_bar[size_t(k - 1)]);
    }

    CHECK_THROWS(make_schedule(0, ScheduleKind::Linear, 0.1, 0.2));
    CHECK_THROWS(make_schedule(4, ScheduleKind::Linear, 0.0, 0.2));
    CHECK_THROWS(make_schedule(4, ScheduleKind::Linear, 0.3, 0.2));
    CHECK_THROWS(make_schedule(4, ScheduleKind::Linear, 0.3, 1.0));
}

TEST_CASE("forward_diffuse closed form") {
    Rng rng(3);
    const Tensor x = Tensor::randn(rng, {3, 4, 4});
    const Tensor eps = Tensor::randn(rng, {3, 4, 4});

    const auto identity = NoiseSchedule::from_betas({0.0}, true);
    CHECK(forward_diffuse(x, 1, eps, identity) == x);

    const auto nearly_noise = NoiseSchedule::from_betas({1.0 - 1e-12}, true);
    const auto noised = forward_diffuse(x, 1, eps, nearly_noise);
    for (size_t i = 0; i < eps.data.size(); ++i) CHECK(noised.data[i] == doctest::Approx(eps.data[i]).epsilon(1e-5));

    const auto quarter = NoiseSchedule::from_betas({0.75}, true);
    const auto out = forward_diffuse(x, 1, eps, quarter);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const real want = 0.5 * x.data[i] + std::sqrt(0.75) * eps.data[i];
        CHECK(std::fabs(out.data[i] - want) < 1e-10);
    }

    CHECK_THROWS(forward_diffuse(x, 2, eps, quarter));  // k out of range
}

TEST_CASE("denoise loss: perfect prediction gives zero, random init near one") {
    // Stub: if the network output were exactly eps, the objective is zero.
    Rng rng(5);
    const Tensor eps = Tensor::randn(rng, {3, 8, 8});
    CHECK(mse(constant(eps), constant(eps))->val.data[0] == doctest::Approx(0.0));

    // Statistical baseline at init: for unit-normal eps the expected MSE sits
    // near 1 + |mean prediction|^2.
    DenoiserModel model(tiny_cfg());
    std::vector<DynItem> batch;
    for (int i = 0; i < 24; ++i) batch.push_back(random_item(rng, 16));
    Rng loss_rng(17);
    const real loss = denoise_loss(model, batch, loss_rng);
    CHECK(loss > 0.5);
    CHECK(loss < 2.0);
}

TEST_CASE("denoise_loss gradients match finite differences") {
    DynamicsConfig cfg = tiny_cfg();
    DenoiserModel model(cfg);
    Rng rng(7);
    const DynItem item = random_item(rng, 16);
    const int k = 13;
    const Tensor eps = Tensor::randn(rng, {3, 16, 16});

    auto build = [&] { return denoise_loss_item(model, item, k, eps); };
    auto value = [&] { return build()->val.data[0]; };

    for (const char* pname : {"base.stem.w", "base.d2_gn.g", "base.attn.q.w", "base.mlp.fc1.w",
                              "base.u1.w", "base.head.b", "emb.table", "base.t1.w"}) {
        const Var p = model.ps.get(pname);
        model.ps.zero_grad();
        std::vector<size_t> idx;
        Rng pick(size_t(p->val.numel()) * 31 + 7);
        for (int i = 0; i < 4; ++i) idx.push_back(size_t(pick.uniform_int(int(p->val.numel()))));
        const auto res = egohome::testsupport::grad_check(value, build, p, idx, 1e-5);
        INFO("param ", pname);
        CHECK(res.max_rel_err < 1e-3);
    }
}

TEST_CASE("control branch: exact no-op at init, frozen base, detachable") {
    DynamicsConfig cfg = tiny_cfg();
    DenoiserModel base(cfg);
    base.save("/tmp/egohome_dyn_base.bin", "seed = 11\n");
    DenoiserModel ctrl = DenoiserModel::load("/tmp/egohome_dyn_base.bin");
    ctrl.attach_control_branch();
    CHECK_THROWS(ctrl.attach_control_branch());  // double attach

    Rng rng(9);
    const DynItem item = random_item(rng, 16);
    const Tensor eps = Tensor::randn(rng, {3, 16, 16});
    auto to_signed = [](Tensor t) {
        for (auto& v : t.data) v = 2 * v - 1;
        return t;
    };
    const Tensor noisy = forward_diffuse(to_signed(item.x_next), 5, eps, base.schedule);

    const Var base_out = base.forward(constant(noisy), constant(to_signed(item.x_t)), 5, 2, nullptr);
    const Var ctrl_out = ctrl.forward(constant(noisy), constant(to_signed(item.x_t)), 5, 2,
                                      constant(item.flow_color));
    CHECK(base_out->val == ctrl_out->val);  // bit-for-bit

    // Gradients during branch training: frozen base gets exactly none.
    ctrl.ps.zero_grad();
    backward(denoise_loss_item(ctrl, item, 5, eps));
    for (const auto& p : ctrl.ps.params()) {
        if (p->name.rfind("base.", 0) == 0) {
            INFO("param ", p->name);
            CHECK(p->grad.shape.empty());
        }
    }
    CHECK(ctrl.ps.get("ctrl.z0.w")->grad.shape == ctrl.ps.get("ctrl.z0.w")->val.shape);
    CHECK(ctrl.ps.get("emb.table")->grad.shape == ctrl.ps.get("emb.table")->val.shape);

    // Zeroing the branch's zero-convs restores base behaviour even after the
    // rest of the branch moved.
    for (const char* n : {"ctrl.hint.w", "ctrl.stem.w", "ctrl.d1.w"}) {
        auto p = ctrl.ps.get(n);
        for (auto& v : p->val.data) v += 0.05;
    }
    for (const char* n : {"ctrl.z0.w", "ctrl.z0.b", "ctrl.z1.w", "ctrl.z1.b", "ctrl.z2.w", "ctrl.z2.b"}) {
        auto p = ctrl.ps.get(n);
        for (auto& v : p->val.data) v = 0;
    }
    const Var restored = ctrl.forward(constant(noisy), constant(to_signed(item.x_t)), 5, 2,
                                      constant(item.flow_color));
    CHECK(restored->val == base_out->val);
}

TEST_CASE("training decreases loss deterministically; divergence aborts") {
    auto items = sim_items(microhome::Verb::TurnLeft, 12, 16, 3);
    REQUIRE(items.size() >= 6);

    auto run = [&] {
        DenoiserModel model(tiny_cfg());
        const auto curve = train_dynamics(model, items, false);
        return curve.epoch_loss;
    };
    const auto a = run();
    const auto b = run();
    CHECK(a == b);  // bit-identical training under a fixed seed
    CHECK(a.back() < a.front());

    DynamicsConfig bad = tiny_cfg();
    bad.lr = 5.0;
    bad.epochs = 30;
    DenoiserModel doomed(bad);
    CHECK_THROWS(train_dynamics(doomed, items, false));
}

TEST_CASE("sampling is a pure function of (model, conditioning, seed, steps)") {
    DenoiserModel model(tiny_cfg());
    Rng rng(13);
    const DynItem item = random_item(rng, 16);
    const auto a = sample_next_obs(model, item.x_t, "next timestep: turn left", std::nullopt, 6, 99);
    const auto b = sample_next_obs(model, item.x_t, "next timestep: turn left", std::nullopt, 6, 99);
    CHECK(a == b);
    const auto c = sample_next_obs(model, item.x_t, "next timestep: turn left", std::nullopt, 6, 100);
    CHECK(a != c);
    for (real v : a.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS(sample_next_obs(model, item.x_t, "next timestep: fly", std::nullopt, 6, 1));
    CHECK_THROWS(sample_next_obs(model, item.x_t, "next timestep: turn left", std::nullopt, 1000, 1));
}

TEST_CASE("toy training moves generations toward the true next frame") {
    auto items = sim_items(microhome::Verb::TurnLeft, 24, 16, 5);
    auto extra = sim_items(microhome::Verb::WalkForward, 12, 16, 6);
    items.insert(items.end(), extra.begin(), extra.end());
    REQUIRE(items.size() >= 20);
    const DynItem held_out = items.back();
    items.pop_back();

    DynamicsConfig cfg = tiny_cfg();
    cfg.epochs = 30;
    cfg.lr = 3e-3;
    DenoiserModel model(cfg);
    const auto curve = train_dynamics(model, items, false);
    CHECK(curve.epoch_loss.back() < curve.epoch_loss.front());

    const auto gen =
        sample_next_obs(model, held_out.x_t, held_out.action_text, std::nullopt, 8, 1234);
    auto dist = [](const Tensor& a, const Tensor& b) {
        real s = 0;
        for (size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
        return s / real(a.data.size());
    };
    // Closer (mean pixel distance) to the true next frame than to the input.
    CHECK(dist(gen, held_out.x_next) < dist(gen, held_out.x_t));
}

TEST_CASE("verb tokens cover skills and the navigation goal") {
    CHECK(verb_token("next timestep: make a left") == int(microhome::Verb::TurnLeft));
    CHECK(verb_token("the goal state: walk to the bench") == kWalkToToken);
    CHECK(verb_token("the goal state: redeposit plate") == int(microhome::Verb::PutBack));
    CHECK_THROWS(verb_token("next timestep: levitate"));
}

}  // TEST_SUITE
