#include <doctest.h>

#include "egohome/nn/layers.hpp"
#include "support/gradcheck.hpp"

using namespace egohome;
using namespace egohome::nn;
using egohome::testsupport::grad_check;

namespace {

std::vector<size_t> probe_indices(Rng& rng, const Tensor& t, int n) {
    std::vector<size_t> out;
    for (int i = 0; i < n; ++i) out.push_back(size_t(rng.uniform_int(int(t.numel()))));
    return out;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("gradients: composite conv/pool/norm/activation network") {
    Rng rng(42);
    ParamStore ps;
    Var x = ps.add("x", Tensor::randn(rng, {3, 8, 8}));
    Var w1 = ps.add("w1", conv_init(rng, 6, 3, 3));
    Var b1 = ps.add("b1", Tensor::zeros({6}));
    Var gamma = ps.add("gamma", Tensor::full({6}, 1.0));
    Var beta = ps.add("beta", Tensor::zeros({6}));
    Var w2 = ps.add("w2", conv_init(rng, 4, 6, 3));
    Var b2 = ps.add("b2", Tensor::randn(rng, {4}, 0.1));
    Var bias = ps.add("bias", Tensor::randn(rng, {4}, 0.5));
    Var target = constant(Tensor::randn(rng, {4, 8, 8}));

    auto build = [&] {
        Var h = conv2d(x, w1, b1, 1, 1);
        h = group_norm(h, gamma, beta, 2);
        h = silu(h);
        h = avg_pool2(h);
        h = upsample2(h);
        h = conv2d(h, w2, b2, 1, 1);
        h = add_channel_bias(h, bias);
        return mse(h, target);
    };
    auto value = [&] { return build()->val.data[0]; };

    for (const Var& p : {x, w1, b1, gamma, beta, w2, b2, bias}) {
        ps.zero_grad();
        const auto res = grad_check(value, build, p, probe_indices(rng, p->val, 6));
        INFO("param ", p->name);
        CHECK(res.max_rel_err < 1e-5);
    }
}

TEST_CASE("gradients: attention block (dense/softmax/matmul)") {
    Rng rng(7);
    ParamStore ps;
    const int T = 9, C = 6;
    Var x = ps.add("x", Tensor::randn(rng, {T, C}));
    Var wq = ps.add("wq", dense_init(rng, C, C));
    Var wk = ps.add("wk", dense_init(rng, C, C));
    Var wv = ps.add("wv", dense_init(rng, C, C));
    Var wo = ps.add("wo", dense_init(rng, C, C));
    Var bo = ps.add("bo", Tensor::zeros({C}));
    Var target = constant(Tensor::randn(rng, {T, C}));

    auto build = [&] {
        Var q = dense_tokens(x, wq, nullptr);
        Var k = dense_tokens(x, wk, nullptr);
        Var v = dense_tokens(x, wv, nullptr);
        Var att = softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(real(C))));
        Var o = dense_tokens(matmul(att, v), wo, bo);
        return mse(add(o, x), target);
    };
    auto value = [&] { return build()->val.data[0]; };

    for (const Var& p : {x, wq, wk, wv, wo, bo}) {
        ps.zero_grad();
        const auto res = grad_check(value, build, p, probe_indices(rng, p->val, 6));
        INFO("param ", p->name);
        CHECK(res.max_rel_err < 1e-5);
    }
}

TEST_CASE("gradients: strided conv, concat, embedding, reshape") {
    Rng rng(9);
    ParamStore ps;
    Var x = ps.add("x", Tensor::randn(rng, {2, 8, 8}));
    Var w = ps.add("w", conv_init(rng, 3, 2, 3));
    Var table = ps.add("table", Tensor::randn(rng, {5, 3}));
    auto build2 = [&] {
        Var h = conv2d(x, w, nullptr, 2, 1);
        Var e = embed_row(table, 2);
        h = add_channel_bias(h, e);
        Var g = concat_channels(h, h);  // [6,4,4]
        Var flat = reshape(g, {6, 16});
        return sum_squares(flat);
    };
    auto value2 = [&] { return build2()->val.data[0]; };
    for (const Var& p : {x, w, table}) {
        ps.zero_grad();
        const auto res = grad_check(value2, build2, p, probe_indices(rng, p->val, 6));
        INFO("param ", p->name);
        CHECK(res.max_rel_err < 1e-5);
    }
}

TEST_CASE("stopgrad cuts the graph") {
    Rng rng(3);
    Var x = leaf(Tensor::randn(rng, {4}), true, "x");
    Var loss = sum_squares(stopgrad(x));
    backward(loss);
    CHECK(x->grad.shape != x->val.shape);  // never touched
}

TEST_CASE("codebook gather: nearest neighbour with low-index ties") {
    Tensor codebook({2, 2});
    codebook.data = {0, 0, 1, 1};
    Tensor z({1, 2});
    z.data = {0.4, 0.4};
    CHECK(nearest_codes(z, codebook) == std::vector<int>{0});
    z.data = {0.5, 0.5};  // equidistant: lowest index wins
    CHECK(nearest_codes(z, codebook) == std::vector<int>{0});
    z.data = {1.0, 1.0};  // exact entry
    CHECK(nearest_codes(z, codebook) == std::vector<int>{1});

    Tensor empty({0, 2});
    CHECK_THROWS(nearest_codes(z, empty));

    // Gradient routes into the gathered rows only.
    Var cb = leaf(codebook, true, "cb");
    Var zq = codebook_gather(cb, {1, 1}, 2);
    Var loss = sum_squares(zq);
    backward(loss);
    CHECK(cb->grad.data[0] == 0.0);
    CHECK(cb->grad.data[1] == 0.0);
    CHECK(cb->grad.data[2] == doctest::Approx(4.0));  // 2 gathers * 2*val
    CHECK(cb->grad.data[3] == doctest::Approx(4.0));
}

TEST_CASE("frozen parameters receive exactly zero gradient") {
    Rng rng(11);
    ParamStore ps;
    Var x = ps.add("x", Tensor::randn(rng, {2, 4, 4}));
    Var w_frozen = ps.add("frozen.w", conv_init(rng, 2, 2, 3), /*trainable=*/false);
    Var w_live = ps.add("live.w", conv_init(rng, 2, 2, 3));
    Var h = conv2d(x, w_frozen, nullptr, 1, 1);
    h = conv2d(h, w_live, nullptr, 1, 1);
    backward(sum_squares(h));
    CHECK(w_frozen->grad.shape.empty());  // no gradient buffer was ever allocated
    CHECK(w_live->grad.shape == w_live->val.shape);
}

TEST_CASE("adam step is deterministic") {
    auto run = [] {
        Rng rng(5);
        ParamStore ps;
        Var w = ps.add("w", Tensor::randn(rng, {8}));
        Adam opt;
        opt.lr = 1e-2;
        for (int i = 0; i < 20; ++i) {
            ps.zero_grad();
            Var loss = sum_squares(w);
            backward(loss);
            opt.step(ps.params());
        }
        return w->val;
    };
    CHECK(run() == run());
}

TEST_CASE("param store save/load round trip with config echo") {
    Rng rng(6);
    ParamStore a;
    a.add("layer.w", Tensor::randn(rng, {3, 4}));
    a.add("layer.b", Tensor::randn(rng, {3}));
    const auto path = std::string("/tmp/egohome_ckpt_test.bin");
    a.save(path, "cfg = 1\n");

    ParamStore b;
    b.add("layer.w", Tensor::zeros({3, 4}));
    b.add("layer.b", Tensor::zeros({3}));
    const std::string echo = b.load(path);
    CHECK(echo == "cfg = 1\n");
    CHECK(b.get("layer.w")->val == a.get("layer.w")->val);

    ParamStore c;
    c.add("layer.w", Tensor::zeros({3, 5}));  // wrong shape
    CHECK_THROWS(c.load(path));
}

TEST_CASE("lora path: zero B is an exact no-op, gradients reach A and B only") {
    Rng rng(13);
    ParamStore ps;
    const int T = 4, in = 6, out = 5, r = 2;
    Var x = ps.add("x", Tensor::randn(rng, {T, in}), false);
    Dense dense;
    dense.W = ps.add("w", dense_init(rng, out, in), false);  // frozen base
    dense.b = ps.add("b", Tensor::zeros({out}), false);
    const Var y_base = dense.apply(x);

    dense.lora = Dense::Lora{ps.add("lora.A", dense_init(rng, r, in)),
                             ps.add("lora.B", Tensor::zeros({out, r})), 8.0 / r};
    const Var y_adapted = dense.apply(x);
    CHECK(y_adapted->val == y_base->val);  // bit-identical at init

    backward(sum_squares(dense.apply(x)));
    CHECK(dense.W->grad.shape.empty());
    CHECK(dense.b->grad.shape.empty());
    CHECK(dense.lora->A->grad.shape == dense.lora->A->val.shape);
    CHECK(dense.lora->B->grad.shape == dense.lora->B->val.shape);
}

}  // TEST_SUITE
