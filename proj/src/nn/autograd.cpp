#include "egohome/nn/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace egohome::nn {

namespace {

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(back);
    return n;
}

void accum(const Var& p, const Tensor& g) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < g.data.size(); ++i) p->grad.data[i] += g.data[i];
}

}  // namespace

Var leaf(Tensor val, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

Var constant(Tensor val) { return leaf(std::move(val), false); }

void backward(const Var& loss) {
    EGO_CHECK(loss->val.numel() == 1, "backward: loss must be scalar");
    // Post-order DFS, then reverse sweep.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad.data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

// --- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    EGO_CHECK(a->val.same_shape(b->val), "add: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->val.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad);
        accum(n.parents[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    EGO_CHECK(a->val.same_shape(b->val), "sub: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->val.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor neg = n.grad;
            for (auto& v : neg.data) v = -v;
            accum(n.parents[1], neg);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    EGO_CHECK(a->val.same_shape(b->val), "mul: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->val.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor g = n.grad;
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= n.parents[1]->val.data[i];
            accum(n.parents[0], g);
        }
        if (n.parents[1]->requires_grad) {
            Tensor g = n.grad;
            for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= n.parents[0]->val.data[i];
            accum(n.parents[1], g);
        }
    });
}

Var scale(const Var& a, real s) {
    Tensor out = a->val;
    for (auto& v : out.data) v *= s;
    return make_node(std::move(out), {a}, [s](Node& n) {
        Tensor g = n.grad;
        for (auto& v : g.data) v *= s;
        accum(n.parents[0], g);
    });
}

Var silu(const Var& a) {
    Tensor out = a->val;
    for (auto& v : out.data) v = v / (1.0 + std::exp(-v));
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor g = n.grad;
        for (size_t i = 0; i < g.data.size(); ++i) {
            const real x = n.parents[0]->val.data[i];
            const real s = 1.0 / (1.0 + std::exp(-x));
            g.data[i] *= s * (1.0 + x * (1.0 - s));
        }
        accum(n.parents[0], g);
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->val;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor g = n.grad;
        for (size_t i = 0; i < g.data.size(); ++i) {
            const real y = n.val.data[i];
            g.data[i] *= y * (1.0 - y);
        }
        accum(n.parents[0], g);
    });
}

Var stopgrad(const Var& a) {
    // A constant copy: the graph edge is cut by construction.
    return constant(a->val);
}

Var reshape(const Var& a, std::vector<int> shape) {
    EGO_CHECK(Tensor::numel_of(shape) == a->val.numel(), "reshape: element count mismatch");
    Tensor out = a->val;
    out.shape = shape;
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor g = n.grad;
        g.shape = n.parents[0]->val.shape;
        accum(n.parents[0], g);
    });
}

// --- reductions ----------------------------------------------------------------

Var sum_squares(const Var& a) {
    real s = 0;
    for (real v : a->val.data) s += v * v;
    Tensor out({1});
    out.data[0] = s;
    return make_node(std::move(out), {a}, [](Node& n) {
        const real g = n.grad.data[0];
        Tensor da = n.parents[0]->val;
        for (auto& v : da.data) v *= 2.0 * g;
        accum(n.parents[0], da);
    });
}

Var mse(const Var& a, const Var& b) {
    EGO_CHECK(a->val.same_shape(b->val), "mse: shape mismatch");
    const real inv = 1.0 / real(a->val.numel());
    real s = 0;
    for (size_t i = 0; i < a->val.data.size(); ++i) {
        const real d = a->val.data[i] - b->val.data[i];
        s += d * d;
    }
    Tensor out({1});
    out.data[0] = s * inv;
    return make_node(std::move(out), {a, b}, [inv](Node& n) {
        const real g = 2.0 * inv * n.grad.data[0];
        if (n.parents[0]->requires_grad) {
            Tensor da = n.parents[0]->val;
            for (size_t i = 0; i < da.data.size(); ++i)
                da.data[i] = g * (n.parents[0]->val.data[i] - n.parents[1]->val.data[i]);
            accum(n.parents[0], da);
        }
        if (n.parents[1]->requires_grad) {
            Tensor db = n.parents[1]->val;
            for (size_t i = 0; i < db.data.size(); ++i)
                db.data[i] = g * (n.parents[1]->val.data[i] - n.parents[0]->val.data[i]);
            accum(n.parents[1], db);
        }
    });
}

Var add_scalars(const std::vector<Var>& xs) {
    EGO_CHECK(!xs.empty(), "add_scalars: empty");
    Tensor out({1});
    for (const auto& x : xs) {
        EGO_CHECK(x->val.numel() == 1, "add_scalars: non-scalar input");
        out.data[0] += x->val.data[0];
    }
    return make_node(std::move(out), xs, [](Node& n) {
        Tensor one({1});
        one.data[0] = n.grad.data[0];
        for (auto& p : n.parents) accum(p, one);
    });
}

// --- linear algebra ---------------------------------------------------------------

Var dense_tokens(const Var& x, const Var& W, const Var& b) {
    EGO_CHECK(x->val.ndim() == 2 && W->val.ndim() == 2, "dense_tokens: want 2-D x and W");
    const int T = x->val.dim(0), in = x->val.dim(1), out_dim = W->val.dim(0);
    EGO_CHECK(W->val.dim(1) == in, "dense_tokens: W[%d,%d] does not match x[%d,%d]",
              W->val.dim(0), W->val.dim(1), T, in);
    Tensor out({T, out_dim});
    {
        CMapM xm(x->val.data.data(), T, in);
        CMapM wm(W->val.data.data(), out_dim, in);
        MapM om(out.data.data(), T, out_dim);
        om.noalias() = xm * wm.transpose();
        if (b) {
            EGO_CHECK(b->val.numel() == out_dim, "dense_tokens: bias size mismatch");
            for (int t = 0; t < T; ++t)
                for (int o = 0; o < out_dim; ++o) out.data[size_t(t) * out_dim + o] += b->val.data[size_t(o)];
        }
    }
    std::vector<Var> parents{x, W};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [T, in, out_dim](Node& n) {
        const Var& x = n.parents[0];
        const Var& W = n.parents[1];
        CMapM gy(n.grad.data.data(), T, out_dim);
        if (x->requires_grad) {
            Tensor gx({T, in});
            MapM gxm(gx.data.data(), T, in);
            CMapM wm(W->val.data.data(), out_dim, in);
            gxm.noalias() = gy * wm;
            accum(x, gx);
        }
        if (W->requires_grad) {
            Tensor gw({out_dim, in});
            MapM gwm(gw.data.data(), out_dim, in);
            CMapM xm(x->val.data.data(), T, in);
            gwm.noalias() = gy.transpose() * xm;
            accum(W, gw);
        }
        if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
            Tensor gb({out_dim});
            for (int t = 0; t < T; ++t)
                for (int o = 0; o < out_dim; ++o) gb.data[size_t(o)] += n.grad.data[size_t(t) * out_dim + o];
            accum(n.parents[2], gb);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    const int m = a->val.dim(0), k = a->val.dim(1), n_ = b->val.dim(1);
    EGO_CHECK(b->val.dim(0) == k, "matmul: inner dims mismatch");
    Tensor out({m, n_});
    {
        CMapM am(a->val.data.data(), m, k);
        CMapM bm(b->val.data.data(), k, n_);
        MapM om(out.data.data(), m, n_);
        om.noalias() = am * bm;
    }
    return make_node(std::move(out), {a, b}, [m, k, n_](Node& n) {
        CMapM gy(n.grad.data.data(), m, n_);
        if (n.parents[0]->requires_grad) {
            Tensor ga({m, k});
            MapM gam(ga.data.data(), m, k);
            CMapM bm(n.parents[1]->val.data.data(), k, n_);
            gam.noalias() = gy * bm.transpose();
            accum(n.parents[0], ga);
        }
        if (n.parents[1]->requires_grad) {
            Tensor gb({k, n_});
            MapM gbm(gb.data.data(), k, n_);
            CMapM am(n.parents[0]->val.data.data(), m, k);
            gbm.noalias() = am.transpose() * gy;
            accum(n.parents[1], gb);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const int m = a->val.dim(0), k = a->val.dim(1), n_ = b->val.dim(0);
    EGO_CHECK(b->val.dim(1) == k, "matmul_nt: inner dims mismatch");
    Tensor out({m, n_});
    {
        CMapM am(a->val.data.data(), m, k);
        CMapM bm(b->val.data.data(), n_, k);
        MapM om(out.data.data(), m, n_);
        om.noalias() = am * bm.transpose();
    }
    return make_node(std::move(out), {a, b}, [m, k, n_](Node& n) {
        CMapM gy(n.grad.data.data(), m, n_);
        if (n.parents[0]->requires_grad) {
            Tensor ga({m, k});
            MapM gam(ga.data.data(), m, k);
            CMapM bm(n.parents[1]->val.data.data(), n_, k);
            gam.noalias() = gy * bm;
            accum(n.parents[0], ga);
        }
        if (n.parents[1]->requires_grad) {
            Tensor gb({n_, k});
            MapM gbm(gb.data.data(), n_, k);
            CMapM am(n.parents[0]->val.data.data(), m, k);
            gbm.noalias() = gy.transpose() * am;
            accum(n.parents[1], gb);
        }
    });
}

Var softmax_rows(const Var& a) {
    const int T = a->val.dim(0), C = a->val.dim(1);
    Tensor out = a->val;
    for (int t = 0; t < T; ++t) {
        real mx = -1e300;
        for (int c = 0; c < C; ++c) mx = std::max(mx, out.data[size_t(t) * C + c]);
        real s = 0;
        for (int c = 0; c < C; ++c) {
            real& v = out.data[size_t(t) * C + c];
            v = std::exp(v - mx);
            s += v;
        }
        for (int c = 0; c < C; ++c) out.data[size_t(t) * C + c] /= s;
    }
    return make_node(std::move(out), {a}, [T, C](Node& n) {
        Tensor g({T, C});
        for (int t = 0; t < T; ++t) {
            real dot = 0;
            for (int c = 0; c < C; ++c)
                dot += n.grad.data[size_t(t) * C + c] * n.val.data[size_t(t) * C + c];
            for (int c = 0; c < C; ++c) {
                const size_t i = size_t(t) * C + c;
                g.data[i] = n.val.data[i] * (n.grad.data[i] - dot);
            }
        }
        accum(n.parents[0], g);
    });
}

// --- conv grids -------------------------------------------------------------------

namespace {

struct ConvDims {
    int cin, h, w, cout, kh, kw, stride, pad, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& W, int stride, int pad) {
    ConvDims d;
    d.cin = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.cout = W.dim(0);
    d.kh = W.dim(2);
    d.kw = W.dim(3);
    d.stride = stride;
    d.pad = pad;
    EGO_CHECK(W.dim(1) == d.cin, "conv2d: channel mismatch (x has %d, W wants %d)", d.cin, W.dim(1));
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

Tensor im2col(const Tensor& x, const ConvDims& d) {
    Tensor col({d.cin * d.kh * d.kw, d.ho * d.wo});
    for (int c = 0; c < d.cin; ++c)
        for (int ky = 0; ky < d.kh; ++ky)
            for (int kx = 0; kx < d.kw; ++kx) {
                const size_t row = (size_t(c) * d.kh + ky) * d.kw + kx;
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int sy = oy * d.stride + ky - d.pad;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const int sx = ox * d.stride + kx - d.pad;
                        real v = 0;
                        if (sy >= 0 && sy < d.h && sx >= 0 && sx < d.w)
                            v = x.data[(size_t(c) * d.h + sy) * d.w + sx];
                        col.data[row * (size_t(d.ho) * d.wo) + size_t(oy) * d.wo + ox] = v;
                    }
                }
            }
    return col;
}

void col2im_accum(const Tensor& col, const ConvDims& d, Tensor& gx) {
    for (int c = 0; c < d.cin; ++c)
        for (int ky = 0; ky < d.kh; ++ky)
            for (int kx = 0; kx < d.kw; ++kx) {
                const size_t row = (size_t(c) * d.kh + ky) * d.kw + kx;
                for (int oy = 0; oy < d.ho; ++oy) {
                    const int sy = oy * d.stride + ky - d.pad;
                    if (sy < 0 || sy >= d.h) continue;
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const int sx = ox * d.stride + kx - d.pad;
                        if (sx < 0 || sx >= d.w) continue;
                        gx.data[(size_t(c) * d.h + sy) * d.w + sx] +=
                            col.data[row * (size_t(d.ho) * d.wo) + size_t(oy) * d.wo + ox];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& W, const Var& b, int stride, int pad) {
    EGO_CHECK(x->val.ndim() == 3 && W->val.ndim() == 4, "conv2d: want x[C,H,W], W[Co,Ci,kh,kw]");
    const ConvDims d = conv_dims(x->val, W->val, stride, pad);
    auto col = std::make_shared<Tensor>(im2col(x->val, d));
    Tensor out({d.cout, d.ho, d.wo});
    {
        CMapM wm(W->val.data.data(), d.cout, d.cin * d.kh * d.kw);
        CMapM cm(col->data.data(), d.cin * d.kh * d.kw, d.ho * d.wo);
        MapM om(out.data.data(), d.cout, d.ho * d.wo);
        om.noalias() = wm * cm;
    }
    if (b) {
        EGO_CHECK(b->val.numel() == d.cout, "conv2d: bias size mismatch");
        for (int c = 0; c < d.cout; ++c) {
            const real bv = b->val.data[size_t(c)];
            for (int i = 0; i < d.ho * d.wo; ++i) out.data[size_t(c) * d.ho * d.wo + i] += bv;
        }
    }
    std::vector<Var> parents{x, W};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [d, col](Node& n) {
        const Var& x = n.parents[0];
        const Var& W = n.parents[1];
        CMapM gy(n.grad.data.data(), d.cout, d.ho * d.wo);
        if (W->requires_grad) {
            Tensor gw({d.cout, d.cin, d.kh, d.kw});
            MapM gwm(gw.data.data(), d.cout, d.cin * d.kh * d.kw);
            CMapM cm(col->data.data(), d.cin * d.kh * d.kw, d.ho * d.wo);
            gwm.noalias() = gy * cm.transpose();
            accum(W, gw);
        }
        if (x->requires_grad) {
            Tensor gcol({d.cin * d.kh * d.kw, d.ho * d.wo});
            MapM gcm(gcol.data.data(), d.cin * d.kh * d.kw, d.ho * d.wo);
            CMapM wm(W->val.data.data(), d.cout, d.cin * d.kh * d.kw);
            gcm.noalias() = wm.transpose() * gy;
            Tensor gx(x->val.shape);
            col2im_accum(gcol, d, gx);
            accum(x, gx);
        }
        if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
            Tensor gb({d.cout});
            for (int c = 0; c < d.cout; ++c)
                for (int i = 0; i < d.ho * d.wo; ++i) gb.data[size_t(c)] += n.grad.data[size_t(c) * d.ho * d.wo + i];
            accum(n.parents[2], gb);
        }
    });
}

Var avg_pool2(const Var& x) {
    const int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    EGO_CHECK(H % 2 == 0 && W % 2 == 0, "avg_pool2: odd spatial dims");
    Tensor out({C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int xx = 0; xx < W / 2; ++xx) {
                real s = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        s += x->val.data[(size_t(c) * H + 2 * y + dy) * W + 2 * xx + dx];
                out.data[(size_t(c) * (H / 2) + y) * (W / 2) + xx] = 0.25 * s;
            }
    return make_node(std::move(out), {x}, [C, H, W](Node& n) {
        Tensor gx({C, H, W});
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H / 2; ++y)
                for (int xx = 0; xx < W / 2; ++xx) {
                    const real g = 0.25 * n.grad.data[(size_t(c) * (H / 2) + y) * (W / 2) + xx];
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            gx.data[(size_t(c) * H + 2 * y + dy) * W + 2 * xx + dx] += g;
                }
        accum(n.parents[0], gx);
    });
}

Var upsample2(const Var& x) {
    const int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    Tensor out({C, H * 2, W * 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx)
                out.data[(size_t(c) * 2 * H + y) * 2 * W + xx] =
                    x->val.data[(size_t(c) * H + y / 2) * W + xx / 2];
    return make_node(std::move(out), {x}, [C, H, W](Node& n) {
        Tensor gx({C, H, W});
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx)
                    gx.data[(size_t(c) * H + y / 2) * W + xx / 2] +=
                        n.grad.data[(size_t(c) * 2 * H + y) * 2 * W + xx];
        accum(n.parents[0], gx);
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const int Ca = a->val.dim(0), H = a->val.dim(1), W = a->val.dim(2);
    const int Cb = b->val.dim(0);
    EGO_CHECK(b->val.dim(1) == H && b->val.dim(2) == W, "concat_channels: spatial mismatch");
    Tensor out({Ca + Cb, H, W});
    std::copy(a->val.data.begin(), a->val.data.end(), out.data.begin());
    std::copy(b->val.data.begin(), b->val.data.end(), out.data.begin() + a->val.numel());
    return make_node(std::move(out), {a, b}, [Ca, Cb, H, W](Node& n) {
        const size_t na = size_t(Ca) * H * W;
        if (n.parents[0]->requires_grad) {
            Tensor ga({Ca, H, W});
            std::copy(n.grad.data.begin(), n.grad.data.begin() + na, ga.data.begin());
            accum(n.parents[0], ga);
        }
        if (n.parents[1]->requires_grad) {
            Tensor gb({Cb, H, W});
            std::copy(n.grad.data.begin() + na, n.grad.data.end(), gb.data.begin());
            accum(n.parents[1], gb);
        }
    });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    const int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    EGO_CHECK(bias->val.numel() == C, "add_channel_bias: bias size mismatch (%lld vs %d channels)",
              (long long)bias->val.numel(), C);
    Tensor out = x->val;
    for (int c = 0; c < C; ++c) {
        const real bv = bias->val.data[size_t(c)];
        for (int i = 0; i < H * W; ++i) out.data[size_t(c) * H * W + i] += bv;
    }
    return make_node(std::move(out), {x, bias}, [C, H, W](Node& n) {
        accum(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor gb({C});
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < H * W; ++i) gb.data[size_t(c)] += n.grad.data[size_t(c) * H * W + i];
            accum(n.parents[1], gb);
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups) {
    const int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    EGO_CHECK(C % groups == 0, "group_norm: %d channels not divisible by %d groups", C, groups);
    EGO_CHECK(gamma->val.numel() == C && beta->val.numel() == C, "group_norm: affine size mismatch");
    const int gs = C / groups;
    const real eps = 1e-5;
    const size_t hw = size_t(H) * W;

    auto xhat = std::make_shared<Tensor>(Tensor({C, H, W}));
    auto inv_std = std::make_shared<std::vector<real>>(size_t(groups));
    Tensor out({C, H, W});
    for (int g = 0; g < groups; ++g) {
        real mean = 0;
        for (int c = g * gs; c < (g + 1) * gs; ++c)
            for (size_t i = 0; i < hw; ++i) mean += x->val.data[size_t(c) * hw + i];
        const real n_elem = real(gs) * real(hw);
        mean /= n_elem;
        real var = 0;
        for (int c = g * gs; c < (g + 1) * gs; ++c)
            for (size_t i = 0; i < hw; ++i) {
                const real d = x->val.data[size_t(c) * hw + i] - mean;
                var += d * d;
            }
        var /= n_elem;
        const real istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[size_t(g)] = istd;
        for (int c = g * gs; c < (g + 1) * gs; ++c)
            for (size_t i = 0; i < hw; ++i) {
                const real xh = (x->val.data[size_t(c) * hw + i] - mean) * istd;
                xhat->data[size_t(c) * hw + i] = xh;
                out.data[size_t(c) * hw + i] = gamma->val.data[size_t(c)] * xh + beta->val.data[size_t(c)];
            }
    }
    return make_node(std::move(out), {x, gamma, beta}, [C, H, W, gs, groups, xhat, inv_std](Node& n) {
        const size_t hw = size_t(H) * W;
        const Var& x = n.parents[0];
        const Var& gamma = n.parents[1];
        const Var& beta = n.parents[2];
        if (gamma->requires_grad) {
            Tensor gg({C});
            for (int c = 0; c < C; ++c)
                for (size_t i = 0; i < hw; ++i)
                    gg.data[size_t(c)] += n.grad.data[size_t(c) * hw + i] * xhat->data[size_t(c) * hw + i];
            accum(gamma, gg);
        }
        if (beta->requires_grad) {
            Tensor gb({C});
            for (int c = 0; c < C; ++c)
                for (size_t i = 0; i < hw; ++i) gb.data[size_t(c)] += n.grad.data[size_t(c) * hw + i];
            accum(beta, gb);
        }
        if (x->requires_grad) {
            Tensor gx({C, H, W});
            const real n_elem = real(gs) * real(hw);
            for (int g = 0; g < groups; ++g) {
                real mean_dyh = 0, mean_dyh_xh = 0;
                for (int c = g * gs; c < (g + 1) * gs; ++c)
                    for (size_t i = 0; i < hw; ++i) {
                        const real dyh = n.grad.data[size_t(c) * hw + i] * gamma->val.data[size_t(c)];
                        mean_dyh += dyh;
                        mean_dyh_xh += dyh * xhat->data[size_t(c) * hw + i];
                    }
                mean_dyh /= n_elem;
                mean_dyh_xh /= n_elem;
                const real istd = (*inv_std)[size_t(g)];
                for (int c = g * gs; c < (g + 1) * gs; ++c)
                    for (size_t i = 0; i < hw; ++i) {
                        const real dyh = n.grad.data[size_t(c) * hw + i] * gamma->val.data[size_t(c)];
                        gx.data[size_t(c) * hw + i] =
                            istd * (dyh - mean_dyh - xhat->data[size_t(c) * hw + i] * mean_dyh_xh);
                    }
            }
            accum(x, gx);
        }
    });
}

Var grid_to_tokens(const Var& x) {
    const int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    Tensor out({H * W, C});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H * W; ++i) out.data[size_t(i) * C + c] = x->val.data[size_t(c) * H * W + i];
    return make_node(std::move(out), {x}, [C, H, W](Node& n) {
        Tensor g({C, H, W});
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H * W; ++i) g.data[size_t(c) * H * W + i] = n.grad.data[size_t(i) * C + c];
        accum(n.parents[0], g);
    });
}

Var tokens_to_grid(const Var& x, int H, int W) {
    const int T = x->val.dim(0), C = x->val.dim(1);
    EGO_CHECK(T == H * W, "tokens_to_grid: %d tokens != %dx%d", T, H, W);
    Tensor out({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < T; ++i) out.data[size_t(c) * T + i] = x->val.data[size_t(i) * C + c];
    return make_node(std::move(out), {x}, [C, T](Node& n) {
        Tensor g({T, C});
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < T; ++i) g.data[size_t(i) * C + c] = n.grad.data[size_t(c) * T + i];
        accum(n.parents[0], g);
    });
}

Var embed_row(const Var& table, int row) {
    const int V = table->val.dim(0), D = table->val.dim(1);
    EGO_CHECK(row >= 0 && row < V, "embed_row: row %d out of range [0,%d)", row, V);
    Tensor out({D});
    std::copy(table->val.data.begin() + size_t(row) * D, table->val.data.begin() + size_t(row + 1) * D,
              out.data.begin());
    return make_node(std::move(out), {table}, [row, D](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->ensure_grad();
        for (int i = 0; i < D; ++i) n.parents[0]->grad.data[size_t(row) * D + i] += n.grad.data[size_t(i)];
    });
}

std::vector<int> nearest_codes(const Tensor& z, const Tensor& codebook) {
    const int T = z.dim(0), D = z.dim(1), N = codebook.dim(0);
    EGO_CHECK(codebook.dim(1) == D, "nearest_codes: dim mismatch");
    EGO_CHECK(N > 0, "nearest_codes: empty codebook");
    std::vector<int> idx(static_cast<size_t>(T), 0);
    for (int t = 0; t < T; ++t) {
        real best = 1e300;
        int bi = 0;
        for (int c = 0; c < N; ++c) {
            real d2 = 0;
            for (int k = 0; k < D; ++k) {
                const real d = z.data[size_t(t) * D + k] - codebook.data[size_t(c) * D + k];
                d2 += d * d;
            }
            if (d2 < best - 1e-15) {  // strict improvement: ties keep the lowest index
                best = d2;
                bi = c;
            }
        }
        idx[size_t(t)] = bi;
    }
    return idx;
}

Var codebook_gather(const Var& codebook, const std::vector<int>& indices, int D) {
    const int T = int(indices.size());
    Tensor out({T, D});
    for (int t = 0; t < T; ++t)
        std::copy(codebook->val.data.begin() + size_t(indices[size_t(t)]) * D,
                  codebook->val.data.begin() + size_t(indices[size_t(t)] + 1) * D,
                  out.data.begin() + size_t(t) * D);
    auto idx = std::make_shared<std::vector<int>>(indices);
    return make_node(std::move(out), {codebook}, [idx, D](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->ensure_grad();
        for (size_t t = 0; t < idx->size(); ++t)
            for (int k = 0; k < D; ++k)
                n.parents[0]->grad.data[size_t((*idx)[t]) * D + k] += n.grad.data[t * D + k];
    });
}

}  // namespace egohome::nn
