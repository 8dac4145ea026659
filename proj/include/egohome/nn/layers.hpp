#pragma once

#include <map>
#include <optional>

#include "egohome/nn/autograd.hpp"

namespace egohome::nn {

// Named parameter registry; owns the leaves of a model.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init, bool trainable = true);
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return by_name_.count(name) != 0; }

    const std::vector<Var>& params() const { return ordered_; }
    void zero_grad();
    // Freeze/unfreeze every parameter whose name starts with `prefix`.
    void set_trainable(const std::string& prefix, bool trainable);
    int64_t count_trainable() const;

    void save(const std::string& path, const std::string& config_echo) const;
    // Loads tensors into existing params (by name); returns the config echo.
    std::string load(const std::string& path);
    static std::map<std::string, Tensor> peek(const std::string& path, std::string* config_echo = nullptr);

private:
    std::vector<Var> ordered_;
    std::map<std::string, Var> by_name_;
};

struct Adam {
    real lr = 1e-3;
    real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int t = 0;
    std::map<Node*, std::pair<Tensor, Tensor>> state;

    void step(const std::vector<Var>& params);
};

// Dense layer over token grids with an optional low-rank adapter path.
struct Dense {
    Var W, b;
    struct Lora {
        Var A, B;      // A: [r, in], B: [out, r]
        real scale;    // alpha / r
    };
    std::optional<Lora> lora;
    bool merged = false;

    Var apply(const Var& x) const {
        Var y = dense_tokens(x, W, b);
        if (lora && !merged) {
            Var low = dense_tokens(dense_tokens(x, lora->A, nullptr), lora->B, nullptr);
            y = add(y, scale(low, lora->scale));
        }
        return y;
    }
};

struct Conv {
    Var W, b;
    int stride = 1, pad = 1;
    Var apply(const Var& x) const { return conv2d(x, W, b, stride, pad); }
};

struct GroupNorm {
    Var gamma, beta;
    int groups = 4;
    Var apply(const Var& x) const { return group_norm(x, gamma, beta, groups); }
};

// Initializers.
Tensor conv_init(Rng& rng, int cout, int cin, int k);
Tensor dense_init(Rng& rng, int out, int in);

inline int gn_groups(int channels) {
    for (int g : {4, 2})
        if (channels % g == 0) return g;
    return 1;
}

// Sinusoidal embedding of a diffusion step index.
Tensor sinusoidal_embedding(int k, int dim);

}  // namespace egohome::nn
