#include "egohome/nn/layers.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace egohome::nn {

Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    EGO_CHECK(!by_name_.count(name), "duplicate parameter name: %s", name.c_str());
    Var v = leaf(std::move(init), trainable, name);
    ordered_.push_back(v);
    by_name_[name] = v;
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = by_name_.find(name);
    EGO_CHECK(it != by_name_.end(), "unknown parameter: %s", name.c_str());
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& p : ordered_) p->grad = Tensor();
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
    int hits = 0;
    for (auto& p : ordered_)
        if (p->name.rfind(prefix, 0) == 0) {
            p->requires_grad = trainable;
            ++hits;
        }
    EGO_CHECK(hits > 0, "set_trainable: no parameters match prefix '%s'", prefix.c_str());
}

int64_t ParamStore::count_trainable() const {
    int64_t n = 0;
    for (const auto& p : ordered_)
        if (p->requires_grad) n += p->val.numel();
    return n;
}

namespace {

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

void put_str(std::string& out, const std::string& s) {
    put_u32(out, uint32_t(s.size()));
    out += s;
}

uint32_t take_u32(const std::string& in, size_t& pos) {
    EGO_CHECK(pos + 4 <= in.size(), "checkpoint truncated");
    uint32_t v;
    std::memcpy(&v, in.data() + pos, 4);
    pos += 4;
    return v;
}

std::string take_str(const std::string& in, size_t& pos) {
    const uint32_t n = take_u32(in, pos);
    EGO_CHECK(pos + n <= in.size(), "checkpoint truncated");
    std::string s = in.substr(pos, n);
    pos += n;
    return s;
}

}  // namespace

void ParamStore::save(const std::string& path, const std::string& config_echo) const {
    std::string out = "EGHC";
    put_u32(out, 1);
    put_str(out, config_echo);
    put_str(out, kToolVersion);
    put_u32(out, uint32_t(ordered_.size()));
    for (const auto& p : ordered_) {
        put_str(out, p->name);
        put_u32(out, uint32_t(p->val.shape.size()));
        for (int d : p->val.shape) put_u32(out, uint32_t(d));
        out.append(reinterpret_cast<const char*>(p->val.data.data()), p->val.data.size() * sizeof(real));
    }
    std::ofstream f(path, std::ios::binary);
    EGO_CHECK(f.good(), "cannot write checkpoint: %s", path.c_str());
    f.write(out.data(), std::streamsize(out.size()));
    EGO_CHECK(f.good(), "checkpoint write failed: %s", path.c_str());
}

std::map<std::string, Tensor> ParamStore::peek(const std::string& path, std::string* config_echo) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    EGO_CHECK(f.good(), "checkpoint not found: %s", path.c_str());
    std::string in(size_t(f.tellg()), '\0');
    f.seekg(0);
    f.read(in.data(), std::streamsize(in.size()));
    size_t pos = 0;
    EGO_CHECK(in.size() >= 4 && in.substr(0, 4) == "EGHC", "not a checkpoint file: %s", path.c_str());
    pos = 4;
    const uint32_t version = take_u32(in, pos);
    EGO_CHECK(version == 1, "unsupported checkpoint version %u", version);
    const std::string echo = take_str(in, pos);
    take_str(in, pos);  // tool version
    if (config_echo) *config_echo = echo;
    const uint32_t count = take_u32(in, pos);
    std::map<std::string, Tensor> out;
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = take_str(in, pos);
        const uint32_t nd = take_u32(in, pos);
        std::vector<int> shape(nd);
        for (auto& d : shape) d = int(take_u32(in, pos));
        Tensor t(shape);
        const size_t bytes = t.data.size() * sizeof(real);
        EGO_CHECK(pos + bytes <= in.size(), "checkpoint truncated in tensor %s", name.c_str());
        std::memcpy(t.data.data(), in.data() + pos, bytes);
        pos += bytes;
        out.emplace(name, std::move(t));
    }
    return out;
}

std::string ParamStore::load(const std::string& path) {
    std::string echo;
    auto tensors = peek(path, &echo);
    for (auto& p : ordered_) {
        auto it = tensors.find(p->name);
        EGO_CHECK(it != tensors.end(), "checkpoint %s is missing parameter %s", path.c_str(),
                  p->name.c_str());
        EGO_CHECK(it->second.shape == p->val.shape, "checkpoint %s: shape mismatch for %s",
                  path.c_str(), p->name.c_str());
        p->val = std::move(it->second);
    }
    return echo;
}

void Adam::step(const std::vector<Var>& params) {
    ++t;
    const real bc1 = 1.0 - std::pow(beta1, t);
    const real bc2 = 1.0 - std::pow(beta2, t);
    for (const auto& p : params) {
        if (!p->requires_grad) continue;
        if (p->grad.shape != p->val.shape) continue;  // untouched this step
        auto& [m, v] = state[p.get()];
        if (m.shape != p->val.shape) {
            m = Tensor::zeros(p->val.shape);
            v = Tensor::zeros(p->val.shape);
        }
        for (size_t i = 0; i < p->val.data.size(); ++i) {
            const real g = p->grad.data[i];
            m.data[i] = beta1 * m.data[i] + (1 - beta1) * g;
            v.data[i] = beta2 * v.data[i] + (1 - beta2) * g * g;
            const real mh = m.data[i] / bc1;
            const real vh = v.data[i] / bc2;
            p->val.data[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

Tensor conv_init(Rng& rng, int cout, int cin, int k) {
    const real std = std::sqrt(2.0 / (real(cin) * k * k));
    return Tensor::randn(rng, {cout, cin, k, k}, std);
}

Tensor dense_init(Rng& rng, int out, int in) {
    const real std = std::sqrt(1.0 / real(in));
    return Tensor::randn(rng, {out, in}, std);
}

Tensor sinusoidal_embedding(int k, int dim) {
    Tensor e({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const real freq = std::exp(-std::log(10000.0) * real(i) / real(half));
        e.data[size_t(i)] = std::sin(k * freq);
        e.data[size_t(half + i)] = std::cos(k * freq);
    }
    return e;
}

}  // namespace egohome::nn
