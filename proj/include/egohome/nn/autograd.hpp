#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "egohome/nn/tensor.hpp"

namespace egohome::nn {

// Define-by-run reverse-mode autodiff over Tensor values. Graphs are built
// per forward pass; leaves (parameters) persist across passes and
// accumulate gradients until zero_grad.
struct Node {
    Tensor val;
    Tensor grad;  // allocated on demand, same shape as val
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.shape != val.shape) grad = Tensor::zeros(val.shape);
    }
};

using Var = std::shared_ptr<Node>;

Var leaf(Tensor val, bool requires_grad = false, std::string name = "");
Var constant(Tensor val);

// Runs reverse-mode accumulation from a scalar loss node.
void backward(const Var& loss);

// --- elementwise / reshaping -------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real s);
Var silu(const Var& a);
Var sigmoid(const Var& a);
Var stopgrad(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);

// --- reductions ----------------------------------------------------------------
Var sum_squares(const Var& a);               // scalar
Var mse(const Var& a, const Var& b);         // mean squared error, scalar
Var add_scalars(const std::vector<Var>& xs); // sum of scalar nodes

// --- linear algebra --------------------------------------------------------------
// x: [T, in] tokens; W: [out, in]; b: [out] (optional). Returns [T, out].
Var dense_tokens(const Var& x, const Var& W, const Var& b);
// a: [m, k], b: [k, n] -> [m, n]
Var matmul(const Var& a, const Var& b);
// a: [m, k], b: [n, k] -> [m, n]  (b transposed)
Var matmul_nt(const Var& a, const Var& b);
Var softmax_rows(const Var& a);  // [T, T] row-wise

// --- conv grids [C, H, W] ---------------------------------------------------------
Var conv2d(const Var& x, const Var& W, const Var& b, int stride = 1, int pad = 1);
Var avg_pool2(const Var& x);
Var upsample2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var add_channel_bias(const Var& x, const Var& bias);  // bias: [C]
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups);

// --- layout -------------------------------------------------------------------------
Var grid_to_tokens(const Var& x);  // [C,H,W] -> [H*W, C]
Var tokens_to_grid(const Var& x, int H, int W);  // [H*W, C] -> [C,H,W]

// --- lookup ------------------------------------------------------------------------
Var embed_row(const Var& table, int row);  // table: [V, D] -> [D]

// Nearest-codebook assignment. z: [T, D] latents, codebook: [N, D].
// Returns z_q as a gather node (gradients flow into the codebook rows) and
// the chosen indices. Ties break toward the lowest index.
Var codebook_gather(const Var& codebook, const std::vector<int>& indices, int D);
std::vector<int> nearest_codes(const Tensor& z, const Tensor& codebook);

}  // namespace egohome::nn
