#pragma once

#include <cmath>
#include <functional>

#include "egohome/nn/autograd.hpp"

namespace egohome::testsupport {

// Central finite differences against reverse-mode gradients on selected
// elements of one leaf. `loss_value` must rebuild the graph from the current
// leaf values and return the scalar loss.
struct GradCheckResult {
    real max_rel_err = 0;
    int checked = 0;
};

inline GradCheckResult grad_check(const std::function<real()>& loss_value,
                                  const std::function<nn::Var()>& loss_node, const nn::Var& param,
                                  const std::vector<size_t>& indices, real h = 1e-6) {
    using namespace egohome::nn;
    GradCheckResult res;
    Var loss = loss_node();
    backward(loss);
    Tensor grad = param->grad;
    if (grad.shape != param->val.shape) grad = Tensor::zeros(param->val.shape);
    for (size_t idx : indices) {
        const real keep = param->val.data[idx];
        param->val.data[idx] = keep + h;
        const real up = loss_value();
        param->val.data[idx] = keep - h;
        const real down = loss_value();
        param->val.data[idx] = keep;
        const real fd = (up - down) / (2 * h);
        const real an = grad.data[idx];
        const real denom = std::max<real>({std::fabs(fd), std::fabs(an), 1e-8});
        res.max_rel_err = std::max(res.max_rel_err, std::fabs(fd - an) / denom);
        ++res.checked;
    }
    param->grad = Tensor();
    return res;
}

}  // namespace egohome::testsupport
