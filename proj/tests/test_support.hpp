#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "semimatch/autodiff.hpp"
#include "semimatch/rng.hpp"
#include "semimatch/tensor.hpp"

namespace semimatch::testing {

inline Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.uniform(lo, hi));
    return t;
}

// Rows drawn from a Dirichlet-ish construction: positive entries, sum 1.
inline Tensor random_row_stochastic(int rows, int cols, Rng& rng) {
    Tensor t({rows, cols});
    for (int i = 0; i < rows; ++i) {
        real sum = 0;
        for (int j = 0; j < cols; ++j) {
            const real v = static_cast<real>(-std::log(rng.uniform() + 1e-12));
            t.at(i, j) = v;
            sum += v;
        }
        for (int j = 0; j < cols; ++j) t.at(i, j) /= sum;
    }
    return t;
}

using GraphBuilder = std::function<Var(const std::vector<Var>&)>;

// Relative error with an absolute floor: entries below the floor are
// saturated-softmax tails whose central-difference estimate is dominated by
// f(x) roundoff (~1e-10 at 64-bit), so they are held to an absolute
// tolerance of tol * floor instead of a meaningless ratio of noise terms.
inline double rel_err(double a, double b, double floor = 1e-3) {
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / denom;
}

// Central finite differences on every element of every leaf, compared to the
// analytic gradients from one backward pass. Returns the worst relative
// error; the builder must be a pure function of the leaf values.
inline double max_grad_rel_err(const GraphBuilder& build, std::vector<Tensor> leaf_values,
                               double h = 1e-5) {
    std::vector<Var> leaves;
    leaves.reserve(leaf_values.size());
    for (const Tensor& t : leaf_values) leaves.push_back(leaf(t, true));
    Var loss = build(leaves);
    backward(loss);

    auto eval_loss = [&](const std::vector<Tensor>& values) {
        std::vector<Var> frozen;
        frozen.reserve(values.size());
        for (const Tensor& t : values) frozen.push_back(leaf(t, false));
        return static_cast<double>(build(frozen).value().item());
    };

    double worst = 0.0;
    for (std::size_t k = 0; k < leaf_values.size(); ++k) {
        for (std::int64_t i = 0; i < leaf_values[k].size(); ++i) {
            const real keep = leaf_values[k][i];
            leaf_values[k][i] = keep + static_cast<real>(h);
            const double up = eval_loss(leaf_values);
            leaf_values[k][i] = keep - static_cast<real>(h);
            const double dn = eval_loss(leaf_values);
            leaf_values[k][i] = keep;
            const double numeric = (up - dn) / (2.0 * h);
            const double analytic = static_cast<double>(leaves[k].grad()[i]);
            worst = std::max(worst, rel_err(analytic, numeric));
        }
    }
    return worst;
}

}  // namespace semimatch::testing
