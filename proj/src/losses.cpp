#include "semimatch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semimatch {

void LossConfig::validate() const {
    if (!(gamma > 0)) throw std::invalid_argument("LossConfig: gamma must be > 0");
    if (!(tau > 0 && tau < 1)) throw std::invalid_argument("LossConfig: tau must lie in (0,1)");
    if (warmup_fraction < 0 || warmup_fraction > 1) {
        throw std::invalid_argument("LossConfig: warmup_fraction must lie in [0,1]");
    }
    if (lambda_mode == LambdaMode::Fixed && lambda_fixed < 0) {
        throw std::invalid_argument("LossConfig: fixed lambda must be >= 0");
    }
}

int LossConfig::resolve_warmup_epochs(int total_epochs) const {
    if (warmup_epochs >= 0) return std::min(warmup_epochs, total_epochs);
    return static_cast<int>(std::lround(warmup_fraction * total_epochs));
}

namespace {

int quantize_cell(double px, int grid, int image) {
    const int cell = static_cast<int>(std::floor(px * grid / image));
    return std::clamp(cell, 0, grid - 1);
}

}  // namespace

int KeypointAnnotation::target_cell(const KeypointPair& kp) const {
    return quantize_cell(kp.tgt_y, grid_h, image_h) * grid_w + quantize_cell(kp.tgt_x, grid_w, image_w);
}

int KeypointAnnotation::source_cell(const KeypointPair& kp) const {
    return quantize_cell(kp.src_y, grid_h, image_h) * grid_w + quantize_cell(kp.src_x, grid_w, image_w);
}

std::vector<std::uint8_t> KeypointAnnotation::indicator() const {
    std::vector<std::uint8_t> c(static_cast<std::size_t>(grid_h) * grid_w, 0);
    for (const KeypointPair& kp : pairs) c[static_cast<std::size_t>(target_cell(kp))] = 1;
    return c;
}

LossResult supervised_loss(const MatchingProbability& p, const KeypointAnnotation& ann,
                           ReadoutMode mode) {
    LossResult out;
    if (ann.pairs.empty()) {
        out.value = constant(Tensor::scalar(0));
        out.flagged_zero = true;
        return out;
    }
    if (ann.grid_h != p.ht || ann.grid_w != p.wt) {
        throw std::invalid_argument("supervised_loss: annotation grid does not match P");
    }
    const int k = static_cast<int>(ann.pairs.size());
    std::vector<int> rows(static_cast<std::size_t>(k));
    Tensor gt({k, 2});
    for (int i = 0; i < k; ++i) {
        rows[static_cast<std::size_t>(i)] = ann.target_cell(ann.pairs[static_cast<std::size_t>(i)]);
        const int src = ann.source_cell(ann.pairs[static_cast<std::size_t>(i)]);
        gt.at(i, 0) = static_cast<real>(src % p.ws);
        gt.at(i, 1) = static_cast<real>(src / p.ws);
    }

    if (mode == ReadoutMode::Hard) {
        const std::vector<int> hard = hard_readout(p.values.value());
        double total = 0;
        for (int i = 0; i < k; ++i) {
            const int j = hard[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
            const double dx = j % p.ws - static_cast<double>(gt.at(i, 0));
            const double dy = j / p.ws - static_cast<double>(gt.at(i, 1));
            total += std::sqrt(dx * dx + dy * dy);
        }
        out.value = constant(Tensor::scalar(static_cast<real>(total / k)));
        return out;
    }

    Var coords = gather_rows(soft_readout(p), rows);           // [k,2]
    Var diff = sub(coords, constant(gt));
    Var dist = sqrt_(sum_lastdim(mul(diff, diff)));            // [k]
    out.value = scale(sum_all(dist), real(1) / static_cast<real>(k));
    return out;
}

namespace {

// Per-position weights: confidence zeroed where the pseudo-label is invalid.
std::pair<Tensor, double> effective_weights(const PseudoLabel& pseudo, const ConfidenceMask& m) {
    const int nt = pseudo.ht * pseudo.wt;
    if (m.m.size() != nt) {
        throw std::invalid_argument("unsupervised loss: confidence grid does not match pseudo-label");
    }
    Tensor w({nt});
    double sum = 0;
    for (int i = 0; i < nt; ++i) {
        const real v = pseudo.hard_targets[static_cast<std::size_t>(i)] >= 0 ? m.m[i] : real(0);
        w[i] = v;
        sum += static_cast<double>(v);
    }
    return {std::move(w), sum};
}

}  // namespace

LossResult contrastive_unsup_loss(const CostVolume& refined_strong, const PseudoLabel& pseudo,
                                  const ConfidenceMask& m, const LossConfig& config) {
    config.validate();
    if (!refined_strong.aggregated) {
        throw std::invalid_argument("contrastive_unsup_loss: expected the aggregated cost volume");
    }
    if (refined_strong.ht != pseudo.ht || refined_strong.wt != pseudo.wt ||
        refined_strong.hs != pseudo.hs || refined_strong.ws != pseudo.ws) {
        throw std::invalid_argument("contrastive_unsup_loss: grid mismatch");
    }
    auto [weights, weight_sum] = effective_weights(pseudo, m);
    LossResult out;
    out.weight_sum = weight_sum;
    if (weight_sum <= 0) {
        out.value = constant(Tensor::scalar(0));
        out.flagged_zero = true;  // no confident pseudo-labels
        return out;
    }
    Var scores = scale(refined_strong.values, static_cast<real>(1.0 / config.gamma));
    Var picked = pick_per_row(log_softmax_lastdim(scores), pseudo.hard_targets);  // [Nt]
    Var weighted = mul(picked, constant(weights));
    const real norm = config.normalize_unsup ? static_cast<real>(-1.0 / weight_sum) : real(-1);
    out.value = scale(sum_all(weighted), norm);
    return out;
}

LossResult aepe_unsup_loss(const MatchingProbability& p_strong, const PseudoLabel& pseudo,
                           const ConfidenceMask& m, const LossConfig& config) {
    config.validate();
    if (p_strong.ht != pseudo.ht || p_strong.wt != pseudo.wt || p_strong.hs != pseudo.hs ||
        p_strong.ws != pseudo.ws) {
        throw std::invalid_argument("aepe_unsup_loss: grid mismatch");
    }
    auto [weights, weight_sum] = effective_weights(pseudo, m);
    LossResult out;
    out.weight_sum = weight_sum;
    if (weight_sum <= 0) {
        out.value = constant(Tensor::scalar(0));
        out.flagged_zero = true;
        return out;
    }
    const int nt = pseudo.ht * pseudo.wt;
    Tensor target_coords({nt, 2});
    for (int i = 0; i < nt; ++i) {
        const int j = std::max(0, pseudo.hard_targets[static_cast<std::size_t>(i)]);
        target_coords.at(i, 0) = static_cast<real>(j % pseudo.ws);
        target_coords.at(i, 1) = static_cast<real>(j / pseudo.ws);
    }
    Var diff = sub(soft_readout(p_strong), constant(target_coords));  // [Nt,2]
    Var dist = sqrt_(sum_lastdim(mul(diff, diff)));
    Var weighted = mul(dist, constant(weights));
    const real norm = config.normalize_unsup ? static_cast<real>(1.0 / weight_sum) : real(1);
    out.value = scale(sum_all(weighted), norm);
    return out;
}

LossResult selfsup_loss(const MatchingProbability& p, const WarpField& warp_grid) {
    if (warp_grid.height != p.ht || warp_grid.width != p.wt) {
        throw std::invalid_argument("selfsup_loss: warp resolution does not match P");
    }
    // The warp maps source-grid cells to target coordinates. Each target
    // cell takes the nearest mapped source cell as its one-hot label; cells
    // with no preimage within 0.75 cells carry no loss.
    const int nt = p.ht * p.wt;
    std::vector<int> target_of_source(static_cast<std::size_t>(nt), -1);
    std::vector<int> labels(static_cast<std::size_t>(nt), -1);
    std::vector<double> best_dist(static_cast<std::size_t>(nt), 0.75);
    for (int sy = 0; sy < warp_grid.height; ++sy)
        for (int sx = 0; sx < warp_grid.width; ++sx) {
            if (warp_grid.valid.at(sy, sx) == real(0)) continue;
            const double mx = static_cast<double>(warp_grid.coords.at(0, sy, sx));
            const double my = static_cast<double>(warp_grid.coords.at(1, sy, sx));
            const int tx = static_cast<int>(std::lround(mx));
            const int ty = static_cast<int>(std::lround(my));
            if (tx < 0 || tx >= p.wt || ty < 0 || ty >= p.ht) continue;
            const double d = std::hypot(mx - tx, my - ty);
            const int i = ty * p.wt + tx;
            if (d < best_dist[static_cast<std::size_t>(i)]) {
                best_dist[static_cast<std::size_t>(i)] = d;
                labels[static_cast<std::size_t>(i)] = sy * warp_grid.width + sx;
            }
        }
    int active = 0;
    Tensor weights({nt});
    for (int i = 0; i < nt; ++i)
        if (labels[static_cast<std::size_t>(i)] >= 0) {
            weights[i] = real(1);
            ++active;
        }
    LossResult out;
    out.weight_sum = active;
    if (active == 0) {
        out.value = constant(Tensor::scalar(0));
        out.flagged_zero = true;
        return out;
    }
    Var picked = pick_per_row(log_(p.values), labels);
    out.value = scale(sum_all(mul(picked, constant(weights))), real(-1) / static_cast<real>(active));
    return out;
}

double lambda_value(double detached_sup, double detached_unsup, bool unsup_flagged,
                    const LossConfig& config, bool in_warmup) {
    if (in_warmup || unsup_flagged) return 0.0;
    if (config.lambda_mode == LambdaMode::Fixed) return config.lambda_fixed;
    if (detached_unsup < 1e-8) return 0.0;  // division guard
    return detached_sup / detached_unsup;
}

TotalLoss total_loss(const LossResult& sup, const LossResult& unsup, const LossConfig& config,
                     bool in_warmup) {
    config.validate();
    TotalLoss out;
    out.lambda = lambda_value(static_cast<double>(sup.value.value().item()),
                              static_cast<double>(unsup.value.value().item()), unsup.flagged_zero,
                              config, in_warmup);
    out.value = add(sup.value, scale(unsup.value, static_cast<real>(out.lambda)));
    return out;
}

}  // namespace semimatch
