#include "semimatch/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semimatch/model.hpp"

namespace semimatch {

PseudoLabel make_pseudo_label(const Tensor& p_weak, int ht, int wt, int hs, int ws,
                              const WarpField& warp_grid) {
    if (p_weak.rank() != 2 || p_weak.extent(0) != ht * wt || p_weak.extent(1) != hs * ws) {
        throw std::invalid_argument("make_pseudo_label: probability shape " + p_weak.shape_str() +
                                    " does not match grids");
    }
    PseudoLabel out;
    out.ht = ht;
    out.wt = wt;
    out.hs = hs;
    out.ws = ws;
    WarpedProbability warped = warp_probability(p_weak, ht, wt, warp_grid);
    out.q = std::move(warped.values);
    out.valid = std::move(warped.valid);
    out.hard_targets = hard_readout(out.q);
    for (int i = 0; i < ht * wt; ++i) {
        if (!out.valid[static_cast<std::size_t>(i)]) out.hard_targets[static_cast<std::size_t>(i)] = -1;
    }
    return out;
}

Tensor foreground_mask(const Keypoints& keypoints, int grid_h, int grid_w, int image_h,
                       int image_w, int margin) {
    if (grid_h <= 0 || grid_w <= 0 || image_h <= 0 || image_w <= 0) {
        throw std::invalid_argument("foreground_mask: non-positive dimensions");
    }
    Tensor mask({grid_h, grid_w});
    if (keypoints.empty()) {
        for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = real(1);
        return mask;
    }
    auto to_cell = [](double px, int grid, int image) {
        int cell = static_cast<int>(std::floor(px * grid / image));
        return std::clamp(cell, 0, grid - 1);
    };
    int x0 = grid_w, x1 = -1, y0 = grid_h, y1 = -1;
    for (const KeypointPair& kp : keypoints) {
        const int cx = to_cell(kp.tgt_x, grid_w, image_w);
        const int cy = to_cell(kp.tgt_y, grid_h, image_h);
        x0 = std::min(x0, cx);
        x1 = std::max(x1, cx);
        y0 = std::min(y0, cy);
        y1 = std::max(y1, cy);
    }
    x0 = std::max(0, x0 - margin);
    y0 = std::max(0, y0 - margin);
    x1 = std::min(grid_w - 1, x1 + margin);
    y1 = std::min(grid_h - 1, y1 + margin);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) mask.at(y, x) = real(1);
    return mask;
}

Tensor fb_consistency_mask(const Tensor& p_fwd, const Tensor& p_bwd, int ht, int wt, int hs,
                           int ws, double eps_fb) {
    if (p_fwd.rank() != 2 || p_fwd.extent(0) != ht * wt || p_fwd.extent(1) != hs * ws) {
        throw std::invalid_argument("fb_consistency_mask: forward shape " + p_fwd.shape_str() +
                                    " does not match grids");
    }
    if (p_bwd.rank() != 2 || p_bwd.extent(0) != hs * ws || p_bwd.extent(1) != ht * wt) {
        throw std::invalid_argument("fb_consistency_mask: backward shape " + p_bwd.shape_str() +
                                    " must be the transpose layout of the forward grids");
    }
    const std::vector<int> fwd = hard_readout(p_fwd);
    const std::vector<int> bwd = hard_readout(p_bwd);
    Tensor mask({ht, wt});
    for (int y = 0; y < ht; ++y)
        for (int x = 0; x < wt; ++x) {
            const int i = y * wt + x;
            const int j = fwd[static_cast<std::size_t>(i)];
            const int back = bwd[static_cast<std::size_t>(j)];
            const double dx = back % wt - x;
            const double dy = back / wt - y;
            mask.at(y, x) = std::sqrt(dx * dx + dy * dy) <= eps_fb ? real(1) : real(0);
        }
    return mask;
}

Tensor uncertainty(const Tensor& p) {
    if (p.rank() != 2) throw std::invalid_argument("uncertainty: expected rank-2, got " + p.shape_str());
    const int rows = p.extent(0), cols = p.extent(1);
    Tensor u({rows});
    for (int i = 0; i < rows; ++i) {
        double entropy = 0;
        for (int j = 0; j < cols; ++j) {
            const double v = static_cast<double>(p.at(i, j));
            if (v > 0) entropy -= v * std::log(v);
        }
        u[i] = static_cast<real>(std::exp(std::max(0.0, entropy)));
    }
    return u;
}

Tensor threshold_weight(const Tensor& p, const Tensor& u, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw std::invalid_argument("threshold_weight: tau must lie in (0,1)");
    }
    const int rows = p.extent(0), cols = p.extent(1);
    if (u.size() != rows) {
        throw std::invalid_argument("threshold_weight: uncertainty length " + u.shape_str() +
                                    " does not match rows of " + p.shape_str());
    }
    Tensor w({rows});
    for (int i = 0; i < rows; ++i) {
        real mx = 0;
        for (int j = 0; j < cols; ++j) mx = std::max(mx, p.at(i, j));
        w[i] = mx >= static_cast<real>(tau) ? real(1) / u[i] : real(0);
    }
    return w;
}

ConfidenceMask compose_confidence(const Tensor& m_mask, const Tensor& m_fb, const Tensor& m_thres,
                                  const WarpField& warp_grid) {
    const std::vector<int> expected = {warp_grid.height, warp_grid.width};
    require_shape(m_mask, expected, "compose_confidence M_mask");
    require_shape(m_fb, expected, "compose_confidence M_fb");
    require_shape(m_thres, expected, "compose_confidence M_thres");

    ConfidenceMask out;
    out.fg = m_mask;
    out.fb = m_fb;
    out.thres = m_thres;

    Tensor product({1, warp_grid.height, warp_grid.width});
    for (int y = 0; y < warp_grid.height; ++y)
        for (int x = 0; x < warp_grid.width; ++x)
            product.at(0, y, x) = m_mask.at(y, x) * m_fb.at(y, x) * m_thres.at(y, x);

    Tensor warped = grid_sample(product, warp_grid);
    out.m = Tensor({warp_grid.height, warp_grid.width});
    for (int y = 0; y < warp_grid.height; ++y)
        for (int x = 0; x < warp_grid.width; ++x) {
            real v = warped.at(0, y, x);
            if (warp_grid.valid.at(y, x) == real(0)) v = real(0);
            out.m.at(y, x) = std::min(real(1), std::max(real(0), v));
        }
    return out;
}

}  // namespace semimatch
