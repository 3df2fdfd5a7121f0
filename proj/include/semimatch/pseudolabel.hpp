#pragma once

#include <cstdint>
#include <vector>

#include "semimatch/geometry.hpp"
#include "semimatch/keypoints.hpp"
#include "semimatch/tensor.hpp"

namespace semimatch {

// Pseudo-labels are plain tensors by construction: they are built from
// detached probability values, so no gradient can reach the weak branch.
struct PseudoLabel {
    Tensor q;                       // [Nt,Ns], warped + renormalized weak prediction
    std::vector<int> hard_targets;  // flat source cell per target position; -1 if invalid
    std::vector<std::uint8_t> valid;
    int ht = 0, wt = 0, hs = 0, ws = 0;
};

PseudoLabel make_pseudo_label(const Tensor& p_weak, int ht, int wt, int hs, int ws,
                              const WarpField& warp_grid);

// Binary box mask over the target grid from the bounding box of target
// keypoints (pixel coords quantized to cells), expanded by `margin` cells.
// No keypoints: all ones (no foreground prior available).
Tensor foreground_mask(const Keypoints& keypoints, int grid_h, int grid_w, int image_h,
                       int image_w, int margin);

// mask(i) = 1 iff the backward hard match of i's forward hard match lands
// within eps_fb cells of i. p_fwd is [ht*wt, hs*ws], p_bwd is the reverse.
Tensor fb_consistency_mask(const Tensor& p_fwd, const Tensor& p_bwd, int ht, int wt, int hs,
                           int ws, double eps_fb);

// u(i) = exp(row entropy), in [1, Ns].
Tensor uncertainty(const Tensor& p);

// weight(i) = 1/u(i) where max(P(i)) >= tau, else 0. tau in (0,1).
Tensor threshold_weight(const Tensor& p, const Tensor& u, double tau);

struct ConfidenceMask {
    Tensor m;  // [ht,wt] final weights in [0,1]; zero wherever the warp is invalid
    Tensor fg, fb, thres;  // pre-warp components, kept for diagnostics
    double tau = 0;
    double eps_fb = 0;
};

// Elementwise product of the components, warped through the grid-resolution
// field (bilinear, zero fill), clamped to [0,1].
ConfidenceMask compose_confidence(const Tensor& m_mask, const Tensor& m_fb, const Tensor& m_thres,
                                  const WarpField& warp_grid);

}  // namespace semimatch
