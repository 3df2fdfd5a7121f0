#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "semimatch/autodiff.hpp"
#include "semimatch/tensor.hpp"

namespace semimatch {

// Warp fields follow the backward-warping convention: for each OUTPUT pixel
// the field stores the continuous INPUT coordinate to sample. Parametric
// transforms are defined on normalized [0,1]^2 coordinates (pixel centers at
// (x+0.5)/W) so the same parameters materialize consistently at image and
// probability-grid resolutions.

struct WarpField {
    int height = 0;
    int width = 0;
    Tensor coords;  // [2,H,W]: plane 0 = source x, plane 1 = source y, pixel units
    Tensor valid;   // [H,W], 1 where the source coordinate is inside [0,W-1]x[0,H-1]
};

WarpField identity_warp(int height, int width);

// Row-major 2x3 matrix acting on homogeneous normalized coords (u, v, 1).
struct AffineParams {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};
};

// Identity perturbed by at most `scale` per component: rotation bounded by
// scale*pi/4, log-scale and shear by scale, translation by scale of the
// (normalized) extent. Pure function of the seed.
AffineParams random_affine_params(std::uint64_t seed, double scale);
AffineParams affine_product(const AffineParams& outer, const AffineParams& inner);  // outer after inner lookup: result(u) = inner(outer(u))
AffineParams affine_inverse(const AffineParams& a);
WarpField materialize_affine(const AffineParams& a, int height, int width);

// Pixel-space 2x3 matrix materialization, mainly for tests and oracles:
// coords(y,x) = M * (x, y, 1).
WarpField affine_warp_pixels(const std::array<double, 6>& m, int height, int width);

WarpField random_affine(std::uint64_t seed, double scale, int height, int width);

// Thin-plate spline on a regular control grid. Displacements are drawn per
// control point within [-scale, scale] of the normalized extent; the kernel
// U(r) = r^2 log(r^2) interpolates them exactly at the control points.
struct TpsParams {
    int grid = 3;
    std::vector<double> ctrl_x, ctrl_y;  // normalized control coordinates
    std::vector<double> disp_x, disp_y;  // normalized displacements at controls
    std::vector<double> wx, wy;          // solved kernel weights
    std::array<double, 3> ax{0, 0, 0};   // affine part of x displacement
    std::array<double, 3> ay{0, 0, 0};
};

TpsParams random_tps_params(std::uint64_t seed, double scale, int grid);
// Solves the interpolation system; throws on a degenerate configuration.
TpsParams tps_from_displacements(std::vector<double> ctrl_x, std::vector<double> ctrl_y,
                                 std::vector<double> disp_x, std::vector<double> disp_y);
// Normalized displacement of the interpolant at (u, v).
void tps_displacement(const TpsParams& p, double u, double v, double& du, double& dv);
WarpField materialize_tps(const TpsParams& p, int height, int width);
WarpField random_tps(std::uint64_t seed, double scale, int grid, int height, int width);

// result(p) = inner(outer(p)); inner's coordinate planes are sampled
// bilinearly at outer's (continuous) coordinates. Validity is the
// conjunction, additionally requiring the final coordinate in bounds.
WarpField compose(const WarpField& outer, const WarpField& inner);

// Bilinear sampling of [C,H,W] through the warp; invalid cells yield zero.
Tensor grid_sample(const Tensor& img, const WarpField& warp);
Var grid_sample(const Var& img, const WarpField& warp);

// Resamples the target-position axis of a row-stochastic [Nt,Ns] matrix
// through a warp on the (ht, wt) target grid, then renormalizes rows.
// Rows at invalid warp cells (or with no mass after zero-fill) are zeroed
// and flagged invalid.
struct WarpedProbability {
    Tensor values;                    // [Nt,Ns]
    std::vector<std::uint8_t> valid;  // per target position
};
WarpedProbability warp_probability(const Tensor& p, int ht, int wt, const WarpField& warp);

// Hard-argmax displacement field [2,ht,wt] in source-grid cells.
Tensor flow_from_probability(const Tensor& p, int ht, int wt, int hs, int ws);

// Dump-format round trip: [3,H,W] (x plane, y plane, validity plane).
Tensor warp_to_tensor(const WarpField& w);
WarpField warp_from_tensor(const Tensor& t);

}  // namespace semimatch
