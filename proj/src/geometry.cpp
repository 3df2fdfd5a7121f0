#include "semimatch/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include "semimatch/rng.hpp"

namespace semimatch {

namespace {

bool coord_in_bounds(double x, double y, int height, int width) {
    return x >= 0.0 && x <= width - 1.0 && y >= 0.0 && y <= height - 1.0;
}

WarpField make_field(int height, int width) {
    WarpField f;
    f.height = height;
    f.width = width;
    f.coords = Tensor({2, height, width});
    f.valid = Tensor({height, width});
    return f;
}

void set_coord(WarpField& f, int y, int x, double sx, double sy) {
    f.coords.at(0, y, x) = static_cast<real>(sx);
    f.coords.at(1, y, x) = static_cast<real>(sy);
    f.valid.at(y, x) = coord_in_bounds(sx, sy, f.height, f.width) ? real(1) : real(0);
}

double to_norm(int px, int extent) { return (px + 0.5) / extent; }
double from_norm(double u, int extent) { return u * extent - 0.5; }

}  // namespace

WarpField identity_warp(int height, int width) {
    WarpField f = make_field(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) set_coord(f, y, x, x, y);
    return f;
}

AffineParams random_affine_params(std::uint64_t seed, double scale) {
    if (scale < 0) throw std::invalid_argument("random_affine_params: scale must be >= 0");
    Rng rng(mix_seed({seed, 0xAFF1EULL}));
    const double theta = rng.uniform(-1.0, 1.0) * scale * (3.14159265358979323846 / 4.0);
    const double log_sx = rng.uniform(-1.0, 1.0) * scale;
    const double log_sy = rng.uniform(-1.0, 1.0) * scale;
    const double shear = rng.uniform(-1.0, 1.0) * scale;
    const double tx = rng.uniform(-1.0, 1.0) * scale;
    const double ty = rng.uniform(-1.0, 1.0) * scale;

    const double ct = std::cos(theta), st = std::sin(theta);
    const double sx = std::exp(log_sx), sy = std::exp(log_sy);
    // M = R(theta) * Shear(k) * Scale(sx, sy), applied about the center.
    const double m00 = ct * sx + (-st) * 0.0;
    const double m01 = ct * (shear * sy) - st * sy;
    const double m10 = st * sx;
    const double m11 = st * (shear * sy) + ct * sy;

    AffineParams p;
    const double cx = 0.5, cy = 0.5;
    p.m = {m00, m01, cx - (m00 * cx + m01 * cy) + tx,
           m10, m11, cy - (m10 * cx + m11 * cy) + ty};
    return p;
}

AffineParams affine_product(const AffineParams& outer, const AffineParams& inner) {
    // Lookup chaining: result(u) = inner(outer(u)).
    const auto& a = inner.m;
    const auto& b = outer.m;
    AffineParams r;
    r.m = {a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4], a[0] * b[2] + a[1] * b[5] + a[2],
           a[3] * b[0] + a[4] * b[3], a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]};
    return r;
}

AffineParams affine_inverse(const AffineParams& a) {
    const double det = a.m[0] * a.m[4] - a.m[1] * a.m[3];
    if (std::abs(det) < 1e-12) throw std::invalid_argument("affine_inverse: singular matrix");
    const double inv = 1.0 / det;
    AffineParams r;
    r.m[0] = a.m[4] * inv;
    r.m[1] = -a.m[1] * inv;
    r.m[3] = -a.m[3] * inv;
    r.m[4] = a.m[0] * inv;
    r.m[2] = -(r.m[0] * a.m[2] + r.m[1] * a.m[5]);
    r.m[5] = -(r.m[3] * a.m[2] + r.m[4] * a.m[5]);
    return r;
}

WarpField materialize_affine(const AffineParams& a, int height, int width) {
    WarpField f = make_field(height, width);
    for (int y = 0; y < height; ++y) {
        const double v = to_norm(y, height);
        for (int x = 0; x < width; ++x) {
            const double u = to_norm(x, width);
            const double su = a.m[0] * u + a.m[1] * v + a.m[2];
            const double sv = a.m[3] * u + a.m[4] * v + a.m[5];
            set_coord(f, y, x, from_norm(su, width), from_norm(sv, height));
        }
    }
    return f;
}

WarpField affine_warp_pixels(const std::array<double, 6>& m, int height, int width) {
    WarpField f = make_field(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double sx = m[0] * x + m[1] * y + m[2];
            const double sy = m[3] * x + m[4] * y + m[5];
            set_coord(f, y, x, sx, sy);
        }
    return f;
}

WarpField random_affine(std::uint64_t seed, double scale, int height, int width) {
    return materialize_affine(random_affine_params(seed, scale), height, width);
}

namespace {

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

// Partial-pivot Gaussian elimination on an n x (n+1) augmented system.
std::vector<double> solve_dense(std::vector<double> aug, int n) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        double best = std::abs(aug[static_cast<std::size_t>(col) * (n + 1) + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(aug[static_cast<std::size_t>(r) * (n + 1) + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < 1e-12) throw std::runtime_error("degenerate TPS control configuration");
        if (pivot != col) {
            for (int j = 0; j <= n; ++j)
                std::swap(aug[static_cast<std::size_t>(pivot) * (n + 1) + j],
                          aug[static_cast<std::size_t>(col) * (n + 1) + j]);
        }
        const double diag = aug[static_cast<std::size_t>(col) * (n + 1) + col];
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double factor = aug[static_cast<std::size_t>(r) * (n + 1) + col] / diag;
            if (factor == 0.0) continue;
            for (int j = col; j <= n; ++j)
                aug[static_cast<std::size_t>(r) * (n + 1) + j] -=
                    factor * aug[static_cast<std::size_t>(col) * (n + 1) + j];
        }
    }
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r)
        x[static_cast<std::size_t>(r)] = aug[static_cast<std::size_t>(r) * (n + 1) + n] /
                                         aug[static_cast<std::size_t>(r) * (n + 1) + r];
    return x;
}

}  // namespace

TpsParams tps_from_displacements(std::vector<double> ctrl_x, std::vector<double> ctrl_y,
                                 std::vector<double> disp_x, std::vector<double> disp_y) {
    const int n = static_cast<int>(ctrl_x.size());
    if (n < 3) throw std::invalid_argument("tps_from_displacements: need >= 3 control points");
    if (ctrl_y.size() != ctrl_x.size() || disp_x.size() != ctrl_x.size() ||
        disp_y.size() != ctrl_x.size()) {
        throw std::invalid_argument("tps_from_displacements: array length mismatch");
    }
    const int dim = n + 3;
    // [K P; P^T 0] [w; a] = [d; 0], solved per displacement axis.
    std::vector<double> base(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double dx = ctrl_x[static_cast<std::size_t>(i)] - ctrl_x[static_cast<std::size_t>(j)];
            const double dy = ctrl_y[static_cast<std::size_t>(i)] - ctrl_y[static_cast<std::size_t>(j)];
            base[static_cast<std::size_t>(i) * dim + j] = tps_kernel(dx * dx + dy * dy);
        }
        base[static_cast<std::size_t>(i) * dim + n] = 1.0;
        base[static_cast<std::size_t>(i) * dim + n + 1] = ctrl_x[static_cast<std::size_t>(i)];
        base[static_cast<std::size_t>(i) * dim + n + 2] = ctrl_y[static_cast<std::size_t>(i)];
        base[static_cast<std::size_t>(n) * dim + i] = 1.0;
        base[(static_cast<std::size_t>(n) + 1) * dim + i] = ctrl_x[static_cast<std::size_t>(i)];
        base[(static_cast<std::size_t>(n) + 2) * dim + i] = ctrl_y[static_cast<std::size_t>(i)];
    }

    TpsParams p;
    p.ctrl_x = std::move(ctrl_x);
    p.ctrl_y = std::move(ctrl_y);
    p.disp_x = std::move(disp_x);
    p.disp_y = std::move(disp_y);
    for (int axis = 0; axis < 2; ++axis) {
        std::vector<double> aug(static_cast<std::size_t>(dim) * (dim + 1), 0.0);
        const std::vector<double>& d = axis == 0 ? p.disp_x : p.disp_y;
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < dim; ++c)
                aug[static_cast<std::size_t>(r) * (dim + 1) + c] = base[static_cast<std::size_t>(r) * dim + c];
            aug[static_cast<std::size_t>(r) * (dim + 1) + dim] = r < n ? d[static_cast<std::size_t>(r)] : 0.0;
        }
        std::vector<double> sol = solve_dense(std::move(aug), dim);
        std::vector<double> w(sol.begin(), sol.begin() + n);
        std::array<double, 3> a = {sol[static_cast<std::size_t>(n)], sol[static_cast<std::size_t>(n) + 1],
                                   sol[static_cast<std::size_t>(n) + 2]};
        if (axis == 0) {
            p.wx = std::move(w);
            p.ax = a;
        } else {
            p.wy = std::move(w);
            p.ay = a;
        }
    }
    return p;
}

TpsParams random_tps_params(std::uint64_t seed, double scale, int grid) {
    if (grid < 2) throw std::invalid_argument("random_tps_params: grid must be >= 2 per axis");
    if (scale < 0) throw std::invalid_argument("random_tps_params: scale must be >= 0");
    Rng rng(mix_seed({seed, 0x7957ULL}));
    std::vector<double> cx, cy, dx, dy;
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            cx.push_back(static_cast<double>(gx) / (grid - 1));
            cy.push_back(static_cast<double>(gy) / (grid - 1));
            dx.push_back(rng.uniform(-1.0, 1.0) * scale);
            dy.push_back(rng.uniform(-1.0, 1.0) * scale);
        }
    return tps_from_displacements(std::move(cx), std::move(cy), std::move(dx), std::move(dy));
}

void tps_displacement(const TpsParams& p, double u, double v, double& du, double& dv) {
    du = p.ax[0] + p.ax[1] * u + p.ax[2] * v;
    dv = p.ay[0] + p.ay[1] * u + p.ay[2] * v;
    const int n = static_cast<int>(p.ctrl_x.size());
    for (int k = 0; k < n; ++k) {
        const double ex = u - p.ctrl_x[static_cast<std::size_t>(k)];
        const double ey = v - p.ctrl_y[static_cast<std::size_t>(k)];
        const double kv = tps_kernel(ex * ex + ey * ey);
        du += p.wx[static_cast<std::size_t>(k)] * kv;
        dv += p.wy[static_cast<std::size_t>(k)] * kv;
    }
}

WarpField materialize_tps(const TpsParams& p, int height, int width) {
    WarpField f = make_field(height, width);
    for (int y = 0; y < height; ++y) {
        const double v = to_norm(y, height);
        for (int x = 0; x < width; ++x) {
            const double u = to_norm(x, width);
            double du, dv;
            tps_displacement(p, u, v, du, dv);
            set_coord(f, y, x, from_norm(u + du, width), from_norm(v + dv, height));
        }
    }
    return f;
}

WarpField random_tps(std::uint64_t seed, double scale, int grid, int height, int width) {
    return materialize_tps(random_tps_params(seed, scale, grid), height, width);
}

WarpField compose(const WarpField& outer, const WarpField& inner) {
    if (outer.height != inner.height || outer.width != inner.width) {
        throw std::invalid_argument("compose: resolution mismatch, " +
                                    std::to_string(outer.width) + "x" + std::to_string(outer.height) +
                                    " vs " + std::to_string(inner.width) + "x" +
                                    std::to_string(inner.height));
    }
    const int h = outer.height, w = outer.width;
    WarpField f = make_field(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (outer.valid.at(y, x) == real(0)) {
                set_coord(f, y, x, -1.0, -1.0);
                f.valid.at(y, x) = real(0);
                continue;
            }
            const double qx = static_cast<double>(outer.coords.at(0, y, x));
            const double qy = static_cast<double>(outer.coords.at(1, y, x));
            const int x0 = static_cast<int>(std::floor(qx));
            const int y0 = static_cast<int>(std::floor(qy));
            const double fx = qx - x0, fy = qy - y0;
            const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            // Coordinates interpolate from whatever taps exist; validity is
            // the conjunction over contributing taps.
            double sx = 0, sy = 0;
            bool taps_exist = true, taps_valid = true;
            for (int k = 0; k < 4; ++k) {
                if (wgt[k] == 0.0) continue;
                if (xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h) {
                    taps_exist = false;
                    break;
                }
                if (inner.valid.at(ys[k], xs[k]) == real(0)) taps_valid = false;
                sx += wgt[k] * static_cast<double>(inner.coords.at(0, ys[k], xs[k]));
                sy += wgt[k] * static_cast<double>(inner.coords.at(1, ys[k], xs[k]));
            }
            if (!taps_exist) {
                set_coord(f, y, x, -1.0, -1.0);
                f.valid.at(y, x) = real(0);
            } else {
                set_coord(f, y, x, sx, sy);
                if (!taps_valid) f.valid.at(y, x) = real(0);
            }
        }
    return f;
}

Tensor grid_sample(const Tensor& img, const WarpField& warp) {
    return grid_sample(constant(img), warp).value();
}

Var grid_sample(const Var& img, const WarpField& warp) {
    const Tensor& x = img.value();
    if (x.rank() != 3 || x.extent(1) != warp.height || x.extent(2) != warp.width) {
        throw std::invalid_argument("grid_sample: warp " + std::to_string(warp.width) + "x" +
                                    std::to_string(warp.height) + " does not match image " +
                                    x.shape_str());
    }
    return grid_sample_op(img, warp.coords, warp.valid);
}

WarpedProbability warp_probability(const Tensor& p, int ht, int wt, const WarpField& warp) {
    if (p.rank() != 2 || p.extent(0) != ht * wt) {
        throw std::invalid_argument("warp_probability: expected [" + std::to_string(ht * wt) +
                                    ",Ns] matrix, got " + p.shape_str());
    }
    if (warp.height != ht || warp.width != wt) {
        throw std::invalid_argument("warp_probability: warp resolution mismatch");
    }
    const int nt = ht * wt;
    const int ns = p.extent(1);
    WarpedProbability out;
    out.values = Tensor({nt, ns});
    out.valid.assign(static_cast<std::size_t>(nt), 0);
    for (int y = 0; y < ht; ++y)
        for (int x = 0; x < wt; ++x) {
            const int i = y * wt + x;
            if (warp.valid.at(y, x) == real(0)) continue;
            const double sx = static_cast<double>(warp.coords.at(0, y, x));
            const double sy = static_cast<double>(warp.coords.at(1, y, x));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            real* qrow = out.values.data() + static_cast<std::size_t>(i) * ns;
            for (int k = 0; k < 4; ++k) {
                if (wgt[k] == 0.0 || xs[k] < 0 || xs[k] >= wt || ys[k] < 0 || ys[k] >= ht) continue;
                const real* prow = p.data() + (static_cast<std::size_t>(ys[k]) * wt + xs[k]) * ns;
                const real wk = static_cast<real>(wgt[k]);
                for (int j = 0; j < ns; ++j) qrow[j] += wk * prow[j];
            }
            real sum = 0;
            for (int j = 0; j < ns; ++j) sum += qrow[j];
            if (sum > real(1e-12)) {
                const real inv = real(1) / sum;
                for (int j = 0; j < ns; ++j) qrow[j] *= inv;
                out.valid[static_cast<std::size_t>(i)] = 1;
            } else {
                for (int j = 0; j < ns; ++j) qrow[j] = real(0);
            }
        }
    return out;
}

Tensor flow_from_probability(const Tensor& p, int ht, int wt, int hs, int ws) {
    if (p.rank() != 2 || p.extent(0) != ht * wt || p.extent(1) != hs * ws) {
        throw std::invalid_argument("flow_from_probability: shape " + p.shape_str() +
                                    " does not match grids");
    }
    Tensor flow({2, ht, wt});
    for (int y = 0; y < ht; ++y)
        for (int x = 0; x < wt; ++x) {
            const int i = y * wt + x;
            const real* row = p.data() + static_cast<std::size_t>(i) * hs * ws;
            int best = 0;
            for (int j = 1; j < hs * ws; ++j)
                if (row[j] > row[best]) best = j;
            flow.at(0, y, x) = static_cast<real>(best % ws - x);
            flow.at(1, y, x) = static_cast<real>(best / ws - y);
        }
    return flow;
}

Tensor warp_to_tensor(const WarpField& w) {
    Tensor t({3, w.height, w.width});
    for (int y = 0; y < w.height; ++y)
        for (int x = 0; x < w.width; ++x) {
            t.at(0, y, x) = w.coords.at(0, y, x);
            t.at(1, y, x) = w.coords.at(1, y, x);
            t.at(2, y, x) = w.valid.at(y, x);
        }
    return t;
}

WarpField warp_from_tensor(const Tensor& t) {
    if (t.rank() != 3 || t.extent(0) != 3) {
        throw std::invalid_argument("warp_from_tensor: expected [3,H,W], got " + t.shape_str());
    }
    WarpField w = make_field(t.extent(1), t.extent(2));
    for (int y = 0; y < w.height; ++y)
        for (int x = 0; x < w.width; ++x) {
            w.coords.at(0, y, x) = t.at(0, y, x);
            w.coords.at(1, y, x) = t.at(1, y, x);
            w.valid.at(y, x) = t.at(2, y, x);
        }
    return w;
}

}  // namespace semimatch
