#include "semimatch/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semimatch/rng.hpp"

namespace semimatch {

AugmentationSpec AugmentationSpec::weak_defaults() {
    AugmentationSpec s;
    s.strong = false;
    s.brightness = 0.05;
    s.contrast = 0.05;
    s.channel_shift = 0.05;
    return s;
}

AugmentationSpec AugmentationSpec::strong_defaults(int image_extent) {
    AugmentationSpec s;
    s.strong = true;
    s.brightness = 0.4;
    s.contrast = 0.4;
    s.channel_shift = 0.4;
    s.blur_prob = 0.5;
    s.blur_sigma_min = 0.1;
    s.blur_sigma_max = 2.0;
    s.occlusion = OcclusionKind::Keyout;
    s.occlusion_box = std::max(1, image_extent / 8);
    s.occlusion_prob = 0.3;
    return s;
}

AugmentationSpec AugmentationSpec::strong_keyout_heavy(int image_extent) {
    AugmentationSpec s = strong_defaults(image_extent);
    s.occlusion_box = std::max(1, image_extent / 4);
    s.occlusion_prob = 0.6;
    return s;
}

void AugmentationSpec::validate() const {
    if (brightness < 0 || contrast < 0 || channel_shift < 0 || blur_prob < 0 ||
        occlusion_prob < 0 || occlusion_box < 0 || blur_sigma_min < 0 ||
        blur_sigma_max < blur_sigma_min) {
        throw std::invalid_argument("AugmentationSpec: ranges must be nonnegative");
    }
    if (!strong && (occlusion != OcclusionKind::None || blur_prob > 0)) {
        throw std::invalid_argument("AugmentationSpec: weak spec must not occlude or blur");
    }
}

namespace {

void require_rgb(const Tensor& img, const char* what) {
    if (img.rank() != 3 || img.extent(0) != 3) {
        throw std::invalid_argument(std::string(what) + ": expected [3,H,W], got " + img.shape_str());
    }
}

}  // namespace

Tensor clamp01(const Tensor& img) {
    Tensor out = img;
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = std::min(real(1), std::max(real(0), out[i]));
    return out;
}

Tensor shift_brightness(const Tensor& img, double delta) {
    Tensor out = img;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += static_cast<real>(delta);
    return out;
}

Tensor adjust_contrast(const Tensor& img, double amount) {
    real mean = 0;
    for (std::int64_t i = 0; i < img.size(); ++i) mean += img[i];
    mean /= static_cast<real>(img.size());
    Tensor out = img;
    const real k = static_cast<real>(1.0 + amount);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean) * k + mean;
    return out;
}

Tensor shift_channels(const Tensor& img, const double delta[3]) {
    require_rgb(img, "shift_channels");
    Tensor out = img;
    const std::int64_t plane = static_cast<std::int64_t>(img.extent(1)) * img.extent(2);
    for (int c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < plane; ++i) out[c * plane + i] += static_cast<real>(delta[c]);
    return out;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
    require_rgb(img, "gaussian_blur");
    if (sigma <= 0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<real> kernel(static_cast<std::size_t>(2 * radius + 1));
    real sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const real v = static_cast<real>(std::exp(-0.5 * (i * i) / (sigma * sigma)));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (real& v : kernel) v /= sum;

    const int h = img.extent(1), w = img.extent(2);
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
    Tensor mid({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                real acc = 0;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(c, y, clampi(x + k, w));
                mid.at(c, y, x) = acc;
            }
    Tensor out({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                real acc = 0;
                for (int k = -radius; k <= radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + radius)] * mid.at(c, clampi(y + k, h), x);
                out.at(c, y, x) = acc;
            }
    return out;
}

Tensor apply_photometric(const Tensor& img, const AugmentationSpec& spec, std::uint64_t seed) {
    require_rgb(img, "apply_photometric");
    spec.validate();
    Rng rng(mix_seed({spec.seed, seed, 0x9407ULL}));
    Tensor out = img;
    if (spec.brightness > 0) out = shift_brightness(out, rng.uniform(-spec.brightness, spec.brightness));
    if (spec.contrast > 0) out = adjust_contrast(out, rng.uniform(-spec.contrast, spec.contrast));
    if (spec.channel_shift > 0) {
        double d[3];
        for (double& v : d) v = rng.uniform(-spec.channel_shift, spec.channel_shift);
        out = shift_channels(out, d);
    }
    if (spec.strong && spec.blur_prob > 0 && rng.uniform() < spec.blur_prob) {
        out = gaussian_blur(out, rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max));
    }
    return clamp01(out);
}

namespace {

void zero_box(Tensor& img, int cx, int cy, int box) {
    const int h = img.extent(1), w = img.extent(2);
    const int x0 = std::max(0, cx - box / 2);
    const int y0 = std::max(0, cy - box / 2);
    const int x1 = std::min(w, cx - box / 2 + box);
    const int y1 = std::min(h, cy - box / 2 + box);
    for (int c = 0; c < 3; ++c)
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) img.at(c, y, x) = real(0);
}

}  // namespace

Tensor keyout(const Tensor& img, const Keypoints& keypoints, int box, double prob,
              std::uint64_t seed) {
    require_rgb(img, "keyout");
    if (box <= 0 || prob <= 0 || keypoints.empty()) return img;
    Rng rng(mix_seed({seed, 0x6E10ULL}));
    Tensor out = img;
    for (const KeypointPair& kp : keypoints) {
        const double u = rng.uniform();
        if (u >= prob) continue;
        const int cx = static_cast<int>(std::floor(kp.tgt_x + 0.5));
        const int cy = static_cast<int>(std::floor(kp.tgt_y + 0.5));
        zero_box(out, cx, cy, box);
    }
    return out;
}

Tensor cutout(const Tensor& img, int box, double prob, std::uint64_t seed) {
    require_rgb(img, "cutout");
    if (box <= 0 || prob <= 0) return img;
    Rng rng(mix_seed({seed, 0xC801ULL}));
    if (rng.uniform() >= prob) return img;
    const int h = img.extent(1), w = img.extent(2);
    const int bw = std::min(box, w), bh = std::min(box, h);
    const int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(w - bw + 1)));
    const int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h - bh + 1)));
    Tensor out = img;
    for (int c = 0; c < 3; ++c)
        for (int y = y0; y < y0 + bh; ++y)
            for (int x = x0; x < x0 + bw; ++x) out.at(c, y, x) = real(0);
    return out;
}

TripletSeeds TripletSeeds::derive(std::uint64_t global_seed, std::uint64_t epoch,
                                  std::uint64_t sample_index) {
    TripletSeeds s;
    s.photometric_weak = mix_seed({global_seed, epoch, sample_index, 1});
    s.photometric_strong = mix_seed({global_seed, epoch, sample_index, 2});
    s.occlusion = mix_seed({global_seed, epoch, sample_index, 3});
    s.affine = mix_seed({global_seed, epoch, sample_index, 4});
    s.tps = mix_seed({global_seed, epoch, sample_index, 5});
    return s;
}

TrainingTriplet build_triplet(const Tensor& source, const Tensor& target,
                              const Keypoints& keypoints, bool labeled,
                              const AugmentationSpec& weak, const AugmentationSpec& strong,
                              const GeometryConfig& geometry, const TripletSeeds& seeds,
                              int grid_h, int grid_w) {
    require_rgb(source, "build_triplet source");
    require_rgb(target, "build_triplet target");
    weak.validate();
    strong.validate();
    if (weak.strong || !strong.strong) {
        throw std::invalid_argument("build_triplet: specs must be (weak, strong) in that order");
    }
    const int h = target.extent(1), w = target.extent(2);

    TrainingTriplet t;
    t.source = source;
    t.keypoints = labeled ? keypoints : Keypoints{};
    t.labeled = labeled;
    t.weak_target = apply_photometric(target, weak, seeds.photometric_weak);

    Tensor pre = apply_photometric(target, strong, seeds.photometric_strong);
    switch (strong.occlusion) {
        case OcclusionKind::None:
            break;
        case OcclusionKind::Cutout:
            pre = cutout(pre, strong.occlusion_box, strong.occlusion_prob, seeds.occlusion);
            break;
        case OcclusionKind::Keyout:
            if (t.keypoints.empty()) {
                pre = cutout(pre, strong.occlusion_box, strong.occlusion_prob, seeds.occlusion);
            } else {
                pre = keyout(pre, t.keypoints, strong.occlusion_box, strong.occlusion_prob,
                             seeds.occlusion);
            }
            break;
    }

    const AffineParams affine = random_affine_params(seeds.affine, geometry.affine_scale);
    const TpsParams tps = random_tps_params(seeds.tps, geometry.tps_scale, geometry.tps_grid);
    auto compose_at = [&](int fh, int fw) {
        WarpField fa = materialize_affine(affine, fh, fw);
        WarpField ft = materialize_tps(tps, fh, fw);
        return geometry.tps_first ? compose(ft, fa) : compose(fa, ft);
    };
    t.warp_image = compose_at(h, w);
    t.warp_grid = compose_at(grid_h, grid_w);
    t.strong_target = grid_sample(pre, t.warp_image);
    return t;
}

}  // namespace semimatch
