#pragma once

#include <cstdint>

#include "semimatch/geometry.hpp"
#include "semimatch/keypoints.hpp"
#include "semimatch/tensor.hpp"

namespace semimatch {

enum class OcclusionKind { None, Cutout, Keyout };

// Photometric ranges are maximum perturbation magnitudes; each application
// draws the actual amounts from the per-sample seed. The weak flavor must
// carry no blur and no occlusion.
struct AugmentationSpec {
    bool strong = false;
    double brightness = 0.0;     // additive, drawn from [-b, b]
    double contrast = 0.0;       // multiplicative about the image mean
    double channel_shift = 0.0;  // independent additive shift per channel
    double blur_prob = 0.0;
    double blur_sigma_min = 0.0;
    double blur_sigma_max = 0.0;
    OcclusionKind occlusion = OcclusionKind::None;
    int occlusion_box = 0;
    double occlusion_prob = 0.0;
    std::uint64_t seed = 0;  // base seed, mixed with per-call seeds

    static AugmentationSpec weak_defaults();
    static AugmentationSpec strong_defaults(int image_extent);  // KeyOut, low prob / small box
    static AugmentationSpec strong_keyout_heavy(int image_extent);  // ablation: high prob / large box
    void validate() const;
};

// Photometric primitives (deterministic, pure).
Tensor shift_brightness(const Tensor& img, double delta);
Tensor adjust_contrast(const Tensor& img, double amount);  // (img - mean)*(1+amount) + mean
Tensor shift_channels(const Tensor& img, const double delta[3]);
Tensor gaussian_blur(const Tensor& img, double sigma);  // replicate borders
Tensor clamp01(const Tensor& img);

// Brightness, contrast, channel shift, then (strong only) blur; output
// clamped to [0,1].
Tensor apply_photometric(const Tensor& img, const AugmentationSpec& spec, std::uint64_t seed);

// Zero-fills box x box regions centered on each keypoint selected with
// probability `prob` (one Bernoulli draw per keypoint, in order). Boxes clip
// at the borders. Empty keypoints: image returned unchanged.
Tensor keyout(const Tensor& img, const Keypoints& keypoints, int box, double prob,
              std::uint64_t seed);

// Single box with a uniformly drawn top-left corner so the box always lies
// inside the image; box >= extent blanks everything.
Tensor cutout(const Tensor& img, int box, double prob, std::uint64_t seed);

struct GeometryConfig {
    double affine_scale = 0.15;
    double tps_scale = 0.4;
    int tps_grid = 3;
    bool tps_first = false;  // composition order knob; default affine-then-tps
};

struct TripletSeeds {
    std::uint64_t photometric_weak = 0;
    std::uint64_t photometric_strong = 0;
    std::uint64_t occlusion = 0;
    std::uint64_t affine = 0;
    std::uint64_t tps = 0;
    static TripletSeeds derive(std::uint64_t global_seed, std::uint64_t epoch,
                               std::uint64_t sample_index);
};

struct TrainingTriplet {
    Tensor source;         // [3,H,W]
    Tensor weak_target;    // photometric-weak only; geometry untouched
    Tensor strong_target;  // photometric-strong + occlusion, then warped
    WarpField warp_image;  // the applied warp at image resolution
    WarpField warp_grid;   // same transform at the probability-grid resolution
    Keypoints keypoints;   // empty for unlabeled samples
    bool labeled = false;
};

// Unlabeled samples (no keypoints) fall back from KeyOut to CutOut with the
// same box and probability.
TrainingTriplet build_triplet(const Tensor& source, const Tensor& target,
                              const Keypoints& keypoints, bool labeled,
                              const AugmentationSpec& weak, const AugmentationSpec& strong,
                              const GeometryConfig& geometry, const TripletSeeds& seeds,
                              int grid_h, int grid_w);

}  // namespace semimatch
