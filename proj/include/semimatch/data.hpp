#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semimatch/geometry.hpp"
#include "semimatch/image.hpp"
#include "semimatch/keypoints.hpp"

namespace semimatch {

struct PairManifest {
    std::string id;
    std::string source_image;  // path relative to the manifest directory
    std::string target_image;
    Keypoints keypoints;  // empty when the pair is unlabeled
    int class_id = 0;
    std::string class_name;
    std::string split = "train";  // train | val | test
    bool labeled = true;
};

struct Manifest {
    int schema_version = 1;
    int image_height = 64;
    int image_width = 64;
    std::vector<PairManifest> pairs;

    std::vector<PairManifest> split_pairs(const std::string& split) const;
};

// JSON manifest. A malformed file aborts with the parse location; records
// that fail validation are dropped individually with a diagnostic on stderr,
// as are records whose image files are missing (when verify_images is set).
Manifest load_manifest(const std::string& path, bool verify_images = true);
void save_manifest(const std::string& path, const Manifest& manifest);

// Class-stratified deterministic labeled/unlabeled split. Exactly
// round(fraction * N) pairs keep their keypoints (largest-remainder
// allocation across classes); the rest are stripped, with the hidden
// keypoints returned separately for evaluation only.
struct LabelSplit {
    std::vector<PairManifest> pairs;
    std::map<std::string, Keypoints> held_out;  // id -> hidden keypoints
};
LabelSplit split_label_fraction(const std::vector<PairManifest>& pairs, double fraction,
                                std::uint64_t seed);

// ---- Synthetic correspondence benchmark ----------------------------------

struct SyntheticConfig {
    int image_size = 64;
    int num_classes = 4;
    double appearance_jitter = 0.12;  // per-part color shift between views
    double brightness_jitter = 0.08;
    double pose_rotation_max = 0.45;  // radians
    double pose_scale_min = 0.78;     // relative to the nominal object extent
    double pose_scale_max = 1.05;
    double pose_translation_max = 7.0;  // pixels
    double pose_tps_px = 2.5;           // control-point displacement, pixels
    int clutter_min = 3;
    int clutter_max = 6;
};

struct ScenePart {
    enum class Shape { Ellipse, Rect, Triangle };
    Shape shape = Shape::Ellipse;
    double cx = 0, cy = 0;  // canonical coords
    double w = 0, h = 0;
    double angle = 0;
    double r = 0.5, g = 0.5, b = 0.5;
    bool striped = false;
    double stripe_freq = 0, stripe_phase = 0;
    int stripe_axis = 0;
};

struct SyntheticScene {
    std::uint64_t seed = 0;
    int class_id = 0;
    std::string class_name;
    std::vector<ScenePart> parts;          // painter's order, background first
    std::vector<std::pair<double, double>> canonical_keypoints;  // on the object
};

SyntheticScene make_scene(std::uint64_t seed, int class_id, const SyntheticConfig& cfg);

// Forward map: pixel = affine(canonical) + tps_displacement(affine(canonical)),
// both in pixel units. Rendering inverts it per pixel by fixed-point iteration.
struct ViewPose {
    std::array<double, 6> affine{1, 0, 0, 0, 1, 0};  // row-major 2x3, canonical -> pixel
    TpsParams tps;  // pixel-domain displacements
    bool has_tps = false;
};

ViewPose make_view_pose(std::uint64_t seed, const SyntheticConfig& cfg);
ViewPose translated(const ViewPose& pose, double dx, double dy);
std::pair<double, double> project_keypoint(const ViewPose& pose, double cx, double cy);

struct RenderedView {
    ImageU8 image;
    Keypoints keypoints;  // tgt_* unset; src_x/src_y hold this view's pixels
};

// Renders a view of the scene; appearance_seed jitters colors and texture
// phases, background_seed drives the backdrop and clutter.
RenderedView render_view(const SyntheticScene& scene, const ViewPose& pose,
                         std::uint64_t appearance_seed, std::uint64_t background_seed,
                         const SyntheticConfig& cfg);

struct SyntheticPair {
    ImageU8 source, target;
    Keypoints keypoints;  // exact projected correspondences
};

// Two views with independent pose, appearance, and background. The pose
// retries deterministically until every keypoint lands inside the frame.
SyntheticPair generate_synthetic_pair(const SyntheticScene& scene, std::uint64_t view_seed_src,
                                      std::uint64_t view_seed_tgt, const SyntheticConfig& cfg);

// Materializes images + manifest under `dir` (train/val/test splits, classes
// round-robin). Returns the manifest that was written.
Manifest generate_dataset(const std::string& dir, int n_train, int n_val, int n_test,
                          std::uint64_t seed, const SyntheticConfig& cfg);

}  // namespace semimatch
