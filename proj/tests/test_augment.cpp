#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "semimatch/augment.hpp"
#include "test_support.hpp"

using namespace semimatch;
using namespace semimatch::testing;

namespace {

Tensor random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor img({3, h, w});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<real>(rng.uniform());
    return img;
}

bool in_box(int x, int y, int cx, int cy, int box) {
    return x >= cx - box / 2 && x < cx - box / 2 + box && y >= cy - box / 2 &&
           y < cy - box / 2 + box;
}

}  // namespace

TEST_CASE("zero-range photometric spec leaves the image unchanged") {
    Tensor img = random_image(12, 12, 1);
    AugmentationSpec spec;  // all ranges zero
    Tensor out = apply_photometric(img, spec, 99);
    CHECK(out.values() == img.values());
}

TEST_CASE("brightness shift of +0.1 on a constant 0.5 image gives 0.6") {
    Tensor img({3, 4, 4}, real(0.5));
    Tensor out = shift_brightness(img, 0.1);
    for (std::int64_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("photometric augmentation is a pure function of the seed") {
    Tensor img = random_image(16, 16, 2);
    AugmentationSpec spec = AugmentationSpec::strong_defaults(16);
    spec.occlusion = OcclusionKind::None;
    Tensor a = apply_photometric(img, spec, 7);
    Tensor b = apply_photometric(img, spec, 7);
    Tensor c = apply_photometric(img, spec, 8);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
    for (std::int64_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] >= real(0));
        CHECK(a[i] <= real(1));
    }
}

TEST_CASE("weak augmentation never moves pixel content") {
    // Perturbing one input pixel may only change that output pixel.
    Tensor img = random_image(10, 10, 3);
    AugmentationSpec weak = AugmentationSpec::weak_defaults();
    Tensor base = apply_photometric(img, weak, 5);
    Tensor poked = img;
    poked.at(1, 4, 7) = std::min(real(1), poked.at(1, 4, 7) + real(0.01));
    Tensor out = apply_photometric(poked, weak, 5);
    int diffs = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 10; ++x)
                if (base.at(c, y, x) != out.at(c, y, x)) {
                    ++diffs;
                    // Contrast couples through the global mean, so other
                    // pixels may shift in VALUE; geometry means content
                    // moves: with contrast off, only (4,7) may differ.
                }
    CHECK(diffs >= 1);

    AugmentationSpec no_contrast = weak;
    no_contrast.contrast = 0;
    Tensor base2 = apply_photometric(img, no_contrast, 5);
    Tensor out2 = apply_photometric(poked, no_contrast, 5);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 10; ++y)
            for (int x = 0; x < 10; ++x)
                if (!(y == 4 && x == 7)) CHECK(base2.at(c, y, x) == out2.at(c, y, x));
}

TEST_CASE("weak specs reject occlusion and blur") {
    AugmentationSpec bad = AugmentationSpec::weak_defaults();
    bad.occlusion = OcclusionKind::Cutout;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    AugmentationSpec bad2 = AugmentationSpec::weak_defaults();
    bad2.blur_prob = 0.5;
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("keyout zeroes exactly the keypoint box") {
    Tensor img = random_image(16, 16, 4);
    Keypoints kps = {{2, 2, 8, 8}};
    Tensor out = keyout(img, kps, 4, 1.0, 11);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                if (x >= 6 && x < 10 && y >= 6 && y < 10) {
                    CHECK(out.at(c, y, x) == real(0));
                } else {
                    CHECK(out.at(c, y, x) == img.at(c, y, x));
                }
            }
}

TEST_CASE("keyout respects probability zero and empty keypoints") {
    Tensor img = random_image(8, 8, 5);
    CHECK(keyout(img, {{1, 1, 4, 4}}, 4, 0.0, 3).values() == img.values());
    CHECK(keyout(img, {}, 4, 1.0, 3).values() == img.values());
}

TEST_CASE("keyout at a corner clips to the in-bounds quadrant") {
    Tensor img({3, 12, 12}, real(0.5));
    Tensor out = keyout(img, {{0, 0, 0, 0}}, 4, 1.0, 13);
    int zeroed = 0;
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x)
            if (out.at(0, y, x) == real(0)) {
                ++zeroed;
                CHECK(x < 2);
                CHECK(y < 2);
            }
    CHECK(zeroed == 4);  // box/2 x box/2 quadrant survives clipping
}

TEST_CASE("keyout never zeroes outside the union of keypoint boxes") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor img = random_image(16, 16, 600 + static_cast<std::uint64_t>(trial));
        // Strictly positive image so zeroing is observable.
        for (std::int64_t i = 0; i < img.size(); ++i) img[i] = img[i] * real(0.9) + real(0.1);
        Keypoints kps;
        const int nk = 1 + static_cast<int>(rng.uniform_index(5));
        for (int k = 0; k < nk; ++k) {
            KeypointPair kp;
            kp.tgt_x = rng.uniform(0, 15);
            kp.tgt_y = rng.uniform(0, 15);
            kps.push_back(kp);
        }
        const int box = 2 + static_cast<int>(rng.uniform_index(5));
        Tensor out = keyout(img, kps, box, rng.uniform(0.2, 1.0), trial);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                if (out.at(0, y, x) == img.at(0, y, x)) continue;
                CHECK(out.at(0, y, x) == real(0));
                bool covered = false;
                for (const auto& kp : kps) {
                    const int cx = static_cast<int>(std::floor(kp.tgt_x + 0.5));
                    const int cy = static_cast<int>(std::floor(kp.tgt_y + 0.5));
                    if (in_box(x, y, cx, cy, box)) covered = true;
                }
                CHECK(covered);
            }
    }
}

TEST_CASE("cutout basics") {
    Tensor img = random_image(10, 10, 6);
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = img[i] * real(0.9) + real(0.1);

    CHECK(cutout(img, 4, 0.0, 5).values() == img.values());

    Tensor all = cutout(img, 10, 1.0, 5);
    for (std::int64_t i = 0; i < all.size(); ++i) CHECK(all[i] == real(0));

    // Interior box: zeroed pixel count equals the box area.
    Tensor one = cutout(img, 3, 1.0, 9);
    int zeroed = 0;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
            if (one.at(0, y, x) == real(0)) ++zeroed;
    CHECK(zeroed == 9);
}

TEST_CASE("identity triplet: no augmentation and zero-scale warps") {
    Tensor src = random_image(16, 16, 7);
    Tensor tgt = random_image(16, 16, 8);
    AugmentationSpec weak;  // zero ranges
    AugmentationSpec strong;
    strong.strong = true;
    GeometryConfig geo;
    geo.affine_scale = 0;
    geo.tps_scale = 0;
    TrainingTriplet t = build_triplet(src, tgt, {}, false, weak, strong, geo,
                                      TripletSeeds::derive(1, 0, 0), 4, 4);
    CHECK(t.weak_target.values() == tgt.values());
    CHECK(t.strong_target.values() == tgt.values());
    CHECK(t.source.values() == src.values());
}

TEST_CASE("stored warp re-applied to the occluded strong image is bit-exact") {
    Tensor src = random_image(16, 16, 9);
    Tensor tgt = random_image(16, 16, 10);
    Keypoints kps = {{3, 3, 5, 5}, {10, 10, 11, 9}};
    AugmentationSpec weak = AugmentationSpec::weak_defaults();
    AugmentationSpec strong = AugmentationSpec::strong_defaults(16);
    GeometryConfig geo;
    TripletSeeds seeds = TripletSeeds::derive(21, 3, 14);
    TrainingTriplet t = build_triplet(src, tgt, kps, true, weak, strong, geo, seeds, 4, 4);

    Tensor pre = apply_photometric(tgt, strong, seeds.photometric_strong);
    pre = keyout(pre, kps, strong.occlusion_box, strong.occlusion_prob, seeds.occlusion);
    Tensor rewarped = grid_sample(pre, t.warp_image);
    CHECK(rewarped.values() == t.strong_target.values());

    // Determinism of the whole builder.
    TrainingTriplet t2 = build_triplet(src, tgt, kps, true, weak, strong, geo, seeds, 4, 4);
    CHECK(t2.strong_target.values() == t.strong_target.values());
    CHECK(t2.weak_target.values() == t.weak_target.values());
}

TEST_CASE("strong target differs from weak target under active augmentation") {
    Tensor src = random_image(16, 16, 11);
    Tensor tgt = random_image(16, 16, 12);
    TrainingTriplet t = build_triplet(tgt, tgt, {}, false, AugmentationSpec::weak_defaults(),
                                      AugmentationSpec::strong_defaults(16), GeometryConfig{},
                                      TripletSeeds::derive(5, 1, 2), 4, 4);
    real max_diff = 0;
    for (std::int64_t i = 0; i < t.strong_target.size(); ++i)
        max_diff = std::max(max_diff, std::abs(t.strong_target[i] - t.weak_target[i]));
    CHECK(max_diff > real(0));
    (void)src;
}

TEST_CASE("unlabeled samples hide keypoints and fall back to cutout") {
    Tensor tgt = random_image(16, 16, 13);
    Keypoints hidden = {{1, 1, 2, 2}};
    TrainingTriplet t = build_triplet(tgt, tgt, hidden, false, AugmentationSpec::weak_defaults(),
                                      AugmentationSpec::strong_defaults(16), GeometryConfig{},
                                      TripletSeeds::derive(6, 0, 0), 4, 4);
    CHECK(t.keypoints.empty());
    CHECK_FALSE(t.labeled);
}
