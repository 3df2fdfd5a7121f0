#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "semimatch/data.hpp"
#include "test_support.hpp"

using namespace semimatch;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("semimatch_data_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Manifest tiny_manifest() {
    Manifest m;
    m.image_height = 64;
    m.image_width = 64;
    for (int i = 0; i < 4; ++i) {
        PairManifest p;
        p.id = "pair_" + std::to_string(i);
        p.source_image = "images/a.png";
        p.target_image = "images/b.png";
        p.class_id = i % 2;
        p.class_name = i % 2 ? "odd" : "even";
        p.split = "train";
        p.keypoints = {{1.5, 2.5, 3.5, 4.5}, {10, 11, 12, 13}};
        m.pairs.push_back(p);
    }
    return m;
}

}  // namespace

TEST_CASE("manifest round trip preserves all fields") {
    fs::path dir = temp_dir("roundtrip");
    Manifest m = tiny_manifest();
    save_manifest((dir / "manifest.json").string(), m);
    Manifest back = load_manifest((dir / "manifest.json").string(), /*verify_images=*/false);
    REQUIRE(back.pairs.size() == m.pairs.size());
    CHECK(back.image_height == 64);
    for (std::size_t i = 0; i < m.pairs.size(); ++i) {
        CHECK(back.pairs[i].id == m.pairs[i].id);
        CHECK(back.pairs[i].source_image == m.pairs[i].source_image);
        CHECK(back.pairs[i].class_id == m.pairs[i].class_id);
        CHECK(back.pairs[i].class_name == m.pairs[i].class_name);
        CHECK(back.pairs[i].split == m.pairs[i].split);
        CHECK(back.pairs[i].labeled == m.pairs[i].labeled);
        REQUIRE(back.pairs[i].keypoints.size() == m.pairs[i].keypoints.size());
        for (std::size_t k = 0; k < m.pairs[i].keypoints.size(); ++k) {
            CHECK(back.pairs[i].keypoints[k].src_x == m.pairs[i].keypoints[k].src_x);
            CHECK(back.pairs[i].keypoints[k].tgt_y == m.pairs[i].keypoints[k].tgt_y);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("empty pair list loads to an empty manifest") {
    fs::path dir = temp_dir("empty");
    {
        std::ofstream os(dir / "manifest.json");
        os << R"({"schema_version":1,"image_height":64,"image_width":64,"pairs":[]})";
    }
    Manifest m = load_manifest((dir / "manifest.json").string(), false);
    CHECK(m.pairs.empty());
    fs::remove_all(dir);
}

TEST_CASE("malformed json aborts; bad records are dropped individually") {
    fs::path dir = temp_dir("bad");
    {
        std::ofstream os(dir / "broken.json");
        os << R"({"schema_version":1,)";
    }
    CHECK_THROWS_AS(load_manifest((dir / "broken.json").string(), false), std::runtime_error);

    {
        std::ofstream os(dir / "records.json");
        os << R"({"schema_version":1,"image_height":64,"image_width":64,"pairs":[
          {"id":"ok","source_image":"a.png","target_image":"b.png","class_id":0,
           "split":"train","keypoints":[[1,2,3,4]]},
          {"id":"badkp","source_image":"a.png","target_image":"b.png","class_id":0,
           "split":"train","keypoints":[[1,2,3]]},
          {"id":"oob","source_image":"a.png","target_image":"b.png","class_id":0,
           "split":"train","keypoints":[[900,2,3,4]]},
          {"id":"ok","source_image":"a.png","target_image":"b.png","class_id":0,
           "split":"train","keypoints":[]},
          {"id":"badsplit","source_image":"a.png","target_image":"b.png","class_id":0,
           "split":"holdout","keypoints":[]}
        ]})";
    }
    Manifest m = load_manifest((dir / "records.json").string(), false);
    REQUIRE(m.pairs.size() == 1);  // only the first record survives
    CHECK(m.pairs[0].id == "ok");
    fs::remove_all(dir);
}

TEST_CASE("label fraction split: counts, determinism, purity") {
    Manifest m;
    for (int i = 0; i < 300; ++i) {
        PairManifest p;
        p.id = "p" + std::to_string(i);
        p.source_image = "s";
        p.target_image = "t";
        p.class_id = i % 4;
        p.keypoints = {{1, 2, 3, 4}};
        m.pairs.push_back(p);
    }

    LabelSplit s1 = split_label_fraction(m.pairs, 0.1, 99);
    int labeled = 0;
    for (const auto& p : s1.pairs) {
        if (p.labeled) {
            ++labeled;
            CHECK_FALSE(p.keypoints.empty());
        } else {
            CHECK(p.keypoints.empty());  // hidden keypoints never reach the trainer
            CHECK(s1.held_out.count(p.id) == 1);
        }
    }
    CHECK(labeled == 30);

    // Class stratification: 300/4 classes at 10% = 7.5 -> quotas within 1.
    std::map<int, int> per_class;
    for (const auto& p : s1.pairs)
        if (p.labeled) ++per_class[p.class_id];
    for (const auto& [cid, count] : per_class) {
        CHECK(count >= 7);
        CHECK(count <= 8);
    }

    LabelSplit s2 = split_label_fraction(m.pairs, 0.1, 99);
    for (std::size_t i = 0; i < s1.pairs.size(); ++i)
        CHECK(s1.pairs[i].labeled == s2.pairs[i].labeled);

    LabelSplit s3 = split_label_fraction(m.pairs, 0.1, 100);
    bool any_diff = false;
    for (std::size_t i = 0; i < s1.pairs.size(); ++i)
        if (s1.pairs[i].labeled != s3.pairs[i].labeled) any_diff = true;
    CHECK(any_diff);

    LabelSplit all = split_label_fraction(m.pairs, 1.0, 5);
    for (const auto& p : all.pairs) CHECK(p.labeled);

    CHECK_THROWS_AS(split_label_fraction(m.pairs, 0.0, 1), std::invalid_argument);
}

TEST_CASE("identical view seeds give identical renders and coincident keypoints") {
    SyntheticConfig cfg;
    SyntheticScene scene = make_scene(42, 1, cfg);
    SyntheticPair a = generate_synthetic_pair(scene, 7, 7, cfg);
    CHECK(a.source.pixels == a.target.pixels);
    for (const auto& kp : a.keypoints) {
        CHECK(kp.src_x == doctest::Approx(kp.tgt_x).epsilon(1e-12));
        CHECK(kp.src_y == doctest::Approx(kp.tgt_y).epsilon(1e-12));
    }

    SyntheticPair b = generate_synthetic_pair(scene, 7, 7, cfg);
    CHECK(a.source.pixels == b.source.pixels);
}

TEST_CASE("pure-translation pose delta shifts every keypoint by exactly (8,0)") {
    SyntheticConfig cfg;
    cfg.pose_tps_px = 0;  // keep the forward map affine so the shift is exact
    SyntheticScene scene = make_scene(11, 0, cfg);
    ViewPose pose = make_view_pose(3, cfg);
    ViewPose moved = translated(pose, 8, 0);
    for (const auto& [cx, cy] : scene.canonical_keypoints) {
        const auto [ax, ay] = project_keypoint(pose, cx, cy);
        const auto [bx, by] = project_keypoint(moved, cx, cy);
        CHECK(bx == doctest::Approx(ax + 8.0).epsilon(1e-12));
        CHECK(by == doctest::Approx(ay).epsilon(1e-12));
    }
}

TEST_CASE("rendered keypoints always land inside the frame") {
    SyntheticConfig cfg;
    for (std::uint64_t s = 0; s < 24; ++s) {
        SyntheticScene scene = make_scene(1000 + s, static_cast<int>(s % 4), cfg);
        SyntheticPair pair = generate_synthetic_pair(scene, 2000 + s, 3000 + s, cfg);
        REQUIRE(pair.keypoints.size() >= 6);
        REQUIRE(pair.keypoints.size() <= 10);
        for (const auto& kp : pair.keypoints) {
            CHECK(kp.src_x >= 0);
            CHECK(kp.src_x <= cfg.image_size - 1);
            CHECK(kp.src_y >= 0);
            CHECK(kp.src_y <= cfg.image_size - 1);
            CHECK(kp.tgt_x >= 0);
            CHECK(kp.tgt_x <= cfg.image_size - 1);
            CHECK(kp.tgt_y >= 0);
            CHECK(kp.tgt_y <= cfg.image_size - 1);
        }
    }
}

TEST_CASE("dataset generation materializes images and a loadable manifest") {
    fs::path dir = temp_dir("gen");
    SyntheticConfig cfg;
    Manifest m = generate_dataset(dir.string(), 6, 2, 2, 77, cfg);
    CHECK(m.pairs.size() == 10);
    CHECK(m.split_pairs("train").size() == 6);
    CHECK(m.split_pairs("val").size() == 2);
    CHECK(m.split_pairs("test").size() == 2);

    Manifest loaded = load_manifest((dir / "manifest.json").string(), /*verify_images=*/true);
    CHECK(loaded.pairs.size() == 10);

    ImageU8 img = read_png((dir / m.pairs[0].source_image).string());
    CHECK(img.height == cfg.image_size);
    CHECK(img.width == cfg.image_size);
    fs::remove_all(dir);
}
