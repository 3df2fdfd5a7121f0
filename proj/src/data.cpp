#include "semimatch/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "semimatch/rng.hpp"

namespace semimatch {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<PairManifest> Manifest::split_pairs(const std::string& split) const {
    std::vector<PairManifest> out;
    for (const PairManifest& p : pairs)
        if (p.split == split) out.push_back(p);
    return out;
}

namespace {

bool validate_record(const PairManifest& p, int image_h, int image_w, std::string& why) {
    if (p.id.empty()) {
        why = "empty id";
        return false;
    }
    if (p.source_image.empty() || p.target_image.empty()) {
        why = "missing image path";
        return false;
    }
    if (p.split != "train" && p.split != "val" && p.split != "test") {
        why = "unknown split '" + p.split + "'";
        return false;
    }
    for (const KeypointPair& kp : p.keypoints) {
        if (kp.src_x < 0 || kp.src_x > image_w - 1 || kp.src_y < 0 || kp.src_y > image_h - 1 ||
            kp.tgt_x < 0 || kp.tgt_x > image_w - 1 || kp.tgt_y < 0 || kp.tgt_y > image_h - 1) {
            why = "keypoint out of bounds";
            return false;
        }
    }
    return true;
}

}  // namespace

Manifest load_manifest(const std::string& path, bool verify_images) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path);
    json root;
    try {
        root = json::parse(is);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed manifest " + path + ": " + e.what());
    }

    Manifest m;
    try {
        m.schema_version = root.at("schema_version").get<int>();
        m.image_height = root.at("image_height").get<int>();
        m.image_width = root.at("image_width").get<int>();
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest " + path + " missing header field: " + e.what());
    }
    if (m.schema_version != 1) {
        throw std::runtime_error("manifest " + path + ": unsupported schema_version " +
                                 std::to_string(m.schema_version));
    }

    const fs::path base = fs::path(path).parent_path();
    std::size_t index = 0;
    std::vector<std::string> seen_ids;
    for (const json& rec : root.value("pairs", json::array())) {
        ++index;
        PairManifest p;
        std::string why;
        try {
            p.id = rec.at("id").get<std::string>();
            p.source_image = rec.at("source_image").get<std::string>();
            p.target_image = rec.at("target_image").get<std::string>();
            p.class_id = rec.at("class_id").get<int>();
            p.class_name = rec.value("class_name", std::string());
            p.split = rec.at("split").get<std::string>();
            p.labeled = rec.value("labeled", true);
            for (const json& kp : rec.at("keypoints")) {
                if (!kp.is_array() || kp.size() != 4) throw std::runtime_error("keypoint is not [sx,sy,tx,ty]");
                p.keypoints.push_back(
                    {kp[0].get<double>(), kp[1].get<double>(), kp[2].get<double>(), kp[3].get<double>()});
            }
        } catch (const std::exception& e) {
            std::cerr << "manifest " << path << ": record " << index << " rejected: " << e.what()
                      << "\n";
            continue;
        }
        if (!validate_record(p, m.image_height, m.image_width, why)) {
            std::cerr << "manifest " << path << ": record " << index << " (" << p.id
                      << ") rejected: " << why << "\n";
            continue;
        }
        if (std::find(seen_ids.begin(), seen_ids.end(), p.id) != seen_ids.end()) {
            std::cerr << "manifest " << path << ": record " << index << " rejected: duplicate id "
                      << p.id << "\n";
            continue;
        }
        if (verify_images) {
            if (!fs::exists(base / p.source_image) || !fs::exists(base / p.target_image)) {
                std::cerr << "manifest " << path << ": record " << index << " (" << p.id
                          << ") dropped: image file missing\n";
                continue;
            }
        }
        seen_ids.push_back(p.id);
        m.pairs.push_back(std::move(p));
    }
    return m;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
    json root;
    root["schema_version"] = manifest.schema_version;
    root["image_height"] = manifest.image_height;
    root["image_width"] = manifest.image_width;
    json pairs = json::array();
    for (const PairManifest& p : manifest.pairs) {
        json rec;
        rec["id"] = p.id;
        rec["source_image"] = p.source_image;
        rec["target_image"] = p.target_image;
        rec["class_id"] = p.class_id;
        rec["class_name"] = p.class_name;
        rec["split"] = p.split;
        rec["labeled"] = p.labeled;
        json kps = json::array();
        for (const KeypointPair& kp : p.keypoints)
            kps.push_back({kp.src_x, kp.src_y, kp.tgt_x, kp.tgt_y});
        rec["keypoints"] = std::move(kps);
        pairs.push_back(std::move(rec));
    }
    root["pairs"] = std::move(pairs);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    os << root.dump(2) << "\n";
}

LabelSplit split_label_fraction(const std::vector<PairManifest>& pairs, double fraction,
                                std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("split_label_fraction: fraction must lie in (0,1]");
    }
    const int n = static_cast<int>(pairs.size());
    const int target = static_cast<int>(std::lround(fraction * n));

    // Group by class, preserving order.
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < n; ++i) by_class[pairs[static_cast<std::size_t>(i)].class_id].push_back(i);

    // Largest-remainder allocation of the labeled quota across classes.
    struct Alloc {
        int class_id;
        int quota;
        double remainder;
    };
    std::vector<Alloc> allocs;
    int used = 0;
    for (const auto& [cid, members] : by_class) {
        const double exact = fraction * static_cast<double>(members.size());
        Alloc a{cid, static_cast<int>(std::floor(exact)), exact - std::floor(exact)};
        used += a.quota;
        allocs.push_back(a);
    }
    std::stable_sort(allocs.begin(), allocs.end(),
                     [](const Alloc& a, const Alloc& b) { return a.remainder > b.remainder; });
    for (std::size_t k = 0; used < target && k < allocs.size(); ++k, ++used) ++allocs[k].quota;
    for (std::size_t k = 0; used > target && k < allocs.size(); ++k) {
        if (allocs[allocs.size() - 1 - k].quota > 0) {
            --allocs[allocs.size() - 1 - k].quota;
            --used;
        }
    }

    std::vector<std::uint8_t> keep(static_cast<std::size_t>(n), 0);
    for (const Alloc& a : allocs) {
        auto members = by_class[a.class_id];
        Rng rng(mix_seed({seed, 0x51A7ULL, static_cast<std::uint64_t>(a.class_id)}));
        shuffle(members, rng);
        if (a.quota == 0) {
            std::cerr << "split_label_fraction: class " << a.class_id
                      << " received no labeled pairs at fraction " << fraction << "\n";
        }
        for (int k = 0; k < a.quota && k < static_cast<int>(members.size()); ++k)
            keep[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] = 1;
    }

    LabelSplit out;
    out.pairs = pairs;
    for (int i = 0; i < n; ++i) {
        PairManifest& p = out.pairs[static_cast<std::size_t>(i)];
        if (keep[static_cast<std::size_t>(i)]) {
            p.labeled = true;
        } else {
            out.held_out[p.id] = std::move(p.keypoints);
            p.keypoints.clear();
            p.labeled = false;
        }
    }
    return out;
}

// ---- Synthetic scenes ------------------------------------------------------

namespace {

struct Rgb {
    double r, g, b;
};

Rgb jittered(Rgb c, Rng& rng, double amount) {
    return {std::clamp(c.r + rng.uniform(-amount, amount), 0.05, 0.95),
            std::clamp(c.g + rng.uniform(-amount, amount), 0.05, 0.95),
            std::clamp(c.b + rng.uniform(-amount, amount), 0.05, 0.95)};
}

ScenePart make_part(ScenePart::Shape shape, double cx, double cy, double w, double h, double angle,
                    Rgb color) {
    ScenePart p;
    p.shape = shape;
    p.cx = cx;
    p.cy = cy;
    p.w = w;
    p.h = h;
    p.angle = angle;
    p.r = color.r;
    p.g = color.g;
    p.b = color.b;
    return p;
}

// Part-local (u,v) in [-1,1]^2 half-extent units, to canonical coordinates.
std::pair<double, double> part_point(const ScenePart& p, double u, double v) {
    const double lx = u * p.w / 2, ly = v * p.h / 2;
    const double ca = std::cos(p.angle), sa = std::sin(p.angle);
    return {p.cx + ca * lx - sa * ly, p.cy + sa * lx + ca * ly};
}

bool part_contains(const ScenePart& p, double x, double y) {
    const double dx = x - p.cx, dy = y - p.cy;
    const double ca = std::cos(p.angle), sa = std::sin(p.angle);
    const double lx = ca * dx + sa * dy;
    const double ly = -sa * dx + ca * dy;
    const double u = lx / (p.w / 2), v = ly / (p.h / 2);
    switch (p.shape) {
        case ScenePart::Shape::Ellipse:
            return u * u + v * v <= 1.0;
        case ScenePart::Shape::Rect:
            return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
        case ScenePart::Shape::Triangle:
            return v >= -1.0 && v <= 1.0 && std::abs(u) <= (v + 1.0) / 2.0;
    }
    return false;
}

const char* kClassNames[4] = {"beetle", "plane", "flower", "house"};

}  // namespace

SyntheticScene make_scene(std::uint64_t seed, int class_id, const SyntheticConfig& cfg) {
    if (class_id < 0 || class_id >= cfg.num_classes || cfg.num_classes > 4) {
        throw std::invalid_argument("make_scene: class_id out of range (supported classes: 4)");
    }
    SyntheticScene scene;
    scene.seed = seed;
    scene.class_id = class_id;
    scene.class_name = kClassNames[class_id];
    Rng rng(mix_seed({seed, 0x5CE11EULL, static_cast<std::uint64_t>(class_id)}));

    auto size_jitter = [&](double v) { return v * rng.uniform(0.85, 1.15); };
    auto pos_jitter = [&](double v) { return v + rng.uniform(-0.03, 0.03); };
    const double scene_color_jitter = 0.08;

    auto kp = [&](const ScenePart& p, double u, double v) {
        scene.canonical_keypoints.push_back(part_point(p, u, v));
    };

    switch (class_id) {
        case 0: {  // beetle: striped body, dark head, two legs, tail
            ScenePart body = make_part(ScenePart::Shape::Ellipse, pos_jitter(0.5), pos_jitter(0.55),
                                       size_jitter(0.46), size_jitter(0.34), rng.uniform(-0.1, 0.1),
                                       jittered({0.72, 0.28, 0.2}, rng, scene_color_jitter));
            body.striped = true;
            body.stripe_freq = rng.uniform(7.0, 11.0);
            body.stripe_phase = rng.uniform(0.0, 6.283);
            body.stripe_axis = 0;
            ScenePart head = make_part(ScenePart::Shape::Ellipse, body.cx, body.cy - 0.23,
                                       size_jitter(0.17), size_jitter(0.15), 0,
                                       jittered({0.2, 0.2, 0.28}, rng, scene_color_jitter));
            ScenePart leg_l =
                make_part(ScenePart::Shape::Rect, body.cx - 0.2, body.cy + 0.14, size_jitter(0.07),
                          size_jitter(0.3), 0.5, jittered({0.18, 0.16, 0.14}, rng, scene_color_jitter));
            ScenePart leg_r =
                make_part(ScenePart::Shape::Rect, body.cx + 0.2, body.cy + 0.14, size_jitter(0.07),
                          size_jitter(0.3), -0.5, jittered({0.18, 0.16, 0.14}, rng, scene_color_jitter));
            ScenePart tail = make_part(ScenePart::Shape::Triangle, body.cx, body.cy + 0.21,
                                       size_jitter(0.14), size_jitter(0.16), 3.14159,
                                       jittered({0.62, 0.3, 0.18}, rng, scene_color_jitter));
            scene.parts = {leg_l, leg_r, tail, body, head};
            kp(head, 0, 0);
            kp(body, 0, 0);
            kp(body, -0.85, 0);
            kp(body, 0.85, 0);
            kp(scene.parts[0], 0, 0.8);   // left leg tip
            kp(scene.parts[1], 0, 0.8);   // right leg tip
            kp(scene.parts[2], 0, 0.75);  // tail tip
            break;
        }
        case 1: {  // plane: fuselage, swept wings, tail fin
            ScenePart fuselage = make_part(
                ScenePart::Shape::Rect, pos_jitter(0.5), pos_jitter(0.5), size_jitter(0.16),
                size_jitter(0.62), rng.uniform(-0.08, 0.08),
                jittered({0.3, 0.48, 0.75}, rng, scene_color_jitter));
            fuselage.striped = true;
            fuselage.stripe_freq = rng.uniform(6.0, 9.0);
            fuselage.stripe_phase = rng.uniform(0.0, 6.283);
            fuselage.stripe_axis = 1;
            ScenePart wing_l =
                make_part(ScenePart::Shape::Triangle, fuselage.cx - 0.17, fuselage.cy + 0.02,
                          size_jitter(0.3), size_jitter(0.22), 1.8,
                          jittered({0.5, 0.65, 0.85}, rng, scene_color_jitter));
            ScenePart wing_r =
                make_part(ScenePart::Shape::Triangle, fuselage.cx + 0.17, fuselage.cy + 0.02,
                          size_jitter(0.3), size_jitter(0.22), -1.8,
                          jittered({0.5, 0.65, 0.85}, rng, scene_color_jitter));
            ScenePart fin = make_part(ScenePart::Shape::Triangle, fuselage.cx, fuselage.cy + 0.26,
                                      size_jitter(0.18), size_jitter(0.14), 3.14159,
                                      jittered({0.65, 0.66, 0.7}, rng, scene_color_jitter));
            scene.parts = {wing_l, wing_r, fin, fuselage};
            kp(fuselage, 0, -0.92);  // nose
            kp(fuselage, 0, 0.9);    // tail end
            kp(fuselage, 0, 0);      // center
            kp(scene.parts[0], 0, 0.8);
            kp(scene.parts[1], 0, 0.8);
            kp(scene.parts[2], 0, 0.7);
            break;
        }
        case 2: {  // flower: four petals around a dark center
            const double cx = pos_jitter(0.5), cy = pos_jitter(0.5);
            const Rgb petal = jittered({0.85, 0.66, 0.24}, rng, scene_color_jitter);
            ScenePart center = make_part(ScenePart::Shape::Ellipse, cx, cy, size_jitter(0.2),
                                         size_jitter(0.2), 0,
                                         jittered({0.42, 0.24, 0.12}, rng, scene_color_jitter));
            center.striped = true;
            center.stripe_freq = rng.uniform(10.0, 14.0);
            center.stripe_phase = rng.uniform(0.0, 6.283);
            scene.parts.clear();
            const double base_angle = rng.uniform(-0.2, 0.2);
            for (int i = 0; i < 4; ++i) {
                const double a = base_angle + i * 1.5707963;
                ScenePart p = make_part(ScenePart::Shape::Ellipse, cx + 0.21 * std::cos(a),
                                        cy + 0.21 * std::sin(a), size_jitter(0.3),
                                        size_jitter(0.15), a, jittered(petal, rng, 0.05));
                scene.parts.push_back(p);
            }
            scene.parts.push_back(center);
            kp(center, 0, 0);
            for (int i = 0; i < 4; ++i) kp(scene.parts[static_cast<std::size_t>(i)], 0.85, 0);
            kp(center, 0, -0.8);
            break;
        }
        default: {  // house: base, roof, door, window
            ScenePart base = make_part(ScenePart::Shape::Rect, pos_jitter(0.5), pos_jitter(0.6),
                                       size_jitter(0.46), size_jitter(0.32), 0,
                                       jittered({0.78, 0.68, 0.52}, rng, scene_color_jitter));
            base.striped = true;
            base.stripe_freq = rng.uniform(8.0, 12.0);
            base.stripe_phase = rng.uniform(0.0, 6.283);
            base.stripe_axis = 1;
            ScenePart roof = make_part(ScenePart::Shape::Triangle, base.cx, base.cy - 0.27,
                                       size_jitter(0.54), size_jitter(0.22), 3.14159,
                                       jittered({0.55, 0.2, 0.16}, rng, scene_color_jitter));
            ScenePart door = make_part(ScenePart::Shape::Rect, base.cx - 0.12, base.cy + 0.07,
                                       size_jitter(0.1), size_jitter(0.17), 0,
                                       jittered({0.3, 0.2, 0.12}, rng, scene_color_jitter));
            ScenePart window = make_part(ScenePart::Shape::Rect, base.cx + 0.12, base.cy - 0.04,
                                         size_jitter(0.11), size_jitter(0.1), 0,
                                         jittered({0.62, 0.8, 0.88}, rng, scene_color_jitter));
            scene.parts = {base, roof, door, window};
            kp(roof, 0, 0.7);  // roof apex (triangle points up after pi rotation)
            kp(base, -0.9, 0.9);
            kp(base, 0.9, 0.9);
            kp(door, 0, 0);
            kp(window, 0, 0);
            kp(base, 0, 0);
            break;
        }
    }
    return scene;
}

ViewPose make_view_pose(std::uint64_t seed, const SyntheticConfig& cfg) {
    Rng rng(mix_seed({seed, 0x90E5ULL}));
    const double size = cfg.image_size;
    const double nominal = size * 0.62;
    const double theta = rng.uniform(-cfg.pose_rotation_max, cfg.pose_rotation_max);
    const double s = nominal * rng.uniform(cfg.pose_scale_min, cfg.pose_scale_max);
    const double aniso = rng.uniform(0.92, 1.08);
    const double tx = size / 2.0 + rng.uniform(-cfg.pose_translation_max, cfg.pose_translation_max);
    const double ty = size / 2.0 + rng.uniform(-cfg.pose_translation_max, cfg.pose_translation_max);
    const double ca = std::cos(theta), sa = std::sin(theta);

    ViewPose pose;
    // p = R * S * (c - 0.5) + t
    pose.affine = {ca * s, -sa * s * aniso, tx - (ca * s * 0.5 - sa * s * aniso * 0.5),
                   sa * s, ca * s * aniso,  ty - (sa * s * 0.5 + ca * s * aniso * 0.5)};
    if (cfg.pose_tps_px > 0) {
        std::vector<double> cx, cy, dx, dy;
        for (int gy = 0; gy < 3; ++gy)
            for (int gx = 0; gx < 3; ++gx) {
                cx.push_back(gx / 2.0 * (size - 1));
                cy.push_back(gy / 2.0 * (size - 1));
                dx.push_back(rng.uniform(-cfg.pose_tps_px, cfg.pose_tps_px));
                dy.push_back(rng.uniform(-cfg.pose_tps_px, cfg.pose_tps_px));
            }
        pose.tps = tps_from_displacements(std::move(cx), std::move(cy), std::move(dx), std::move(dy));
        pose.has_tps = true;
    }
    return pose;
}

ViewPose translated(const ViewPose& pose, double dx, double dy) {
    ViewPose out = pose;
    out.affine[2] += dx;
    out.affine[5] += dy;
    return out;
}

std::pair<double, double> project_keypoint(const ViewPose& pose, double cx, double cy) {
    const double qx = pose.affine[0] * cx + pose.affine[1] * cy + pose.affine[2];
    const double qy = pose.affine[3] * cx + pose.affine[4] * cy + pose.affine[5];
    if (!pose.has_tps) return {qx, qy};
    double du, dv;
    tps_displacement(pose.tps, qx, qy, du, dv);
    return {qx + du, qy + dv};
}

namespace {

// Smooth deterministic backdrop: a few low-frequency sinusoids over a muted
// base color, plus distractor primitives in a palette adjacent to the
// object's.
struct Background {
    Rgb base;
    double amp[3];
    double fx[3], fy[3], phase[3];
    std::vector<ScenePart> clutter;  // in pixel coordinates

    Rgb color_at(double x, double y, int size) const {
        double n = 0;
        for (int k = 0; k < 3; ++k)
            n += amp[k] * std::sin((fx[k] * x + fy[k] * y) / size * 6.283 + phase[k]);
        Rgb c{std::clamp(base.r + n, 0.0, 1.0), std::clamp(base.g + n, 0.0, 1.0),
              std::clamp(base.b + n, 0.0, 1.0)};
        for (const ScenePart& p : clutter) {
            if (part_contains(p, x, y)) c = {p.r, p.g, p.b};
        }
        return c;
    }
};

Background make_background(std::uint64_t seed, const SyntheticScene& scene,
                           const SyntheticConfig& cfg) {
    Rng rng(mix_seed({seed, 0xB6D1ULL}));
    Background bg;
    bg.base = {rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6)};
    for (int k = 0; k < 3; ++k) {
        bg.amp[k] = rng.uniform(0.02, 0.06);
        bg.fx[k] = rng.uniform(0.5, 3.0);
        bg.fy[k] = rng.uniform(0.5, 3.0);
        bg.phase[k] = rng.uniform(0.0, 6.283);
    }
    const int count =
        cfg.clutter_min +
        static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.clutter_max - cfg.clutter_min + 1)));
    for (int k = 0; k < count; ++k) {
        // Colors drawn near a random object part's palette make the clutter
        // an actual distractor rather than obvious background.
        const ScenePart& ref = scene.parts[rng.uniform_index(scene.parts.size())];
        ScenePart p;
        p.shape = static_cast<ScenePart::Shape>(rng.uniform_index(3));
        p.cx = rng.uniform(0.0, cfg.image_size);
        p.cy = rng.uniform(0.0, cfg.image_size);
        p.w = rng.uniform(4.0, 13.0);
        p.h = rng.uniform(4.0, 13.0);
        p.angle = rng.uniform(0.0, 6.283);
        p.r = std::clamp(ref.r + rng.uniform(-0.2, 0.2), 0.05, 0.95);
        p.g = std::clamp(ref.g + rng.uniform(-0.2, 0.2), 0.05, 0.95);
        p.b = std::clamp(ref.b + rng.uniform(-0.2, 0.2), 0.05, 0.95);
        bg.clutter.push_back(p);
    }
    return bg;
}

struct Appearance {
    std::vector<Rgb> part_colors;
    std::vector<double> phase_shift;
    double brightness;
};

Appearance make_appearance(std::uint64_t seed, const SyntheticScene& scene,
                           const SyntheticConfig& cfg) {
    Rng rng(mix_seed({seed, 0xA43EULL}));
    Appearance a;
    for (const ScenePart& p : scene.parts) {
        a.part_colors.push_back(jittered({p.r, p.g, p.b}, rng, cfg.appearance_jitter));
        a.phase_shift.push_back(rng.uniform(-0.8, 0.8));
    }
    a.brightness = rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter);
    return a;
}

}  // namespace

RenderedView render_view(const SyntheticScene& scene, const ViewPose& pose,
                         std::uint64_t appearance_seed, std::uint64_t background_seed,
                         const SyntheticConfig& cfg) {
    const int size = cfg.image_size;
    const Background bg = make_background(background_seed, scene, cfg);
    const Appearance app = make_appearance(appearance_seed, scene, cfg);

    const double det = pose.affine[0] * pose.affine[4] - pose.affine[1] * pose.affine[3];
    if (std::abs(det) < 1e-9) throw std::runtime_error("render_view: singular view pose");
    const double inv[4] = {pose.affine[4] / det, -pose.affine[1] / det, -pose.affine[3] / det,
                           pose.affine[0] / det};

    auto sample = [&](double px, double py) -> Rgb {
        // Invert p = q + D(q), then q = A(c).
        double qx = px, qy = py;
        if (pose.has_tps) {
            for (int it = 0; it < 4; ++it) {
                double du, dv;
                tps_displacement(pose.tps, qx, qy, du, dv);
                qx = px - du;
                qy = py - dv;
            }
        }
        const double rx = qx - pose.affine[2], ry = qy - pose.affine[5];
        const double cx = inv[0] * rx + inv[1] * ry;
        const double cy = inv[2] * rx + inv[3] * ry;

        int hit = -1;
        for (int k = static_cast<int>(scene.parts.size()) - 1; k >= 0; --k) {
            if (part_contains(scene.parts[static_cast<std::size_t>(k)], cx, cy)) {
                hit = k;
                break;
            }
        }
        if (hit < 0) return bg.color_at(px, py, size);
        const ScenePart& p = scene.parts[static_cast<std::size_t>(hit)];
        Rgb c = app.part_colors[static_cast<std::size_t>(hit)];
        if (p.striped) {
            const double axis_coord = p.stripe_axis == 0 ? cx - p.cx : cy - p.cy;
            const double mod = 0.85 + 0.15 * std::sin(axis_coord * p.stripe_freq * 6.283 +
                                                      p.stripe_phase +
                                                      app.phase_shift[static_cast<std::size_t>(hit)]);
            c = {c.r * mod, c.g * mod, c.b * mod};
        }
        return c;
    };

    RenderedView view;
    view.image = make_image(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            Rgb acc{0, 0, 0};
            for (double oy : {-0.25, 0.25})
                for (double ox : {-0.25, 0.25}) {
                    const Rgb c = sample(x + ox, y + oy);
                    acc.r += c.r;
                    acc.g += c.g;
                    acc.b += c.b;
                }
            auto quantize = [&](double v) {
                v = v / 4.0 + app.brightness;
                return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            };
            view.image.at(y, x, 0) = quantize(acc.r);
            view.image.at(y, x, 1) = quantize(acc.g);
            view.image.at(y, x, 2) = quantize(acc.b);
        }

    for (const auto& [cx, cy] : scene.canonical_keypoints) {
        const auto [px, py] = project_keypoint(pose, cx, cy);
        KeypointPair kp;
        kp.src_x = px;
        kp.src_y = py;
        view.keypoints.push_back(kp);
    }
    return view;
}

namespace {

ViewPose pose_with_keypoints_inside(const SyntheticScene& scene, std::uint64_t view_seed,
                                    const SyntheticConfig& cfg) {
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        ViewPose pose = make_view_pose(mix_seed({view_seed, attempt}), cfg);
        bool ok = true;
        for (const auto& [cx, cy] : scene.canonical_keypoints) {
            const auto [px, py] = project_keypoint(pose, cx, cy);
            if (px < 2.0 || px > cfg.image_size - 3.0 || py < 2.0 || py > cfg.image_size - 3.0) {
                ok = false;
                break;
            }
        }
        if (ok) return pose;
    }
    throw std::runtime_error("pose_with_keypoints_inside: no in-frame pose found");
}

}  // namespace

SyntheticPair generate_synthetic_pair(const SyntheticScene& scene, std::uint64_t view_seed_src,
                                      std::uint64_t view_seed_tgt, const SyntheticConfig& cfg) {
    const ViewPose pose_src = pose_with_keypoints_inside(scene, view_seed_src, cfg);
    const ViewPose pose_tgt = pose_with_keypoints_inside(scene, view_seed_tgt, cfg);
    RenderedView src = render_view(scene, pose_src, mix_seed({view_seed_src, 0xA11ULL}),
                                   mix_seed({view_seed_src, 0xB22ULL}), cfg);
    RenderedView tgt = render_view(scene, pose_tgt, mix_seed({view_seed_tgt, 0xA11ULL}),
                                   mix_seed({view_seed_tgt, 0xB22ULL}), cfg);
    SyntheticPair out;
    out.source = std::move(src.image);
    out.target = std::move(tgt.image);
    for (std::size_t k = 0; k < scene.canonical_keypoints.size(); ++k) {
        KeypointPair kp;
        kp.src_x = src.keypoints[k].src_x;
        kp.src_y = src.keypoints[k].src_y;
        kp.tgt_x = tgt.keypoints[k].src_x;
        kp.tgt_y = tgt.keypoints[k].src_y;
        out.keypoints.push_back(kp);
    }
    return out;
}

Manifest generate_dataset(const std::string& dir, int n_train, int n_val, int n_test,
                          std::uint64_t seed, const SyntheticConfig& cfg) {
    fs::create_directories(fs::path(dir) / "images");
    Manifest m;
    m.image_height = cfg.image_size;
    m.image_width = cfg.image_size;

    const int total = n_train + n_val + n_test;
    for (int i = 0; i < total; ++i) {
        const int class_id = i % cfg.num_classes;
        const SyntheticScene scene = make_scene(mix_seed({seed, 0x5CF0ULL, static_cast<std::uint64_t>(i)}),
                                                class_id, cfg);
        const SyntheticPair pair =
            generate_synthetic_pair(scene, mix_seed({seed, 0x517CULL, static_cast<std::uint64_t>(i)}),
                                    mix_seed({seed, 0x7917ULL, static_cast<std::uint64_t>(i)}), cfg);
        char name[32];
        std::snprintf(name, sizeof(name), "pair_%04d", i);
        PairManifest rec;
        rec.id = name;
        rec.source_image = std::string("images/") + name + "_src.png";
        rec.target_image = std::string("images/") + name + "_tgt.png";
        rec.keypoints = pair.keypoints;
        rec.class_id = class_id;
        rec.class_name = scene.class_name;
        rec.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
        rec.labeled = true;
        write_png((fs::path(dir) / rec.source_image).string(), pair.source);
        write_png((fs::path(dir) / rec.target_image).string(), pair.target);
        m.pairs.push_back(std::move(rec));
    }
    save_manifest((fs::path(dir) / "manifest.json").string(), m);
    return m;
}

}  // namespace semimatch
