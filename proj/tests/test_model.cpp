#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "semimatch/model.hpp"
#include "test_support.hpp"

using namespace semimatch;
using namespace semimatch::testing;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.c1 = 6;
    c.c2 = 8;
    c.d = 8;
    c.agg_hidden = 3;
    return c;
}

Tensor random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor img({3, h, w});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<real>(rng.uniform());
    return img;
}

}  // namespace

TEST_CASE("features are unit-norm per position and deterministic") {
    ModelConfig cfg = small_config();
    ModelParams params = ModelParams::init(cfg, 3, 16);
    Tensor img = random_image(16, 16, 5);

    FeatureMap f1 = extract_features(constant(img), ModelVars::frozen(params));
    FeatureMap f2 = extract_features(constant(img), ModelVars::frozen(params));
    CHECK(f1.h == 4);
    CHECK(f1.w == 4);
    CHECK(f1.values.value().values() == f2.values.value().values());

    for (int j = 0; j < f1.h * f1.w; ++j) {
        double norm2 = 0;
        for (int i = 0; i < f1.d; ++i)
            norm2 += static_cast<double>(f1.values.value().at(i, j)) *
                     static_cast<double>(f1.values.value().at(i, j));
        CHECK(std::abs(std::sqrt(norm2) - 1.0) < 1e-6);
    }
}

TEST_CASE("constant-color images give spatially constant interior features") {
    ModelConfig cfg = small_config();
    ModelParams params = ModelParams::init(cfg, 7, 256);
    Tensor img({3, 64, 64});
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = real(0.42);
    FeatureMap f = extract_features(constant(img), ModelVars::frozen(params));
    // Receptive field of a grid cell spans ~15 px; cells >= 2 away from the
    // border never see zero padding.
    const int ref = 2 * f.w + 5;  // interior cell (5,2)
    for (int y = 2; y <= f.h - 3; ++y)
        for (int x = 2; x <= f.w - 3; ++x) {
            const int j = y * f.w + x;
            for (int c = 0; c < f.d; ++c)
                CHECK(f.values.value().at(c, j) ==
                      doctest::Approx(f.values.value().at(c, ref)).epsilon(1e-10));
        }
}

TEST_CASE("extract_features validates its input") {
    ModelConfig cfg = small_config();
    ModelParams params = ModelParams::init(cfg, 3, 16);
    CHECK_THROWS_AS(extract_features(constant(Tensor({3, 15, 16})), ModelVars::frozen(params)),
                    std::invalid_argument);
    Tensor bad({3, 16, 16}, real(2));
    CHECK_THROWS_AS(extract_features(constant(bad), ModelVars::frozen(params)),
                    std::invalid_argument);
}

TEST_CASE("correlation of unit feature vectors") {
    FeatureMap fs, ft;
    fs.d = ft.d = 3;
    fs.h = ft.h = 1;
    fs.w = ft.w = 2;
    // Source positions: e0 and e1. Target positions: e0 and (e0+e1)/sqrt(2).
    const real r = static_cast<real>(1 / std::sqrt(2.0));
    fs.values = constant(Tensor::from_data({3, 2}, {1, 0, 0, 1, 0, 0}));
    ft.values = constant(Tensor::from_data({3, 2}, {1, r, 0, r, 0, 0}));
    CostVolume c = correlate(fs, ft);
    CHECK(c.values.value().at(0, 0) == doctest::Approx(1.0));   // same unit vector
    CHECK(c.values.value().at(0, 1) == doctest::Approx(0.0));   // orthogonal
    CHECK(c.values.value().at(1, 0) == doctest::Approx(r));
    CHECK(c.values.value().at(1, 1) == doctest::Approx(r));
}

TEST_CASE("correlation matches the brute-force double loop") {
    Rng rng(13);
    const int d = 7, hs = 3, ws = 4, ht = 2, wt = 5;
    Tensor src = random_tensor({d, hs * ws}, rng);
    Tensor tgt = random_tensor({d, ht * wt}, rng);
    FeatureMap fs{constant(src), d, hs, ws};
    FeatureMap ft{constant(tgt), d, ht, wt};
    CostVolume c = correlate(fs, ft);
    for (int i = 0; i < ht * wt; ++i)
        for (int j = 0; j < hs * ws; ++j) {
            double dot = 0;
            for (int k = 0; k < d; ++k)
                dot += static_cast<double>(tgt.at(k, i)) * static_cast<double>(src.at(k, j));
            CHECK(std::abs(static_cast<double>(c.values.value().at(i, j)) - dot) < 1e-6);
        }
    CHECK_FALSE(c.aggregated);

    FeatureMap fbad{constant(Tensor({4, 6})), 4, 2, 3};
    CHECK_THROWS_AS(correlate(fs, fbad), std::invalid_argument);
}

TEST_CASE("zero-initialized aggregator is the identity and keeps shape") {
    for (AggregatorKind kind : {AggregatorKind::Conv, AggregatorKind::Attention}) {
        ModelConfig cfg = small_config();
        cfg.aggregator = kind;
        ModelParams params = ModelParams::init(cfg, 11, 16);
        Rng rng(19);
        Tensor raw = random_tensor({16, 16}, rng);
        CostVolume c{constant(raw), 4, 4, 4, 4, false};
        CostVolume out = aggregate(c, ModelVars::frozen(params));
        CHECK(out.aggregated);
        CHECK(out.values.value().shape() == raw.shape());
        for (std::int64_t i = 0; i < raw.size(); ++i)
            CHECK(out.values.value()[i] == doctest::Approx(raw[i]).epsilon(1e-12));
        CHECK_THROWS_AS(aggregate(out, ModelVars::frozen(params)), std::invalid_argument);
    }
}

TEST_CASE("aggregator gradients match finite differences") {
    for (AggregatorKind kind : {AggregatorKind::Conv, AggregatorKind::Attention}) {
        ModelConfig cfg = small_config();
        cfg.aggregator = kind;
        ModelParams params = ModelParams::init(cfg, 23, 9);
        // Give the zero-initialized stages mass so their gradients are informative.
        Rng rng(29);
        for (auto& [name, t] : params.named())
            for (std::int64_t i = 0; i < t->size(); ++i)
                (*t)[i] += static_cast<real>(rng.uniform(-0.3, 0.3));

        Tensor raw = random_tensor({9, 9}, rng);
        std::vector<Tensor> leaves;
        if (kind == AggregatorKind::Conv)
            leaves = {params.agg1_w, params.agg1_b, params.agg2_w, params.agg2_b};
        else
            leaves = {params.attn_wq, params.attn_wk, params.attn_wv};

        GraphBuilder build = [&](const std::vector<Var>& p) {
            ModelVars vars = ModelVars::frozen(params);
            if (kind == AggregatorKind::Conv) {
                vars.agg1_w = p[0];
                vars.agg1_b = p[1];
                vars.agg2_w = p[2];
                vars.agg2_b = p[3];
            } else {
                vars.attn_wq = p[0];
                vars.attn_wk = p[1];
                vars.attn_wv = p[2];
            }
            CostVolume c{constant(raw), 3, 3, 3, 3, false};
            Var out = aggregate(c, vars).values;
            return sum_all(mul(out, add_scalar(out, 0.1)));
        };
        CHECK(max_grad_rel_err(build, leaves) < 1e-4);
    }
}

TEST_CASE("to_probability normalizes rows over the source axis") {
    CostVolume c{constant(Tensor::from_data({1, 3}, {0.7, 0.7, 0.7})), 1, 1, 1, 3, true};
    MatchingProbability p = to_probability(c, 1);
    for (int j = 0; j < 3; ++j) CHECK(p.values.value()[j] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    CostVolume c2{constant(Tensor::from_data({1, 2}, {static_cast<real>(std::log(2.0)), 0})), 1, 1,
                  1, 2, true};
    MatchingProbability p2 = to_probability(c2, 1);
    CHECK(std::abs(static_cast<double>(p2.values.value()[0]) - 2.0 / 3) < 1e-9);
    CHECK(std::abs(static_cast<double>(p2.values.value()[1]) - 1.0 / 3) < 1e-9);

    CHECK_THROWS_AS(to_probability(c2, 0), std::invalid_argument);
}

TEST_CASE("small temperature concentrates on the row argmax") {
    Rng rng(31);
    Tensor scores = random_tensor({4, 8}, rng, -0.5, 0.5);
    scores.at(2, 5) += real(0.2);  // ensure a clear gap on one row
    CostVolume c{constant(scores), 2, 2, 2, 4, true};
    MatchingProbability p = to_probability(c, real(1e-3));
    for (int i = 0; i < 4; ++i) {
        const real* row = scores.data() + static_cast<std::size_t>(i) * 8;
        int best = 0;
        real second = -1e30f;
        for (int j = 1; j < 8; ++j)
            if (row[j] > row[best]) best = j;
        for (int j = 0; j < 8; ++j)
            if (j != best) second = std::max(second, row[j]);
        if (row[best] - second >= real(0.1)) {
            CHECK(p.values.value().at(i, best) > real(0.99));
        }
    }
}

TEST_CASE("readout of one-hot and symmetric rows") {
    const int hs = 6, ws = 8;
    Tensor p({2, hs * ws});
    p.at(0, 3 * ws + 5) = 1;        // one-hot at (x=5, y=3)
    p.at(1, 2 * ws + 0) = real(0.5);  // uniform over x=0 and x=2, same y
    p.at(1, 2 * ws + 2) = real(0.5);

    Tensor soft = soft_readout_values(p, hs, ws);
    CHECK(soft.at(0, 0) == doctest::Approx(5.0));
    CHECK(soft.at(0, 1) == doctest::Approx(3.0));
    CHECK(soft.at(1, 0) == doctest::Approx(1.0));
    CHECK(soft.at(1, 1) == doctest::Approx(2.0));

    std::vector<int> hard = hard_readout(p);
    CHECK(hard[0] == 3 * ws + 5);
    CHECK(hard[1] == 2 * ws + 0);  // tie resolves to the lowest flattened index
}

TEST_CASE("hard readout equals a brute-force scan on random rows") {
    Rng rng(41);
    Tensor p = random_row_stochastic(20, 15, rng);
    std::vector<int> hard = hard_readout(p);
    for (int i = 0; i < 20; ++i) {
        int best = 0;
        for (int j = 0; j < 15; ++j)
            if (p.at(i, j) > p.at(i, best)) best = j;
        CHECK(hard[static_cast<std::size_t>(i)] == best);
    }
}

TEST_CASE("full forward is deterministic, row-stochastic, and hull-bounded") {
    ModelConfig cfg = small_config();
    ModelParams params = ModelParams::init(cfg, 17, 16);
    Tensor src = random_image(16, 16, 100);
    Tensor tgt = random_image(16, 16, 101);

    MatchForward a = forward_match(constant(src), constant(tgt), ModelVars::frozen(params));
    MatchForward b = forward_match(constant(src), constant(tgt), ModelVars::frozen(params));
    CHECK(a.prob.values.value().values() == b.prob.values.value().values());

    const Tensor& p = a.prob.values.value();
    for (int i = 0; i < p.extent(0); ++i) {
        real sum = 0;
        for (int j = 0; j < p.extent(1); ++j) sum += p.at(i, j);
        CHECK(std::abs(static_cast<double>(sum) - 1.0) < 1e-6);
    }
    Tensor soft = soft_readout_values(p, a.prob.hs, a.prob.ws);
    for (int i = 0; i < soft.extent(0); ++i) {
        CHECK(soft.at(i, 0) >= real(0));
        CHECK(soft.at(i, 0) <= real(a.prob.ws - 1));
        CHECK(soft.at(i, 1) >= real(0));
        CHECK(soft.at(i, 1) <= real(a.prob.hs - 1));
    }
}

TEST_CASE("end-to-end gradient through extract/correlate/aggregate/softmax") {
    ModelConfig cfg;
    cfg.c1 = 4;
    cfg.c2 = 5;
    cfg.d = 6;
    cfg.agg_hidden = 2;
    ModelParams params = ModelParams::init(cfg, 51, 16);
    Tensor src = random_image(16, 16, 200);
    Tensor tgt = random_image(16, 16, 201);

    std::vector<Tensor> leaves;
    for (auto& [name, t] : params.named()) leaves.push_back(*t);

    GraphBuilder build = [&](const std::vector<Var>& p) {
        ModelVars vars;
        vars.config = &params.config;
        vars.conv1_w = p[0];
        vars.conv1_b = p[1];
        vars.conv2_w = p[2];
        vars.conv2_b = p[3];
        vars.conv3_w = p[4];
        vars.conv3_b = p[5];
        vars.agg1_w = p[6];
        vars.agg1_b = p[7];
        vars.agg2_w = p[8];
        vars.agg2_b = p[9];
        MatchForward f = forward_match(constant(src), constant(tgt), vars);
        // Scalar probe: weighted sum of P keeps every path active.
        Rng probe_rng(77);
        Tensor weights = random_tensor(f.prob.values.value().shape(), probe_rng);
        return sum_all(mul(f.prob.values, constant(weights)));
    };
    CHECK(max_grad_rel_err(build, leaves, 1e-5) < 1e-4);
}

TEST_CASE("parameter count stays desk-scale") {
    ModelParams dflt = ModelParams::init(ModelConfig{}, 1, 256);
    CHECK(dflt.parameter_count() <= 100000);
    ModelConfig attn;
    attn.aggregator = AggregatorKind::Attention;
    ModelParams a = ModelParams::init(attn, 1, 256);
    CHECK(a.parameter_count() <= 100000);
}
