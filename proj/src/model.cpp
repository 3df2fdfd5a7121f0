#include "semimatch/model.hpp"

#include <cmath>
#include <stdexcept>

#include "semimatch/rng.hpp"

namespace semimatch {

namespace {

Tensor he_normal(const std::vector<int>& shape, double fan_in, Rng& rng) {
    Tensor t(shape);
    const double stddev = std::sqrt(2.0 / fan_in);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.normal() * stddev);
    return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed, int grid_cells) {
    Rng rng(mix_seed({seed, 0x0DE1ULL}));
    ModelParams p;
    p.config = config;
    p.conv1_w = he_normal({config.c1, config.in_channels, 3, 3}, config.in_channels * 9.0, rng);
    p.conv1_b = Tensor({config.c1});
    p.conv2_w = he_normal({config.c2, config.c1, 3, 3}, config.c1 * 9.0, rng);
    p.conv2_b = Tensor({config.c2});
    p.conv3_w = he_normal({config.d, config.c2, 3, 3}, config.c2 * 9.0, rng);
    p.conv3_b = Tensor({config.d});
    if (config.aggregator == AggregatorKind::Conv) {
        p.agg1_w = he_normal({config.agg_hidden, 1, 3, 3}, 9.0, rng);
        p.agg1_b = Tensor({config.agg_hidden});
        // Zero output stage: the residual refinement starts as the identity.
        p.agg2_w = Tensor({1, config.agg_hidden, 3, 3});
        p.agg2_b = Tensor({1});
    } else {
        const double stddev = 1.0 / std::sqrt(static_cast<double>(grid_cells));
        p.attn_wq = Tensor({grid_cells, config.attn_dk});
        p.attn_wk = Tensor({grid_cells, config.attn_dk});
        for (std::int64_t i = 0; i < p.attn_wq.size(); ++i) {
            p.attn_wq[i] = static_cast<real>(rng.normal() * stddev);
            p.attn_wk[i] = static_cast<real>(rng.normal() * stddev);
        }
        p.attn_wv = Tensor({grid_cells, grid_cells});
    }
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    std::vector<std::pair<std::string, Tensor*>> out = {
        {"conv1_w", &conv1_w}, {"conv1_b", &conv1_b}, {"conv2_w", &conv2_w},
        {"conv2_b", &conv2_b}, {"conv3_w", &conv3_w}, {"conv3_b", &conv3_b},
    };
    if (config.aggregator == AggregatorKind::Conv) {
        out.emplace_back("agg1_w", &agg1_w);
        out.emplace_back("agg1_b", &agg1_b);
        out.emplace_back("agg2_w", &agg2_w);
        out.emplace_back("agg2_b", &agg2_b);
    } else {
        out.emplace_back("attn_wq", &attn_wq);
        out.emplace_back("attn_wk", &attn_wk);
        out.emplace_back("attn_wv", &attn_wv);
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    auto mutable_view = const_cast<ModelParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
    return out;
}

std::int64_t ModelParams::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : named()) n += t->size();
    return n;
}

namespace {

ModelVars make_vars(const ModelParams& p, bool trainable) {
    ModelVars v;
    v.config = &p.config;
    auto wrap = [&](const Tensor& t) { return leaf(t, trainable); };
    v.conv1_w = wrap(p.conv1_w);
    v.conv1_b = wrap(p.conv1_b);
    v.conv2_w = wrap(p.conv2_w);
    v.conv2_b = wrap(p.conv2_b);
    v.conv3_w = wrap(p.conv3_w);
    v.conv3_b = wrap(p.conv3_b);
    if (p.config.aggregator == AggregatorKind::Conv) {
        v.agg1_w = wrap(p.agg1_w);
        v.agg1_b = wrap(p.agg1_b);
        v.agg2_w = wrap(p.agg2_w);
        v.agg2_b = wrap(p.agg2_b);
    } else {
        v.attn_wq = wrap(p.attn_wq);
        v.attn_wk = wrap(p.attn_wk);
        v.attn_wv = wrap(p.attn_wv);
    }
    return v;
}

}  // namespace

ModelVars ModelVars::trainable(const ModelParams& p) { return make_vars(p, true); }
ModelVars ModelVars::frozen(const ModelParams& p) { return make_vars(p, false); }

std::vector<std::pair<std::string, Var>> ModelVars::named() const {
    std::vector<std::pair<std::string, Var>> out = {
        {"conv1_w", conv1_w}, {"conv1_b", conv1_b}, {"conv2_w", conv2_w},
        {"conv2_b", conv2_b}, {"conv3_w", conv3_w}, {"conv3_b", conv3_b},
    };
    if (config->aggregator == AggregatorKind::Conv) {
        out.emplace_back("agg1_w", agg1_w);
        out.emplace_back("agg1_b", agg1_b);
        out.emplace_back("agg2_w", agg2_w);
        out.emplace_back("agg2_b", agg2_b);
    } else {
        out.emplace_back("attn_wq", attn_wq);
        out.emplace_back("attn_wk", attn_wk);
        out.emplace_back("attn_wv", attn_wv);
    }
    return out;
}

FeatureMap extract_features(const Var& image, const ModelVars& params) {
    const Tensor& img = image.value();
    if (img.rank() != 3 || img.extent(0) != params.config->in_channels) {
        throw std::invalid_argument("extract_features: expected [" +
                                    std::to_string(params.config->in_channels) +
                                    ",H,W] image, got " + img.shape_str());
    }
    const int h = img.extent(1), w = img.extent(2);
    if (h % 4 != 0 || w % 4 != 0) {
        throw std::invalid_argument("extract_features: image extents must be divisible by 4, got " +
                                    img.shape_str());
    }
    for (std::int64_t i = 0; i < img.size(); ++i) {
        if (img[i] < real(-1e-9) || img[i] > real(1) + real(1e-9)) {
            throw std::invalid_argument("extract_features: image values must lie in [0,1]");
        }
    }
    Var x = reshape(image, {1, params.config->in_channels, h, w});
    x = relu(conv2d(x, params.conv1_w, params.conv1_b, 2, 1));
    x = relu(conv2d(x, params.conv2_w, params.conv2_b, 2, 1));
    x = conv2d(x, params.conv3_w, params.conv3_b, 1, 1);
    const int gh = h / 4, gw = w / 4;
    Var flat = reshape(x, {params.config->d, gh * gw});
    Var normalized = l2_normalize_columns(flat);
    if (!normalized.value().all_finite()) {
        throw std::runtime_error("extract_features: non-finite activations (input " +
                                 img.shape_str() + ")");
    }
    FeatureMap f;
    f.values = normalized;
    f.d = params.config->d;
    f.h = gh;
    f.w = gw;
    return f;
}

CostVolume correlate(const FeatureMap& f_src, const FeatureMap& f_tgt) {
    if (f_src.d != f_tgt.d) {
        throw std::invalid_argument("correlate: feature channel mismatch, " +
                                    std::to_string(f_src.d) + " vs " + std::to_string(f_tgt.d));
    }
    CostVolume c;
    c.values = matmul(transpose2d(f_tgt.values), f_src.values);
    c.ht = f_tgt.h;
    c.wt = f_tgt.w;
    c.hs = f_src.h;
    c.ws = f_src.w;
    c.aggregated = false;
    return c;
}

CostVolume aggregate(const CostVolume& c, const ModelVars& params) {
    if (c.aggregated) throw std::invalid_argument("aggregate: input volume is already aggregated");
    const int nt = c.ht * c.wt;
    const int ns = c.hs * c.ws;
    Var refined;
    if (params.config->aggregator == AggregatorKind::Conv) {
        // Shared 2D refinement over each target position's source plane.
        Var planes = reshape(c.values, {nt, 1, c.hs, c.ws});
        Var hidden = relu(conv2d(planes, params.agg1_w, params.agg1_b, 1, 1));
        Var delta = conv2d(hidden, params.agg2_w, params.agg2_b, 1, 1);
        refined = add(c.values, reshape(delta, {nt, ns}));
    } else {
        // Single-head attention across target positions (rows as tokens).
        Var q = matmul(c.values, params.attn_wq);  // [Nt, dk]
        Var k = matmul(c.values, params.attn_wk);
        const real inv_sqrt_dk = real(1) / std::sqrt(static_cast<real>(params.config->attn_dk));
        Var attn = softmax_lastdim(scale(matmul(q, transpose2d(k)), inv_sqrt_dk));  // [Nt, Nt]
        Var value = matmul(c.values, params.attn_wv);  // [Nt, Ns]
        refined = add(c.values, matmul(attn, value));
    }
    CostVolume out = c;
    out.values = refined;
    out.aggregated = true;
    return out;
}

MatchingProbability to_probability(const CostVolume& c, real temperature) {
    if (!(temperature > real(0))) {
        throw std::invalid_argument("to_probability: temperature must be > 0");
    }
    MatchingProbability p;
    p.values = softmax_lastdim(scale(c.values, real(1) / temperature));
    p.ht = c.ht;
    p.wt = c.wt;
    p.hs = c.hs;
    p.ws = c.ws;
    return p;
}

MatchForward forward_match(const Var& src_image, const Var& tgt_image, const ModelVars& params) {
    MatchForward f;
    f.f_src = extract_features(src_image, params);
    f.f_tgt = extract_features(tgt_image, params);
    f.raw = correlate(f.f_src, f.f_tgt);
    f.refined = aggregate(f.raw, params);
    f.prob = to_probability(f.refined, params.config->temperature);
    return f;
}

MatchingProbability probability_from_cost(const Var& raw_cost, int ht, int wt, int hs, int ws,
                                          const ModelVars& params) {
    CostVolume c;
    c.values = raw_cost;
    c.ht = ht;
    c.wt = wt;
    c.hs = hs;
    c.ws = ws;
    c.aggregated = false;
    return to_probability(aggregate(c, params), params.config->temperature);
}

namespace {

Tensor cell_coordinates(int hs, int ws) {
    Tensor coords({hs * ws, 2});
    for (int y = 0; y < hs; ++y)
        for (int x = 0; x < ws; ++x) {
            coords.at(y * ws + x, 0) = static_cast<real>(x);
            coords.at(y * ws + x, 1) = static_cast<real>(y);
        }
    return coords;
}

}  // namespace

Var soft_readout(const MatchingProbability& p) {
    return matmul(p.values, constant(cell_coordinates(p.hs, p.ws)));
}

Tensor soft_readout_values(const Tensor& p, int hs, int ws) {
    return matmul(constant(p), constant(cell_coordinates(hs, ws))).value();
}

std::vector<int> hard_readout(const Tensor& p) {
    if (p.rank() != 2) throw std::invalid_argument("hard_readout: expected rank-2, got " + p.shape_str());
    const int m = p.extent(0), n = p.extent(1);
    std::vector<int> out(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const real* row = p.data() + static_cast<std::size_t>(i) * n;
        int best = 0;
        for (int j = 1; j < n; ++j)
            if (row[j] > row[best]) best = j;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

}  // namespace semimatch
