#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semimatch/autodiff.hpp"
#include "semimatch/tensor.hpp"

namespace semimatch {

// Matching network: a small convolutional feature extractor over 64x64
// inputs producing a 16x16 feature grid, dense correlation, a learnable
// cost aggregator with a residual connection, and row-wise softmax into
// matching probabilities.

enum class AggregatorKind { Conv, Attention };

struct ModelConfig {
    int in_channels = 3;
    int c1 = 16;
    int c2 = 32;
    int d = 32;          // feature dimension
    int agg_hidden = 4;  // hidden planes of the conv aggregator
    int attn_dk = 16;    // query/key width of the attention aggregator
    AggregatorKind aggregator = AggregatorKind::Conv;
    real temperature = real(1);  // softmax temperature for P
};

struct ModelParams {
    ModelConfig config;
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor conv3_w, conv3_b;
    Tensor agg1_w, agg1_b;  // conv aggregator (hidden conv)
    Tensor agg2_w, agg2_b;  // conv aggregator (output conv, zero-initialized)
    Tensor attn_wq, attn_wk, attn_wv;  // attention aggregator (wv zero-initialized)

    static ModelParams init(const ModelConfig& config, std::uint64_t seed, int grid_cells);

    // Ordered view over the active parameter tensors (checkpointing and the
    // optimizer both iterate this).
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
    std::int64_t parameter_count() const;
};

// Per-forward handles; `trainable` records gradients, `frozen` does not.
struct ModelVars {
    const ModelConfig* config = nullptr;
    Var conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b;
    Var agg1_w, agg1_b, agg2_w, agg2_b;
    Var attn_wq, attn_wk, attn_wv;

    static ModelVars trainable(const ModelParams& p);
    static ModelVars frozen(const ModelParams& p);
    std::vector<std::pair<std::string, Var>> named() const;
};

struct FeatureMap {
    Var values;  // [d, h*w], position-wise L2-normalized columns
    int d = 0, h = 0, w = 0;
};

struct CostVolume {
    Var values;  // [ht*wt, hs*ws]
    int ht = 0, wt = 0, hs = 0, ws = 0;
    bool aggregated = false;
};

struct MatchingProbability {
    Var values;  // [ht*wt, hs*ws], row-stochastic
    int ht = 0, wt = 0, hs = 0, ws = 0;
};

// image is [3,H,W] with values in [0,1]; H and W must be divisible by 4
// (two stride-2 stages). Throws on non-finite activations.
FeatureMap extract_features(const Var& image, const ModelVars& params);

// C[i,j] = F_t(i) . F_s(j).
CostVolume correlate(const FeatureMap& f_src, const FeatureMap& f_tgt);

// Residual refinement: output = C + g(C; params). Input must be raw.
CostVolume aggregate(const CostVolume& c, const ModelVars& params);

MatchingProbability to_probability(const CostVolume& c, real temperature);

// Full pipeline for one image pair.
struct MatchForward {
    FeatureMap f_src, f_tgt;
    CostVolume raw, refined;
    MatchingProbability prob;
};
MatchForward forward_match(const Var& src_image, const Var& tgt_image, const ModelVars& params);

// Aggregate + softmax from an existing raw cost matrix (used for the
// backward-direction pass, which reuses transposed correlation scores).
MatchingProbability probability_from_cost(const Var& raw_cost, int ht, int wt, int hs, int ws,
                                          const ModelVars& params);

// Probability-weighted mean source coordinate per row, in cell units: [Nt,2]
// with column 0 = x, column 1 = y.
Var soft_readout(const MatchingProbability& p);
Tensor soft_readout_values(const Tensor& p, int hs, int ws);

// Flat argmax index per row; ties resolve to the lowest flattened index.
std::vector<int> hard_readout(const Tensor& p);

}  // namespace semimatch
