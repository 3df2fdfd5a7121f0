#pragma once

#include <cstdint>

#include "semimatch/autodiff.hpp"
#include "semimatch/keypoints.hpp"
#include "semimatch/model.hpp"
#include "semimatch/pseudolabel.hpp"

namespace semimatch {

enum class UnsupKind { Contrastive, Aepe };
enum class LambdaMode { Adaptive, Fixed };
enum class ReadoutMode { Soft, Hard };

struct LossConfig {
    double gamma = 0.1;  // contrastive temperature
    double tau = 0.5;    // confidence threshold
    UnsupKind unsup = UnsupKind::Contrastive;
    LambdaMode lambda_mode = LambdaMode::Adaptive;
    double lambda_fixed = 0.0;
    int warmup_epochs = -1;        // < 0: derive from warmup_fraction
    double warmup_fraction = 0.2;  // of total epochs
    // The per-position sum is divided by sum(m) so the loss scale does not
    // depend on how many positions survive masking; set false for a raw sum.
    bool normalize_unsup = true;

    void validate() const;
    int resolve_warmup_epochs(int total_epochs) const;
};

// Sparse ground truth on the target grid. Pixel coordinates quantize to the
// cell containing them (floor).
struct KeypointAnnotation {
    Keypoints pairs;
    int class_label = 0;
    int grid_h = 0, grid_w = 0;
    int image_h = 0, image_w = 0;

    int target_cell(const KeypointPair& kp) const;  // flat target-grid index
    int source_cell(const KeypointPair& kp) const;  // flat source-grid index
    std::vector<std::uint8_t> indicator() const;    // c(i) over the target grid
};

struct LossResult {
    Var value;           // scalar
    bool flagged_zero = false;  // no keypoints / no confident pseudo-labels
    double weight_sum = 0;      // sum(m) actually used (unsupervised losses)
};

// Mean keypoint distance, in source-grid cells, between the readout of P at
// annotated target cells and the one-hot ground-truth readout. Soft readout
// is differentiable; hard readout is evaluation-only.
LossResult supervised_loss(const MatchingProbability& p, const KeypointAnnotation& ann,
                           ReadoutMode mode = ReadoutMode::Soft);

// Masked InfoNCE over the strong-branch aggregated costs (logits):
// -sum_i m(i) log softmax(s(i,:)/gamma)[i'] / sum_i m(i).
LossResult contrastive_unsup_loss(const CostVolume& refined_strong, const PseudoLabel& pseudo,
                                  const ConfidenceMask& m, const LossConfig& config);

// Masked mean endpoint error between the strong branch's soft readout and
// the pseudo-label's hard target coordinates.
LossResult aepe_unsup_loss(const MatchingProbability& p_strong, const PseudoLabel& pseudo,
                           const ConfidenceMask& m, const LossConfig& config);

// Cross-entropy against the one-hot source cell dictated by the warp
// (nearest preimage with cell quantization). Baseline mode only.
LossResult selfsup_loss(const MatchingProbability& p, const WarpField& warp_grid);

// lambda = L*_sup / L*_unsup from detached values; 0 during warm-up, when
// the unsupervised loss is flagged, or when L*_unsup < 1e-8.
double lambda_value(double detached_sup, double detached_unsup, bool unsup_flagged,
                    const LossConfig& config, bool in_warmup);

struct TotalLoss {
    Var value;
    double lambda = 0;
};
TotalLoss total_loss(const LossResult& sup, const LossResult& unsup, const LossConfig& config,
                     bool in_warmup);

}  // namespace semimatch
