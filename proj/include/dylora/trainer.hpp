#pragma once

#include <cstdint>
#include <vector>

#include "dylora/adapter.hpp"
#include "dylora/matrix.hpp"
#include "dylora/sampler.hpp"

namespace dylora {

enum class UpdateMode { Frozen, Cascade };
enum class LossMode { Individual, Summation };
enum class LossKind { Mse, CrossEntropy };
enum class OptKind { Sgd, AdamLike };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled, applied to touched slices only
};

struct RankDistSpec {
    RankDistKind kind = RankDistKind::Uniform;
    double p = 0.15; // geometric only
};

struct TrainConfig {
    UpdateMode update_mode = UpdateMode::Cascade;
    LossMode loss_mode = LossMode::Individual;
    std::uint64_t steps = 1;
    std::uint64_t batch_size = 32;
    double learning_rate = 4e-4;
    std::uint64_t warmup_steps = 0; // linear ramp over the first N steps
    OptKind optimizer = OptKind::Sgd;
    AdamParams adam;
    std::uint64_t seed = 42;
    RankDistSpec distribution;
};

// Deterministic cost ledger of a run; truncated_passes counts rank-b
// forward/backward evaluations, the unit behind all cost comparisons.
struct StepCounters {
    std::uint64_t steps_run = 0;
    std::uint64_t truncated_passes = 0;
    std::uint64_t param_scalar_updates = 0;
};

// Training view of a sample set: inputs x (d x n) and either regression
// targets y (m x n) or 1-based class labels per column.
struct Dataset {
    Matrix x;
    Matrix y;
    std::vector<int> labels;
    LossKind loss = LossKind::Mse;

    std::size_t sample_count() const { return x.cols(); }
};

struct LossResult {
    double value = 0.0;
    Matrix grad; // dL/dpred, same shape as the prediction
};

// Mean-reduced scalar losses over the batch (per-entry mean for MSE,
// per-sample mean for cross-entropy), with the gradient wrt predictions.
LossResult loss_mse(const Matrix& pred, const Matrix& target);
LossResult loss_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

struct DynamicLoss {
    double value = 0.0;
    AdapterGrads grads;
};

// Loss of the rank-b truncated model on the batch, with factor gradients.
DynamicLoss dynamic_loss(const DyLoraAdapter& a, const Dataset& batch, int b,
                         StepCounters& counters);

struct SummationLoss {
    double value = 0.0;
    Matrix g_up; // m x r_max, p_B-weighted accumulation
    Matrix g_dw; // r_max x d
};

// sum_b p_B(b) * rank-b loss with gradients accumulated over the full
// factors; costs one truncated pass per rank in the support.
SummationLoss summation_loss(const DyLoraAdapter& a, const Dataset& batch,
                             const RankDistribution& dist, StepCounters& counters);

// Per-slice optimizer state: moments and step counts are kept per w_up
// column / w_dw row, so slices a step does not touch keep their state
// bit-identical too.
struct OptimizerState {
    OptKind kind = OptKind::Sgd;
    AdamParams adam;
    Matrix m_up, v_up; // m x r_max
    Matrix m_dw, v_dw; // r_max x d
    std::vector<std::uint64_t> up_col_steps;
    std::vector<std::uint64_t> dw_row_steps;
};

OptimizerState make_optimizer_state(const DyLoraAdapter& a, const TrainConfig& cfg);

// Frozen mode: only w_dw row b and w_up column b change.
void apply_update_frozen(DyLoraAdapter& a, const AdapterGrads& grads, int b,
                         double lr, OptimizerState& opt, StepCounters& counters);

// Cascade mode: rows/columns 1..b change; indices > b stay bit-identical.
void apply_update_cascade(DyLoraAdapter& a, const AdapterGrads& grads, int b,
                          double lr, OptimizerState& opt, StepCounters& counters);

struct TraceRow {
    std::uint64_t step = 0;
    int b = 0; // sampled rank; 0 in summation mode (no single rank)
    double loss = 0.0;
};

struct TrainResult {
    StepCounters counters;
    std::vector<TraceRow> trace;
};

// One full run: per step, draw a rank and a batch, evaluate the dynamic (or
// summation) loss, and apply the configured update. Deterministic function
// of (initial adapter, data, config).
TrainResult train(DyLoraAdapter& a, const Dataset& data, const TrainConfig& cfg);

// Static-LoRA baseline: the degenerate run at one fixed rank (point-mass
// distribution, cascade updates). Requires r_min == r_max == r.
TrainResult train_static_lora(DyLoraAdapter& a, const Dataset& data,
                              const TrainConfig& cfg, int fixed_rank);

} // namespace dylora
