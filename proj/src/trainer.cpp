#include "dylora/trainer.hpp"

#include <cmath>
#include <string>

#include "dylora/errors.hpp"

namespace dylora {

LossResult loss_mse(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) {
        throw ShapeError("loss_mse: prediction " + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + " vs target " +
                         std::to_string(target.rows()) + "x" +
                         std::to_string(target.cols()));
    }
    LossResult r;
    r.grad = Matrix(pred.rows(), pred.cols());
    const double inv = 1.0 / static_cast<double>(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred.data()[i] - target.data()[i];
        acc += diff * diff;
        r.grad.data()[i] = 2.0 * diff * inv;
    }
    r.value = acc * inv;
    return r;
}

LossResult loss_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t classes = logits.rows();
    const std::size_t n = logits.cols();
    if (labels.size() != n) {
        throw ShapeError("loss_cross_entropy: " + std::to_string(n) + " columns but " +
                         std::to_string(labels.size()) + " labels");
    }
    LossResult r;
    r.grad = Matrix(classes, n);
    const double inv = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const int label = labels[j];
        if (label < 1 || static_cast<std::size_t>(label) > classes) {
            throw ShapeError("loss_cross_entropy: label " + std::to_string(label) +
                             " outside [1," + std::to_string(classes) + "]");
        }
        double maxv = logits.at(0, j);
        for (std::size_t c = 1; c < classes; ++c) {
            maxv = std::max(maxv, logits.at(c, j));
        }
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            z += std::exp(logits.at(c, j) - maxv);
        }
        const std::size_t li = static_cast<std::size_t>(label - 1);
        acc += -(logits.at(li, j) - maxv - std::log(z));
        for (std::size_t c = 0; c < classes; ++c) {
            const double softmax = std::exp(logits.at(c, j) - maxv) / z;
            r.grad.at(c, j) = (softmax - (c == li ? 1.0 : 0.0)) * inv;
        }
    }
    r.value = acc * inv;
    return r;
}

namespace {

LossResult batch_loss(const Matrix& pred, const Dataset& batch) {
    if (batch.loss == LossKind::Mse) {
        return loss_mse(pred, batch.y);
    }
    return loss_cross_entropy(pred, batch.labels);
}

} // namespace

DynamicLoss dynamic_loss(const DyLoraAdapter& a, const Dataset& batch, int b,
                         StepCounters& counters) {
    const Matrix pred = forward(a, batch.x, b);
    const LossResult l = batch_loss(pred, batch);
    DynamicLoss out;
    out.value = l.value;
    out.grads = backward(a, batch.x, b, l.grad);
    counters.truncated_passes += 1;
    return out;
}

SummationLoss summation_loss(const DyLoraAdapter& a, const Dataset& batch,
                             const RankDistribution& dist, StepCounters& counters) {
    if (dist.r_min < a.r_min || dist.r_max > a.r_max) {
        throw RankError("summation_loss: distribution support [" +
                        std::to_string(dist.r_min) + "," + std::to_string(dist.r_max) +
                        "] outside adapter range");
    }
    SummationLoss out;
    out.g_up = Matrix(a.out_dim(), static_cast<std::size_t>(a.r_max));
    out.g_dw = Matrix(static_cast<std::size_t>(a.r_max), a.in_dim());
    for (int b = dist.r_min; b <= dist.r_max; ++b) {
        const double w = dist.prob_of(b);
        const DynamicLoss dl = dynamic_loss(a, batch, b, counters);
        out.value += w * dl.value;
        const auto ub = static_cast<std::size_t>(b);
        for (std::size_t i = 0; i < a.out_dim(); ++i) {
            for (std::size_t j = 0; j < ub; ++j) {
                out.g_up.at(i, j) += w * dl.grads.g_up.at(i, j);
            }
        }
        for (std::size_t i = 0; i < ub; ++i) {
            for (std::size_t j = 0; j < a.in_dim(); ++j) {
                out.g_dw.at(i, j) += w * dl.grads.g_dw.at(i, j);
            }
        }
    }
    return out;
}

OptimizerState make_optimizer_state(const DyLoraAdapter& a, const TrainConfig& cfg) {
    OptimizerState s;
    s.kind = cfg.optimizer;
    s.adam = cfg.adam;
    if (s.kind == OptKind::AdamLike) {
        const auto r = static_cast<std::size_t>(a.r_max);
        s.m_up = Matrix(a.out_dim(), r);
        s.v_up = Matrix(a.out_dim(), r);
        s.m_dw = Matrix(r, a.in_dim());
        s.v_dw = Matrix(r, a.in_dim());
        s.up_col_steps.assign(r, 0);
        s.dw_row_steps.assign(r, 0);
    }
    return s;
}

namespace {

// Update w_up column `col` (0-based) from gradient column `gcol` of g_up.
void step_up_col(DyLoraAdapter& a, const Matrix& g_up, std::size_t gcol,
                 std::size_t col, double lr, OptimizerState& opt) {
    const std::size_t m = a.out_dim();
    if (opt.kind == OptKind::Sgd) {
        for (std::size_t i = 0; i < m; ++i) {
            a.w_up.at(i, col) -= lr * g_up.at(i, gcol);
        }
        return;
    }
    const AdamParams& p = opt.adam;
    const std::uint64_t t = ++opt.up_col_steps[col];
    const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < m; ++i) {
        const double g = g_up.at(i, gcol);
        double& mo = opt.m_up.at(i, col);
        double& vo = opt.v_up.at(i, col);
        mo = p.beta1 * mo + (1.0 - p.beta1) * g;
        vo = p.beta2 * vo + (1.0 - p.beta2) * g * g;
        const double mhat = mo / c1;
        const double vhat = vo / c2;
        double& w = a.w_up.at(i, col);
        w -= lr * (mhat / (std::sqrt(vhat) + p.eps) + p.weight_decay * w);
    }
}

void step_dw_row(DyLoraAdapter& a, const Matrix& g_dw, std::size_t grow,
                 std::size_t row, double lr, OptimizerState& opt) {
    const std::size_t d = a.in_dim();
    if (opt.kind == OptKind::Sgd) {
        for (std::size_t j = 0; j < d; ++j) {
            a.w_dw.at(row, j) -= lr * g_dw.at(grow, j);
        }
        return;
    }
    const AdamParams& p = opt.adam;
    const std::uint64_t t = ++opt.dw_row_steps[row];
    const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
    for (std::size_t j = 0; j < d; ++j) {
        const double g = g_dw.at(grow, j);
        double& mo = opt.m_dw.at(row, j);
        double& vo = opt.v_dw.at(row, j);
        mo = p.beta1 * mo + (1.0 - p.beta1) * g;
        vo = p.beta2 * vo + (1.0 - p.beta2) * g * g;
        const double mhat = mo / c1;
        const double vhat = vo / c2;
        double& w = a.w_dw.at(row, j);
        w -= lr * (mhat / (std::sqrt(vhat) + p.eps) + p.weight_decay * w);
    }
}

void check_grads(const DyLoraAdapter& a, const AdapterGrads& grads, int b,
                 const char* op) {
    if (b < a.r_min || b > a.r_max) {
        throw RankError(std::string(op) + ": rank " + std::to_string(b) +
                        " outside adapter range");
    }
    if (grads.b != b || grads.g_up.rows() != a.out_dim() ||
        grads.g_up.cols() != static_cast<std::size_t>(b) ||
        grads.g_dw.rows() != static_cast<std::size_t>(b) ||
        grads.g_dw.cols() != a.in_dim()) {
        throw ShapeError(std::string(op) + ": gradients were not produced at rank " +
                         std::to_string(b));
    }
}

} // namespace

void apply_update_frozen(DyLoraAdapter& a, const AdapterGrads& grads, int b,
                         double lr, OptimizerState& opt, StepCounters& counters) {
    check_grads(a, grads, b, "apply_update_frozen");
    const auto idx = static_cast<std::size_t>(b - 1);
    step_up_col(a, grads.g_up, idx, idx, lr, opt);
    step_dw_row(a, grads.g_dw, idx, idx, lr, opt);
    counters.param_scalar_updates += a.out_dim() + a.in_dim();
}

void apply_update_cascade(DyLoraAdapter& a, const AdapterGrads& grads, int b,
                          double lr, OptimizerState& opt, StepCounters& counters) {
    check_grads(a, grads, b, "apply_update_cascade");
    for (std::size_t k = 0; k < static_cast<std::size_t>(b); ++k) {
        step_up_col(a, grads.g_up, k, k, lr, opt);
        step_dw_row(a, grads.g_dw, k, k, lr, opt);
    }
    counters.param_scalar_updates +=
        static_cast<std::uint64_t>(b) * (a.out_dim() + a.in_dim());
}

namespace {

void validate_config(const TrainConfig& cfg) {
    if (cfg.steps < 1) {
        throw ConfigError("train: steps must be >= 1");
    }
    if (cfg.batch_size < 1) {
        throw ConfigError("train: batch_size must be >= 1");
    }
    if (!(cfg.learning_rate >= 0.0)) {
        throw ConfigError("train: learning_rate must be non-negative");
    }
}

RankDistribution build_distribution(const TrainConfig& cfg, const DyLoraAdapter& a) {
    if (cfg.distribution.kind == RankDistKind::Uniform) {
        return make_uniform(a.r_min, a.r_max);
    }
    return make_geometric(a.r_min, a.r_max, cfg.distribution.p);
}

Dataset draw_batch(const Dataset& data, Rng& rng, std::uint64_t batch_size) {
    const std::size_t n = data.sample_count();
    if (n == 0) {
        throw ConfigError("train: dataset is empty");
    }
    Dataset batch;
    batch.loss = data.loss;
    batch.x = Matrix(data.x.rows(), batch_size);
    if (data.loss == LossKind::Mse) {
        batch.y = Matrix(data.y.rows(), batch_size);
    } else {
        batch.labels.resize(batch_size);
    }
    for (std::uint64_t jj = 0; jj < batch_size; ++jj) {
        const std::size_t src = rng.uniform_index(n);
        for (std::size_t i = 0; i < data.x.rows(); ++i) {
            batch.x.at(i, jj) = data.x.at(i, src);
        }
        if (data.loss == LossKind::Mse) {
            for (std::size_t i = 0; i < data.y.rows(); ++i) {
                batch.y.at(i, jj) = data.y.at(i, src);
            }
        } else {
            batch.labels[jj] = data.labels[src];
        }
    }
    return batch;
}

} // namespace

TrainResult train(DyLoraAdapter& a, const Dataset& data, const TrainConfig& cfg) {
    validate_config(cfg);
    if (data.x.rows() != a.in_dim()) {
        throw ShapeError("train: dataset inputs have " + std::to_string(data.x.rows()) +
                         " rows, adapter expects " + std::to_string(a.in_dim()));
    }
    if (data.loss == LossKind::Mse && (data.y.rows() != a.out_dim() ||
                                       data.y.cols() != data.x.cols())) {
        throw ShapeError("train: target shape does not match adapter output");
    }

    const RankDistribution dist = build_distribution(cfg, a);
    OptimizerState opt = make_optimizer_state(a, cfg);
    Rng rng(cfg.seed, kTrainStream);

    TrainResult result;
    result.trace.reserve(cfg.steps);

    for (std::uint64_t step = 0; step < cfg.steps; ++step) {
        // Fixed per-step draw layout: one rank draw, then batch_size index
        // draws. Summation mode consumes the rank draw without using it so
        // that a degenerate range produces identical trajectories.
        const int b = sample_rank(dist, rng);
        const Dataset batch = draw_batch(data, rng, cfg.batch_size);

        double lr = cfg.learning_rate;
        if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
            lr *= static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
        }

        double loss_value = 0.0;
        int trace_b = 0;
        if (cfg.loss_mode == LossMode::Individual) {
            const DynamicLoss dl = dynamic_loss(a, batch, b, result.counters);
            loss_value = dl.value;
            trace_b = b;
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("train: non-finite loss at step " +
                                      std::to_string(step));
            }
            if (cfg.update_mode == UpdateMode::Frozen) {
                apply_update_frozen(a, dl.grads, b, lr, opt, result.counters);
            } else {
                apply_update_cascade(a, dl.grads, b, lr, opt, result.counters);
            }
        } else {
            const SummationLoss sl = summation_loss(a, batch, dist, result.counters);
            loss_value = sl.value;
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("train: non-finite loss at step " +
                                      std::to_string(step));
            }
            // The weighted gradient lives on the full factors; apply it to
            // every row/column regardless of the Frozen/Cascade switch.
            AdapterGrads full;
            full.b = a.r_max;
            full.g_up = sl.g_up;
            full.g_dw = sl.g_dw;
            apply_update_cascade(a, full, a.r_max, lr, opt, result.counters);
        }
        result.counters.steps_run += 1;
        result.trace.push_back({step, trace_b, loss_value});
    }
    return result;
}

TrainResult train_static_lora(DyLoraAdapter& a, const Dataset& data,
                              const TrainConfig& cfg, int fixed_rank) {
    if (a.r_min != fixed_rank || a.r_max != fixed_rank) {
        throw ConfigError("train_static_lora: baseline adapter must have r_min == "
                          "r_max == " + std::to_string(fixed_rank));
    }
    TrainConfig static_cfg = cfg;
    static_cfg.update_mode = UpdateMode::Cascade;
    static_cfg.loss_mode = LossMode::Individual;
    static_cfg.distribution.kind = RankDistKind::Uniform; // point mass on [r,r]
    return train(a, data, static_cfg);
}

} // namespace dylora
