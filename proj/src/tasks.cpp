#include "dylora/tasks.hpp"

#include <cmath>
#include <string>

#include "dylora/errors.hpp"

namespace dylora {

double spectral_norm(const Matrix& a) {
    if (a.size() == 0) {
        return 0.0;
    }
    // Power iteration on a^T a from a fixed all-ones start; plenty for the
    // well-separated spectra that arise here.
    Matrix v(a.cols(), 1);
    for (std::size_t i = 0; i < a.cols(); ++i) {
        v.at(i, 0) = 1.0;
    }
    double sigma = 0.0;
    for (int it = 0; it < 500; ++it) {
        Matrix av = matmul(a, v);
        Matrix atav = matmul_transa(a, av);
        const double norm = frobenius_norm(atav);
        if (norm == 0.0) {
            return 0.0;
        }
        for (std::size_t i = 0; i < atav.size(); ++i) {
            atav.data()[i] /= norm;
        }
        const double next = frobenius_norm(matmul(a, atav));
        v = std::move(atav);
        if (it > 10 && std::fabs(next - sigma) <= 1e-14 * std::max(1.0, next)) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    return sigma;
}

TeacherTask make_teacher(std::uint64_t seed, std::size_t m, std::size_t d, int r_star,
                         std::size_t n, double noise_sigma) {
    if (r_star < 0 || static_cast<std::size_t>(r_star) > std::min(m, d)) {
        throw ConfigError("make_teacher: r_star must lie in [0, min(m,d)]");
    }
    if (n < 4) {
        throw ConfigError("make_teacher: need at least 4 samples for a 25% eval split");
    }
    if (noise_sigma < 0.0) {
        throw ConfigError("make_teacher: noise_sigma must be non-negative");
    }
    Rng rng(seed, kTaskStream);
    TeacherTask task;
    task.r_star = r_star;
    task.noise_sigma = noise_sigma;
    task.w0 = gaussian(rng, m, d, 1.0 / std::sqrt(static_cast<double>(d)));
    if (r_star > 0) {
        const auto r = static_cast<std::size_t>(r_star);
        Matrix u = gaussian(rng, m, r, 1.0);
        Matrix v = gaussian(rng, r, d, 1.0);
        task.delta_star = matmul(u, v);
        const double top = spectral_norm(task.delta_star);
        task.delta_star *= 1.0 / top;
    } else {
        task.delta_star = Matrix::zeros(m, d);
    }

    Matrix x = gaussian(rng, d, n, 1.0);
    Matrix y = matmul(task.w0 + task.delta_star, x);
    if (noise_sigma > 0.0) {
        y += gaussian(rng, m, n, noise_sigma);
    }

    const std::size_t n_eval = n / 4;
    const std::size_t n_train = n - n_eval;
    task.x_train = slice_cols(x, 1, n_train);
    task.y_train = slice_cols(y, 1, n_train);
    task.x_eval = slice_cols(x, n_train + 1, n);
    task.y_eval = slice_cols(y, n_train + 1, n);
    return task;
}

ClassifyTask make_classify(std::uint64_t seed, int classes, std::size_t feature_dim,
                           std::size_t raw_dim, std::size_t n, double separation) {
    if (classes < 2) {
        throw ConfigError("make_classify: need at least 2 classes");
    }
    if (n / 4 < 1 || n - n / 4 < static_cast<std::size_t>(classes)) {
        throw ConfigError("make_classify: too few samples for the split");
    }
    if (!(separation > 0.0)) {
        throw ConfigError("make_classify: separation must be positive");
    }
    Rng rng(seed, kTaskStream);
    ClassifyTask task;
    task.classes = classes;
    task.feature_map = gaussian(rng, feature_dim, raw_dim,
                                1.0 / std::sqrt(static_cast<double>(raw_dim)));
    task.w0 = gaussian(rng, static_cast<std::size_t>(classes), feature_dim,
                       1.0 / std::sqrt(static_cast<double>(feature_dim)));

    Matrix means = gaussian(rng, raw_dim, static_cast<std::size_t>(classes), separation);
    Matrix raw(raw_dim, n);
    std::vector<int> labels(n);
    for (std::size_t j = 0; j < n; ++j) {
        const int c = static_cast<int>(j % static_cast<std::size_t>(classes));
        labels[j] = c + 1;
        for (std::size_t i = 0; i < raw_dim; ++i) {
            raw.at(i, j) = means.at(i, static_cast<std::size_t>(c)) + rng.gaussian(1.0);
        }
    }
    Matrix feats = matmul(task.feature_map, raw);
    for (std::size_t i = 0; i < feats.size(); ++i) {
        feats.data()[i] = std::tanh(feats.data()[i]);
    }

    const std::size_t n_eval = n / 4;
    const std::size_t n_train = n - n_eval;
    task.feat_train = slice_cols(feats, 1, n_train);
    task.feat_eval = slice_cols(feats, n_train + 1, n);
    task.label_train.assign(labels.begin(), labels.begin() + static_cast<long>(n_train));
    task.label_eval.assign(labels.begin() + static_cast<long>(n_train), labels.end());
    return task;
}

namespace {

double mse_against(const Matrix& pred, const Matrix& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred.data()[i] - target.data()[i];
        acc += diff * diff;
    }
    return acc / static_cast<double>(pred.size());
}

double accuracy_against(const Matrix& logits, const std::vector<int>& labels) {
    std::size_t hits = 0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < logits.rows(); ++c) {
            if (logits.at(c, j) > logits.at(arg, j)) {
                arg = c;
            }
        }
        if (static_cast<int>(arg) + 1 == labels[j]) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(logits.cols());
}

} // namespace

double eval_task(const DyLoraAdapter& a, const TeacherTask& task, int b) {
    return mse_against(forward(a, task.x_eval, b), task.y_eval);
}

double eval_task(const DyLoraAdapter& a, const ClassifyTask& task, int b) {
    return accuracy_against(forward(a, task.feat_eval, b), task.label_eval);
}

double eval_merged(const Matrix& merged, const TeacherTask& task) {
    return mse_against(matmul(merged, task.x_eval), task.y_eval);
}

double eval_merged(const Matrix& merged, const ClassifyTask& task) {
    return accuracy_against(matmul(merged, task.feat_eval), task.label_eval);
}

} // namespace dylora
