#pragma once

#include <cstdint>
#include <vector>

#include "dylora/adapter.hpp"
#include "dylora/matrix.hpp"
#include "dylora/trainer.hpp"

namespace dylora {

// Planted low-rank regression: a frozen base map w0 plus an exactly rank
// r_star correction delta_star (unit spectral norm). Targets are
// (w0 + delta_star) x with optional Gaussian noise. Immutable once built.
struct TeacherTask {
    Matrix w0;         // m x d
    Matrix delta_star; // m x d, rank r_star
    Matrix x_train, y_train;
    Matrix x_eval, y_eval;
    int r_star = 0;
    double noise_sigma = 0.0;

    Dataset train_data() const {
        Dataset d;
        d.x = x_train;
        d.y = y_train;
        d.loss = LossKind::Mse;
        return d;
    }
};

// Classification analogue: frozen feature map phi(x) = tanh(F x) with a
// fixed Gaussian F, an adapter-bearing linear head on top, and class-blob
// inputs assigned round-robin so every class appears in the train split.
// Labels are 1-based.
struct ClassifyTask {
    Matrix feature_map; // f x p
    Matrix w0;          // C x f, frozen head base
    Matrix feat_train, feat_eval; // f x n features
    std::vector<int> label_train, label_eval;
    int classes = 2;

    Dataset train_data() const {
        Dataset d;
        d.x = feat_train;
        d.labels = label_train;
        d.loss = LossKind::CrossEntropy;
        return d;
    }
};

// delta_star is U(m x r_star) V(r_star x d) with Gaussian factors, scaled to
// unit spectral norm (r_star = 0 gives the zero matrix). Last quarter of the
// samples is the eval split.
TeacherTask make_teacher(std::uint64_t seed, std::size_t m, std::size_t d, int r_star,
                         std::size_t n, double noise_sigma);

ClassifyTask make_classify(std::uint64_t seed, int classes, std::size_t feature_dim,
                           std::size_t raw_dim, std::size_t n, double separation);

// Eval-split metric at rank b: MSE for regression, accuracy for
// classification, both computed through forward(., ., b).
double eval_task(const DyLoraAdapter& a, const TeacherTask& task, int b);
double eval_task(const DyLoraAdapter& a, const ClassifyTask& task, int b);

// Same metrics from already-merged dense weights.
double eval_merged(const Matrix& merged, const TeacherTask& task);
double eval_merged(const Matrix& merged, const ClassifyTask& task);

// Largest singular value by power iteration (deterministic start).
double spectral_norm(const Matrix& a);

} // namespace dylora
