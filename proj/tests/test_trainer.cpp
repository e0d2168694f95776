#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "dylora/errors.hpp"
#include "dylora/tasks.hpp"
#include "dylora/trainer.hpp"
#include "support/grad_oracle.hpp"

using namespace dylora;

namespace {

DyLoraAdapter random_adapter(std::uint64_t seed, std::size_t m = 6, std::size_t d = 5,
                             int r_min = 1, int r_max = 4) {
    Rng rng(seed, kInitStream);
    Matrix w0 = gaussian(rng, m, d, 0.5);
    DyLoraAdapter a = init_adapter(rng, std::move(w0), r_min, r_max, 16.0, 0.02);
    Rng rng2(seed + 1);
    a.w_up = gaussian(rng2, m, static_cast<std::size_t>(r_max), 0.3);
    a.w_dw = gaussian(rng2, static_cast<std::size_t>(r_max), d, 0.3);
    return a;
}

Dataset random_batch(std::uint64_t seed, std::size_t d, std::size_t m, std::size_t n) {
    Rng rng(seed);
    Dataset b;
    b.x = gaussian(rng, d, n, 1.0);
    b.y = gaussian(rng, m, n, 1.0);
    b.loss = LossKind::Mse;
    return b;
}

} // namespace

TEST_CASE("loss_mse") {
    Rng rng(50);
    SUBCASE("zero when prediction equals target") {
        const Matrix p = gaussian(rng, 4, 3, 1.0);
        const LossResult l = loss_mse(p, p);
        CHECK(l.value == 0.0);
        CHECK(max_abs(l.grad) == 0.0);
    }
    SUBCASE("matches brute-force elementwise formula") {
        const Matrix p = gaussian(rng, 4, 3, 1.0);
        const Matrix t = gaussian(rng, 4, 3, 1.0);
        const LossResult l = loss_mse(p, t);
        double want = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                want += (p.at(i, j) - t.at(i, j)) * (p.at(i, j) - t.at(i, j));
            }
        }
        want /= 12.0;
        CHECK(std::fabs(l.value - want) < 1e-12);
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(l.grad.at(i, j) ==
                      doctest::Approx(2.0 * (p.at(i, j) - t.at(i, j)) / 12.0));
            }
        }
    }
    SUBCASE("shape mismatch raises") {
        CHECK_THROWS_AS(loss_mse(Matrix::zeros(2, 3), Matrix::zeros(3, 2)), ShapeError);
    }
}

TEST_CASE("loss_cross_entropy") {
    SUBCASE("uniform logits give ln C") {
        const int classes = 4;
        const Matrix logits = Matrix::zeros(classes, 6);
        const LossResult l = loss_cross_entropy(logits, {1, 2, 3, 4, 1, 2});
        CHECK(l.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("matches brute-force softmax formula") {
        Rng rng(51);
        const Matrix logits = gaussian(rng, 3, 5, 1.0);
        const std::vector<int> labels = {2, 1, 3, 1, 2};
        const LossResult l = loss_cross_entropy(logits, labels);
        double want = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            double z = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                z += std::exp(logits.at(c, j));
            }
            want += -std::log(std::exp(logits.at(static_cast<std::size_t>(labels[j] - 1),
                                                 j)) / z);
        }
        want /= 5.0;
        CHECK(std::fabs(l.value - want) < 1e-12);
        // gradient columns sum to zero (softmax minus one-hot)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                s += l.grad.at(c, j);
            }
            CHECK(std::fabs(s) < 1e-15);
        }
    }
    SUBCASE("label outside [1,C] raises") {
        CHECK_THROWS_AS(loss_cross_entropy(Matrix::zeros(3, 1), {4}), ShapeError);
        CHECK_THROWS_AS(loss_cross_entropy(Matrix::zeros(3, 1), {0}), ShapeError);
        CHECK_THROWS_AS(loss_cross_entropy(Matrix::zeros(3, 2), {1}), ShapeError);
    }
}

TEST_CASE("dynamic_loss") {
    SUBCASE("fresh adapter is already optimal when targets equal w0 x") {
        Rng rng(52, kInitStream);
        Matrix w0 = gaussian(rng, 6, 5, 0.5);
        const DyLoraAdapter a = init_adapter(rng, w0, 1, 4, 16.0, 0.02);
        Dataset batch;
        batch.x = gaussian(rng, 5, 7, 1.0);
        batch.y = matmul(a.w0, batch.x);
        StepCounters c;
        for (int b = 1; b <= 4; ++b) {
            CHECK(dynamic_loss(a, batch, b, c).value == 0.0);
        }
        CHECK(c.truncated_passes == 4);
    }
    SUBCASE("equals the loss of a static adapter built from the truncation") {
        const DyLoraAdapter a = random_adapter(53);
        const Dataset batch = random_batch(54, 5, 6, 7);
        StepCounters c;
        for (int b = a.r_min; b <= a.r_max; ++b) {
            DyLoraAdapter st;
            st.w0 = a.w0;
            const auto [dw, up] = truncate(a, b);
            st.w_dw = dw;
            st.w_up = up;
            st.alpha = a.alpha;
            st.r_min = st.r_max = b;
            const double dyn = dynamic_loss(a, batch, b, c).value;
            const double stat = dynamic_loss(st, batch, b, c).value;
            CHECK(dyn == stat);
        }
    }
    SUBCASE("gradient matches finite differences") {
        DyLoraAdapter a = random_adapter(55);
        const Dataset batch = random_batch(56, 5, 6, 4);
        StepCounters c;
        for (int b = a.r_min; b <= a.r_max; ++b) {
            const DynamicLoss dl = dynamic_loss(a, batch, b, c);
            const auto res = testing::check_factor_gradients(
                a, b, dl.grads.g_up, dl.grads.g_dw, [&](const DyLoraAdapter& m) {
                    StepCounters tmp;
                    return dynamic_loss(m, batch, b, tmp).value;
                });
            CHECK(res.max_rel_err < 1e-6);
        }
    }
}

TEST_CASE("summation_loss") {
    const DyLoraAdapter a = random_adapter(57, 6, 5, 1, 3);
    const Dataset batch = random_batch(58, 5, 6, 5);

    SUBCASE("point mass reduces to dynamic_loss") {
        const DyLoraAdapter pt = random_adapter(57, 6, 5, 3, 3);
        const RankDistribution d = make_uniform(3, 3);
        StepCounters c1, c2;
        const SummationLoss s = summation_loss(pt, batch, d, c1);
        const DynamicLoss dl = dynamic_loss(pt, batch, 3, c2);
        CHECK(s.value == dl.value);
        CHECK(c1.truncated_passes == 1);
    }
    SUBCASE("fresh adapter on a perfect-fit task gives zero") {
        Rng rng(59, kInitStream);
        Matrix w0 = gaussian(rng, 6, 5, 0.5);
        const DyLoraAdapter f = init_adapter(rng, w0, 1, 3, 16.0, 0.02);
        Dataset perfect;
        perfect.x = gaussian(rng, 5, 6, 1.0);
        perfect.y = matmul(f.w0, perfect.x);
        StepCounters c;
        CHECK(summation_loss(f, perfect, make_uniform(1, 3), c).value == 0.0);
    }
    SUBCASE("uniform [1,3] equals the explicit three-term average") {
        const RankDistribution d = make_uniform(1, 3);
        StepCounters c1, c2;
        const SummationLoss s = summation_loss(a, batch, d, c1);
        const double want = (dynamic_loss(a, batch, 1, c2).value +
                             dynamic_loss(a, batch, 2, c2).value +
                             dynamic_loss(a, batch, 3, c2).value) /
                            3.0;
        CHECK(std::fabs(s.value - want) < 1e-12);
        CHECK(c1.truncated_passes == 3);
    }
    SUBCASE("gradient equals per-rank weighted accumulation within 1e-10") {
        const RankDistribution d = make_geometric(1, 3, 0.15);
        StepCounters c1, c2;
        const SummationLoss s = summation_loss(a, batch, d, c1);
        Matrix want_up = Matrix::zeros(6, 3);
        Matrix want_dw = Matrix::zeros(3, 5);
        for (int b = 1; b <= 3; ++b) {
            const DynamicLoss dl = dynamic_loss(a, batch, b, c2);
            for (std::size_t i = 0; i < 6; ++i) {
                for (std::size_t j = 0; j < static_cast<std::size_t>(b); ++j) {
                    want_up.at(i, j) += d.prob_of(b) * dl.grads.g_up.at(i, j);
                }
            }
            for (std::size_t i = 0; i < static_cast<std::size_t>(b); ++i) {
                for (std::size_t j = 0; j < 5; ++j) {
                    want_dw.at(i, j) += d.prob_of(b) * dl.grads.g_dw.at(i, j);
                }
            }
        }
        CHECK(max_abs_diff(s.g_up, want_up) < 1e-10);
        CHECK(max_abs_diff(s.g_dw, want_dw) < 1e-10);
    }
}

TEST_CASE("apply_update_frozen touches only row/column b") {
    for (const OptKind kind : {OptKind::Sgd, OptKind::AdamLike}) {
        DyLoraAdapter a = random_adapter(60, 7, 6, 1, 5);
        TrainConfig cfg;
        cfg.optimizer = kind;
        cfg.adam.weight_decay = 0.1;
        OptimizerState opt = make_optimizer_state(a, cfg);
        const Dataset batch = random_batch(61, 6, 7, 4);
        StepCounters c;
        for (const int b : {1, 3, 5}) {
            const DyLoraAdapter before = a;
            const DynamicLoss dl = dynamic_loss(a, batch, b, c);
            apply_update_frozen(a, dl.grads, b, 0.01, opt, c);
            const auto ub = static_cast<std::size_t>(b);
            for (std::size_t i = 0; i < a.w_up.rows(); ++i) {
                for (std::size_t j = 0; j < a.w_up.cols(); ++j) {
                    if (j != ub - 1) {
                        CHECK(a.w_up.at(i, j) == before.w_up.at(i, j));
                    }
                }
            }
            for (std::size_t i = 0; i < a.w_dw.rows(); ++i) {
                for (std::size_t j = 0; j < a.w_dw.cols(); ++j) {
                    if (i != ub - 1) {
                        CHECK(a.w_dw.at(i, j) == before.w_dw.at(i, j));
                    }
                }
            }
            CHECK(bit_equal(a.w0, before.w0));
            // the selected row/column did move
            CHECK(max_abs_diff(slice_cols(a.w_up, ub, ub),
                               slice_cols(before.w_up, ub, ub)) > 0.0);
        }
        CHECK(c.param_scalar_updates == 3 * (7 + 6));
    }
}

TEST_CASE("frozen SGD step is exactly old minus eta times gradient") {
    DyLoraAdapter a = random_adapter(62, 6, 5, 1, 4);
    TrainConfig cfg;
    cfg.optimizer = OptKind::Sgd;
    OptimizerState opt = make_optimizer_state(a, cfg);
    const Dataset batch = random_batch(63, 5, 6, 3);
    StepCounters c;
    const int b = 3;
    const double eta = 0.05;
    const DyLoraAdapter before = a;
    const DynamicLoss dl = dynamic_loss(a, batch, b, c);
    apply_update_frozen(a, dl.grads, b, eta, opt, c);
    for (std::size_t j = 0; j < 5; ++j) {
        CHECK(a.w_dw.at(2, j) == before.w_dw.at(2, j) - eta * dl.grads.g_dw.at(2, j));
    }
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(a.w_up.at(i, 2) == before.w_up.at(i, 2) - eta * dl.grads.g_up.at(i, 2));
    }
}

TEST_CASE("apply_update_cascade") {
    SUBCASE("indices above b are bit-identical across 100 random steps") {
        DyLoraAdapter a = random_adapter(64, 8, 7, 1, 6);
        TrainConfig cfg;
        cfg.optimizer = OptKind::AdamLike;
        OptimizerState opt = make_optimizer_state(a, cfg);
        Rng rng(65);
        StepCounters c;
        for (int step = 0; step < 100; ++step) {
            const int b = 1 + static_cast<int>(rng.uniform_index(6));
            const Dataset batch = random_batch(66 + static_cast<std::uint64_t>(step),
                                               7, 8, 4);
            const DyLoraAdapter before = a;
            const DynamicLoss dl = dynamic_loss(a, batch, b, c);
            apply_update_cascade(a, dl.grads, b, 0.01, opt, c);
            const auto ub = static_cast<std::size_t>(b);
            for (std::size_t i = 0; i < a.w_up.rows(); ++i) {
                for (std::size_t j = ub; j < a.w_up.cols(); ++j) {
                    REQUIRE(a.w_up.at(i, j) == before.w_up.at(i, j));
                }
            }
            for (std::size_t i = ub; i < a.w_dw.rows(); ++i) {
                for (std::size_t j = 0; j < a.w_dw.cols(); ++j) {
                    REQUIRE(a.w_dw.at(i, j) == before.w_dw.at(i, j));
                }
            }
        }
    }
    SUBCASE("b=1 cascade equals b=1 frozen") {
        DyLoraAdapter a1 = random_adapter(67);
        DyLoraAdapter a2 = a1;
        TrainConfig cfg;
        cfg.optimizer = OptKind::Sgd;
        OptimizerState o1 = make_optimizer_state(a1, cfg);
        OptimizerState o2 = make_optimizer_state(a2, cfg);
        const Dataset batch = random_batch(68, 5, 6, 3);
        StepCounters c;
        const DynamicLoss dl = dynamic_loss(a1, batch, 1, c);
        apply_update_cascade(a1, dl.grads, 1, 0.02, o1, c);
        apply_update_frozen(a2, dl.grads, 1, 0.02, o2, c);
        CHECK(bit_equal(a1.w_up, a2.w_up));
        CHECK(bit_equal(a1.w_dw, a2.w_dw));
    }
    SUBCASE("gradients from a different rank are rejected") {
        DyLoraAdapter a = random_adapter(69);
        TrainConfig cfg;
        OptimizerState opt = make_optimizer_state(a, cfg);
        const Dataset batch = random_batch(70, 5, 6, 3);
        StepCounters c;
        const DynamicLoss dl = dynamic_loss(a, batch, 2, c);
        CHECK_THROWS_AS(apply_update_cascade(a, dl.grads, 3, 0.01, opt, c), ShapeError);
    }
}

TEST_CASE("train basics") {
    const TeacherTask task = make_teacher(71, 8, 8, 2, 64, 0.0);
    const Dataset data = task.train_data();

    SUBCASE("zero steps rejected") {
        Rng rng(72, kInitStream);
        DyLoraAdapter a = init_adapter(rng, task.w0, 1, 4, 16.0, 0.02);
        TrainConfig cfg;
        cfg.steps = 0;
        CHECK_THROWS_AS(train(a, data, cfg), ConfigError);
    }
    SUBCASE("one step with zero learning rate is a bit-exact no-op") {
        Rng rng(73, kInitStream);
        DyLoraAdapter a = init_adapter(rng, task.w0, 1, 4, 16.0, 0.02);
        const DyLoraAdapter before = a;
        TrainConfig cfg;
        cfg.steps = 1;
        cfg.learning_rate = 0.0;
        cfg.optimizer = OptKind::Sgd;
        const TrainResult res = train(a, data, cfg);
        CHECK(bit_equal(a.w_up, before.w_up));
        CHECK(bit_equal(a.w_dw, before.w_dw));
        CHECK(res.counters.steps_run == 1);
    }
    SUBCASE("same config and seed give bit-identical results") {
        TrainConfig cfg;
        cfg.steps = 50;
        cfg.optimizer = OptKind::AdamLike;
        cfg.seed = 99;
        Rng r1(74, kInitStream), r2(74, kInitStream);
        DyLoraAdapter a1 = init_adapter(r1, task.w0, 1, 4, 16.0, 0.02);
        DyLoraAdapter a2 = init_adapter(r2, task.w0, 1, 4, 16.0, 0.02);
        const TrainResult t1 = train(a1, data, cfg);
        const TrainResult t2 = train(a2, data, cfg);
        CHECK(bit_equal(a1.w_up, a2.w_up));
        CHECK(bit_equal(a1.w_dw, a2.w_dw));
        REQUIRE(t1.trace.size() == t2.trace.size());
        for (std::size_t i = 0; i < t1.trace.size(); ++i) {
            CHECK(t1.trace[i].loss == t2.trace[i].loss);
            CHECK(t1.trace[i].b == t2.trace[i].b);
        }
    }
    SUBCASE("divergence error names the failing step") {
        Rng rng(75, kInitStream);
        DyLoraAdapter a = init_adapter(rng, task.w0, 1, 4, 16.0, 0.02);
        TrainConfig cfg;
        cfg.steps = 10;
        cfg.optimizer = OptKind::Sgd;
        cfg.learning_rate = 1e200;
        bool threw = false;
        try {
            train(a, data, cfg);
        } catch (const DivergenceError& e) {
            threw = true;
            CHECK(std::string(e.what()).find("step") != std::string::npos);
        }
        CHECK(threw);
    }
}

TEST_CASE("rank-1 teacher converges under plain SGD") {
    const TeacherTask task = make_teacher(76, 16, 16, 1, 512, 0.0);
    Rng rng(77, kInitStream);
    DyLoraAdapter a = init_adapter(rng, task.w0, 1, 1, 16.0, 0.02);
    const double initial = eval_task(a, task, 1);
    TrainConfig cfg;
    cfg.steps = 2000;
    cfg.optimizer = OptKind::Sgd;
    cfg.learning_rate = 0.1;
    cfg.seed = 7;
    train(a, task.train_data(), cfg);
    const double final_mse = eval_task(a, task, 1);
    CHECK(final_mse < 1e-3 * initial);
}

TEST_CASE("step counters") {
    const TeacherTask task = make_teacher(78, 8, 8, 2, 64, 0.0);
    const Dataset data = task.train_data();
    TrainConfig cfg;
    cfg.steps = 12;
    cfg.optimizer = OptKind::Sgd;

    SUBCASE("individual mode: one truncated pass per step") {
        Rng rng(79, kInitStream);
        DyLoraAdapter a = init_adapter(rng, task.w0, 1, 4, 16.0, 0.02);
        const TrainResult res = train(a, data, cfg);
        CHECK(res.counters.steps_run == 12);
        CHECK(res.counters.truncated_passes == 12);
    }
    SUBCASE("summation mode: range-size passes per step") {
        Rng rng(80, kInitStream);
        DyLoraAdapter a = init_adapter(rng, task.w0, 1, 4, 16.0, 0.02);
        TrainConfig sum_cfg = cfg;
        sum_cfg.loss_mode = LossMode::Summation;
        const TrainResult res = train(a, data, sum_cfg);
        CHECK(res.counters.steps_run == 12);
        CHECK(res.counters.truncated_passes == 12 * 4);
        CHECK(res.counters.param_scalar_updates == 12 * 4 * (8 + 8));
    }
    SUBCASE("frozen mode: m+d scalars per step") {
        Rng rng(81, kInitStream);
        DyLoraAdapter a = init_adapter(rng, task.w0, 1, 4, 16.0, 0.02);
        TrainConfig fr_cfg = cfg;
        fr_cfg.update_mode = UpdateMode::Frozen;
        const TrainResult res = train(a, data, fr_cfg);
        CHECK(res.counters.param_scalar_updates == 12 * (8 + 8));
    }
}

TEST_CASE("degenerate range: summation and individual trajectories coincide") {
    const TeacherTask task = make_teacher(82, 8, 8, 2, 64, 0.0);
    Rng r1(83, kInitStream), r2(83, kInitStream);
    DyLoraAdapter a1 = init_adapter(r1, task.w0, 3, 3, 16.0, 0.02);
    DyLoraAdapter a2 = init_adapter(r2, task.w0, 3, 3, 16.0, 0.02);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.optimizer = OptKind::Sgd;
    cfg.learning_rate = 0.05;
    cfg.seed = 5;
    TrainConfig sum_cfg = cfg;
    sum_cfg.loss_mode = LossMode::Summation;
    const TrainResult t1 = train(a1, task.train_data(), cfg);
    const TrainResult t2 = train(a2, task.train_data(), sum_cfg);
    CHECK(bit_equal(a1.w_up, a2.w_up));
    CHECK(bit_equal(a1.w_dw, a2.w_dw));
    CHECK(t1.counters.truncated_passes == t2.counters.truncated_passes);
    for (std::size_t i = 0; i < t1.trace.size(); ++i) {
        CHECK(t1.trace[i].loss == t2.trace[i].loss);
    }
}

TEST_CASE("warmup scales the early learning rate linearly") {
    const TeacherTask task = make_teacher(84, 8, 8, 2, 64, 0.0);
    Rng r1(85, kInitStream), r2(85, kInitStream);
    DyLoraAdapter a1 = init_adapter(r1, task.w0, 1, 4, 16.0, 0.02);
    DyLoraAdapter a2 = init_adapter(r2, task.w0, 1, 4, 16.0, 0.02);
    TrainConfig warm;
    warm.steps = 1;
    warm.optimizer = OptKind::Sgd;
    warm.learning_rate = 0.1;
    warm.warmup_steps = 4;
    TrainConfig plain;
    plain.steps = 1;
    plain.optimizer = OptKind::Sgd;
    plain.learning_rate = warm.learning_rate * (1.0 / 4.0); // step-0 warmup factor
    train(a1, task.train_data(), warm);
    train(a2, task.train_data(), plain);
    CHECK(bit_equal(a1.w_up, a2.w_up));
    CHECK(bit_equal(a1.w_dw, a2.w_dw));
}

TEST_CASE("train_static_lora") {
    const TeacherTask task = make_teacher(86, 8, 8, 2, 64, 0.0);
    SUBCASE("requires a degenerate rank range") {
        Rng rng(87, kInitStream);
        DyLoraAdapter a = init_adapter(rng, task.w0, 1, 4, 16.0, 0.02);
        TrainConfig cfg;
        CHECK_THROWS_AS(train_static_lora(a, task.train_data(), cfg, 4), ConfigError);
    }
    SUBCASE("reduces to train with a point mass and cascade updates") {
        Rng r1(88, kInitStream), r2(88, kInitStream);
        DyLoraAdapter a1 = init_adapter(r1, task.w0, 4, 4, 16.0, 0.02);
        DyLoraAdapter a2 = init_adapter(r2, task.w0, 4, 4, 16.0, 0.02);
        TrainConfig cfg;
        cfg.steps = 40;
        cfg.optimizer = OptKind::AdamLike;
        cfg.seed = 3;
        TrainConfig manual = cfg;
        manual.update_mode = UpdateMode::Cascade;
        manual.loss_mode = LossMode::Individual;
        manual.distribution.kind = RankDistKind::Uniform;
        train_static_lora(a1, task.train_data(), cfg, 4);
        train(a2, task.train_data(), manual);
        CHECK(bit_equal(a1.w_up, a2.w_up));
        CHECK(bit_equal(a1.w_dw, a2.w_dw));
    }
}
