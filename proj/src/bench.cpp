#include "dylora/bench.hpp"

#include <algorithm>
#include <cmath>

#include "dylora/errors.hpp"

namespace dylora {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

DyLoraAdapter init_for_run(const TeacherTask& task, const AdapterSpec& spec,
                           std::uint64_t seed, bool static_baseline) {
    Rng init_rng(seed, kInitStream);
    const int lo = static_baseline ? spec.r_max : spec.r_min;
    return init_adapter(init_rng, task.w0, lo, spec.r_max, spec.alpha, spec.sigma);
}

} // namespace

EvalCell EvalReport::aggregate(const std::string& arm, int rank) const {
    EvalCell cell;
    double sum = 0.0;
    for (const auto& row : rows) {
        if (row.arm == arm && row.rank == rank) {
            sum += row.metric;
            ++cell.n;
        }
    }
    if (cell.n == 0) {
        return cell;
    }
    cell.mean = sum / static_cast<double>(cell.n);
    if (cell.n < 2) {
        cell.single_seed = true;
        return cell;
    }
    double ss = 0.0;
    for (const auto& row : rows) {
        if (row.arm == arm && row.rank == rank) {
            const double d = row.metric - cell.mean;
            ss += d * d;
        }
    }
    cell.stddev = std::sqrt(ss / static_cast<double>(cell.n - 1));
    return cell;
}

double EvalReport::median(const std::string& arm, int rank) const {
    std::vector<double> vals;
    for (const auto& row : rows) {
        if (row.arm == arm && row.rank == rank) {
            vals.push_back(row.metric);
        }
    }
    if (vals.empty()) {
        throw BoundsError("median: no entries for arm '" + arm + "' at rank " +
                          std::to_string(rank));
    }
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    if (n % 2 == 1) {
        return vals[n / 2];
    }
    return 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

EvalReport rank_sweep(const TeacherTask& task, const std::vector<BenchArm>& arms,
                      const std::vector<int>& ranks,
                      const std::vector<std::uint64_t>& seeds) {
    if (arms.empty() || ranks.empty() || seeds.empty()) {
        throw ConfigError("rank_sweep: arms, ranks and seeds must be non-empty");
    }
    EvalReport report;
    report.ranks = ranks;
    report.seeds = seeds;
    for (const auto& arm : arms) {
        report.arms.push_back(arm.name);
        report.counters[arm.name] = StepCounters{};
    }
    const Dataset data = task.train_data();
    for (const auto& arm : arms) {
        for (const auto seed : seeds) {
            try {
                DyLoraAdapter adapter =
                    init_for_run(task, arm.adapter, seed, arm.static_baseline);
                TrainConfig cfg = arm.train;
                cfg.seed = seed;
                TrainResult res;
                if (arm.static_baseline) {
                    res = train_static_lora(adapter, data, cfg, arm.adapter.r_max);
                } else {
                    res = train(adapter, data, cfg);
                }
                auto& c = report.counters[arm.name];
                c.steps_run += res.counters.steps_run;
                c.truncated_passes += res.counters.truncated_passes;
                c.param_scalar_updates += res.counters.param_scalar_updates;

                const int lo = *std::min_element(ranks.begin(), ranks.end());
                const int hi = *std::max_element(ranks.begin(), ranks.end());
                const DyLoraAdapter wide =
                    reranged(adapter, std::min(lo, adapter.r_min),
                             std::max(hi, adapter.r_max));
                for (const int b : ranks) {
                    report.rows.push_back({arm.name, seed, b, eval_task(wide, task, b)});
                }
            } catch (const std::exception& e) {
                report.errors.push_back(arm.name + "/seed=" + std::to_string(seed) +
                                        ": " + e.what());
            }
        }
    }
    return report;
}

SearchCostLedger search_simulation(const TeacherTask& task,
                                   const std::vector<int>& candidate_ranks,
                                   std::uint64_t per_run_steps,
                                   const AdapterSpec& spec, const TrainConfig& base) {
    if (candidate_ranks.empty()) {
        throw ConfigError("search_simulation: candidate_ranks must be non-empty");
    }
    SearchCostLedger ledger;
    ledger.lora_search.name = "lora-search";
    ledger.dylora.name = "dylora";

    const Dataset data = task.train_data();
    TrainConfig cfg = base;
    cfg.steps = per_run_steps;

    bool first = true;
    for (const int r : candidate_ranks) {
        AdapterSpec s = spec;
        s.r_min = r;
        s.r_max = r;
        DyLoraAdapter adapter = init_for_run(task, s, cfg.seed, true);
        const TrainResult res = train_static_lora(adapter, data, cfg, r);
        ledger.lora_search.total_steps += res.counters.steps_run;
        ledger.lora_search.truncated_passes += res.counters.truncated_passes;
        ledger.lora_search.ranks_trained.push_back(r);
        const double metric = eval_task(adapter, task, r);
        ledger.lora_search.candidate_metrics.emplace_back(r, metric);
        if (first || metric < ledger.lora_search.best_metric) {
            ledger.lora_search.best_metric = metric;
            ledger.lora_search.best_rank = r;
            first = false;
        }
    }

    AdapterSpec dy = spec;
    dy.r_min = *std::min_element(candidate_ranks.begin(), candidate_ranks.end());
    dy.r_max = *std::max_element(candidate_ranks.begin(), candidate_ranks.end());
    DyLoraAdapter adapter = init_for_run(task, dy, cfg.seed, false);
    const TrainResult res = train(adapter, data, cfg);
    ledger.dylora.total_steps = res.counters.steps_run;
    ledger.dylora.truncated_passes = res.counters.truncated_passes;
    ledger.dylora.ranks_trained = {dy.r_min, dy.r_max};
    first = true;
    for (const int r : candidate_ranks) {
        const double metric = eval_task(adapter, task, r);
        ledger.dylora.candidate_metrics.emplace_back(r, metric);
        if (first || metric < ledger.dylora.best_metric) {
            ledger.dylora.best_metric = metric;
            ledger.dylora.best_rank = r;
            first = false;
        }
    }

    ledger.steps_ratio = ledger.lora_search.total_steps / ledger.dylora.total_steps;
    return ledger;
}

namespace {

std::string mode_name(UpdateMode m) {
    return m == UpdateMode::Frozen ? "frozen" : "cascade";
}

std::string dist_name(const RankDistSpec& d) {
    if (d.kind == RankDistKind::Uniform) {
        return "uniform";
    }
    return "geometric(p=" + fmt(d.p) + ")";
}

} // namespace

AblationReport ablation(const TeacherTask& task,
                        const std::vector<RankDistSpec>& distributions,
                        const std::vector<UpdateMode>& update_modes,
                        const std::vector<std::uint64_t>& seeds,
                        const AdapterSpec& spec, const TrainConfig& base) {
    if (distributions.empty() || update_modes.empty()) {
        throw ConfigError("ablation: need at least one distribution and one mode");
    }
    std::vector<BenchArm> arms;
    for (const auto& dist : distributions) {
        for (const auto mode : update_modes) {
            BenchArm arm;
            arm.name = dist_name(dist) + "+" + mode_name(mode);
            arm.adapter = spec;
            arm.train = base;
            arm.train.distribution = dist;
            arm.train.update_mode = mode;
            arms.push_back(std::move(arm));
        }
    }
    AblationReport out;
    out.report = rank_sweep(task, arms, {spec.r_min, spec.r_max}, seeds);

    // Direction-only tendency flags, reported as pass/warn and never
    // hard-asserted. Metric is MSE, so "better" means lower.
    for (const auto mode : update_modes) {
        const std::string uni = "uniform+" + mode_name(mode);
        const std::string geo_name = [&]() -> std::string {
            for (const auto& d : distributions) {
                if (d.kind == RankDistKind::Geometric) {
                    return dist_name(d) + "+" + mode_name(mode);
                }
            }
            return {};
        }();
        if (geo_name.empty()) {
            continue;
        }
        bool have_uniform = false;
        for (const auto& d : distributions) {
            have_uniform = have_uniform || d.kind == RankDistKind::Uniform;
        }
        if (!have_uniform) {
            continue;
        }
        const double g = out.report.median(geo_name, spec.r_min);
        const double u = out.report.median(uni, spec.r_min);
        SoftFlag flag;
        flag.name = "geometric-favors-low-ranks (" + mode_name(mode) + ")";
        flag.observed = g <= u;
        flag.detail = "median MSE at rank " + std::to_string(spec.r_min) + ": " +
                      geo_name + "=" + fmt(g) + " vs " + uni + "=" + fmt(u);
        out.flags.push_back(std::move(flag));
    }
    bool have_frozen = false, have_cascade = false;
    for (const auto m : update_modes) {
        have_frozen = have_frozen || m == UpdateMode::Frozen;
        have_cascade = have_cascade || m == UpdateMode::Cascade;
    }
    if (have_frozen && have_cascade) {
        for (const auto& dist : distributions) {
            const std::string cas = dist_name(dist) + "+cascade";
            const std::string fro = dist_name(dist) + "+frozen";
            const double c = out.report.median(cas, spec.r_max);
            const double f = out.report.median(fro, spec.r_max);
            SoftFlag flag;
            flag.name = "cascade-beats-frozen-at-rmax (" + dist_name(dist) + ")";
            flag.observed = c <= f;
            flag.detail = "median MSE at rank " + std::to_string(spec.r_max) + ": " +
                          cas + "=" + fmt(c) + " vs " + fro + "=" + fmt(f);
            out.flags.push_back(std::move(flag));
        }
    }
    return out;
}

LossModeCost loss_mode_cost(const TeacherTask& task, const AdapterSpec& spec,
                            const TrainConfig& base) {
    LossModeCost out;
    const Dataset data = task.train_data();
    for (const LossMode mode : {LossMode::Individual, LossMode::Summation}) {
        Rng init_rng(base.seed, kInitStream);
        DyLoraAdapter adapter =
            init_adapter(init_rng, task.w0, spec.r_min, spec.r_max, spec.alpha,
                         spec.sigma);
        TrainConfig cfg = base;
        cfg.loss_mode = mode;
        const TrainResult res = train(adapter, data, cfg);
        double avg = 0.0;
        for (int b = spec.r_min; b <= spec.r_max; ++b) {
            avg += eval_task(adapter, task, b);
        }
        avg /= static_cast<double>(spec.r_max - spec.r_min + 1);
        if (mode == LossMode::Individual) {
            out.individual = res.counters;
            out.metric_individual = avg;
        } else {
            out.summation = res.counters;
            out.metric_summation = avg;
        }
    }
    return out;
}

CheckResult headline_check(const EvalReport& report, const std::string& dynamic_arm,
                           const std::string& static_arm) {
    CheckResult check;
    check.name = "dynamic-beats-truncated-static-below-rmax";
    check.pass = true;
    const int hi = *std::max_element(report.ranks.begin(), report.ranks.end());
    for (const int b : report.ranks) {
        if (b >= hi) {
            continue;
        }
        const double dyn = report.median(dynamic_arm, b);
        const double sta = report.median(static_arm, b);
        const bool ok = dyn < sta;
        check.pass = check.pass && ok;
        check.detail += "b=" + std::to_string(b) + ": " + fmt(dyn) +
                        (ok ? " < " : " !< ") + fmt(sta) + "; ";
    }
    return check;
}

CheckResult monotonicity_check(const EvalReport& report, const std::string& arm) {
    CheckResult check;
    check.name = "median-mse-nonincreasing-in-rank";
    std::vector<int> ranks = report.ranks;
    std::sort(ranks.begin(), ranks.end());
    int violations = 0;
    bool tolerable = true;
    for (std::size_t i = 0; i + 1 < ranks.size(); ++i) {
        const double lo = report.median(arm, ranks[i]);
        const double hi = report.median(arm, ranks[i + 1]);
        if (hi > lo) {
            ++violations;
            const double rel = (hi - lo) / lo;
            tolerable = tolerable && rel <= 0.05;
            check.detail += "b=" + std::to_string(ranks[i]) + "->" +
                            std::to_string(ranks[i + 1]) + ": +" + fmt(rel * 100.0) +
                            "%; ";
        }
    }
    check.pass = violations == 0 || (violations == 1 && tolerable);
    if (check.detail.empty()) {
        check.detail = "strictly non-increasing";
    }
    return check;
}

} // namespace dylora
