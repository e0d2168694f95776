#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dylora/tasks.hpp"
#include "dylora/trainer.hpp"

namespace dylora {

struct AdapterSpec {
    int r_min = 1;
    int r_max = 8;
    double alpha = 16.0;
    double sigma = 0.02;
};

// One named training configuration in a comparison. A static baseline trains
// at the single fixed rank adapter.r_max (point-mass distribution, cascade)
// and is rank-unlocked only for evaluation.
struct BenchArm {
    std::string name;
    AdapterSpec adapter;
    TrainConfig train;
    bool static_baseline = false;
};

struct EvalCell {
    double mean = 0.0;
    double stddev = 0.0; // 0 when single_seed
    bool single_seed = false;
    std::size_t n = 0;
};

struct EvalRow {
    std::string arm;
    std::uint64_t seed = 0;
    int rank = 0;
    double metric = 0.0;
};

struct EvalReport {
    std::vector<std::string> arms;
    std::vector<int> ranks;
    std::vector<std::uint64_t> seeds;
    std::vector<EvalRow> rows; // ordered by (arm, seed, rank)
    std::map<std::string, StepCounters> counters; // summed over seeds, per arm
    std::vector<std::string> errors; // per-arm failures; the sweep continues

    EvalCell aggregate(const std::string& arm, int rank) const;
    double median(const std::string& arm, int rank) const;
};

// Trains each arm once per seed and evaluates every resulting checkpoint at
// every requested rank. All arms share the task and the step budget.
EvalReport rank_sweep(const TeacherTask& task, const std::vector<BenchArm>& arms,
                      const std::vector<int>& ranks,
                      const std::vector<std::uint64_t>& seeds);

struct SearchArmLedger {
    std::string name;
    std::uint64_t total_steps = 0;
    std::uint64_t truncated_passes = 0;
    std::vector<int> ranks_trained;
    std::vector<std::pair<int, double>> candidate_metrics; // (rank, eval MSE)
    int best_rank = 0;
    double best_metric = 0.0;
};

// Exact step accounting for rank search: one static run per candidate rank
// versus a single dynamic run swept over the candidates at eval time.
struct SearchCostLedger {
    SearchArmLedger lora_search;
    SearchArmLedger dylora;
    std::uint64_t steps_ratio = 0; // lora_search.total_steps / dylora.total_steps
};

SearchCostLedger search_simulation(const TeacherTask& task,
                                   const std::vector<int>& candidate_ranks,
                                   std::uint64_t per_run_steps,
                                   const AdapterSpec& spec, const TrainConfig& base);

struct SoftFlag {
    std::string name;
    bool observed = false; // pass/warn, never a hard failure
    std::string detail;
};

struct AblationReport {
    EvalReport report; // arms = distributions x update modes, ranks = {r_min, r_max}
    std::vector<SoftFlag> flags;
};

AblationReport ablation(const TeacherTask& task,
                        const std::vector<RankDistSpec>& distributions,
                        const std::vector<UpdateMode>& update_modes,
                        const std::vector<std::uint64_t>& seeds,
                        const AdapterSpec& spec, const TrainConfig& base);

struct LossModeCost {
    StepCounters individual;
    StepCounters summation;
    double metric_individual = 0.0; // eval MSE averaged over ranks r_min..r_max
    double metric_summation = 0.0;
};

LossModeCost loss_mode_cost(const TeacherTask& task, const AdapterSpec& spec,
                            const TrainConfig& base);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Hard assertion: dynamic arm's median eval MSE strictly lower than the
// truncated static arm at every rank below the maximum.
CheckResult headline_check(const EvalReport& report, const std::string& dynamic_arm,
                           const std::string& static_arm);

// Hard assertion: median MSE non-increasing in rank, allowing at most one
// adjacent violation of <= 5% relative.
CheckResult monotonicity_check(const EvalReport& report, const std::string& arm);

} // namespace dylora
