#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dylora/bench.hpp"
#include "dylora/trainer.hpp"

namespace dylora {

struct TaskSpec {
    enum class Kind { Teacher, Classify };
    Kind kind = Kind::Teacher;
    std::uint64_t seed = 7;
    // teacher
    std::size_t m = 32;
    std::size_t d = 32;
    int r_star = 8;
    std::size_t samples = 2048;
    double noise = 0.01;
    // classify
    int classes = 4;
    std::size_t feature_dim = 32;
    std::size_t raw_dim = 16;
    double separation = 3.0;
};

struct BenchSpec {
    std::vector<std::uint64_t> seeds = {10, 42, 4242, 1010, 2020};
    std::vector<int> ranks;                              // default: r_min..r_max
    std::vector<int> candidate_ranks = {1, 2, 4, 8, 16, 32, 64};
    std::uint64_t per_run_steps = 0;                     // 0: use train.steps
    std::vector<RankDistSpec> distributions;             // default: uniform, geometric
    std::vector<UpdateMode> update_modes;                // default: cascade, frozen
};

struct ExperimentConfig {
    TaskSpec task;
    AdapterSpec adapter;
    TrainConfig train;
    BenchSpec bench;
    std::string output_dir = "out";
};

// Parses and validates a JSON experiment config. Unknown keys, missing
// required fields (task.kind, adapter.r_min, adapter.r_max) and cross-field
// violations raise ConfigError naming the offending dotted field path.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

// Canonical serialization (all defaults materialized, sorted keys) and the
// FNV-1a hash of it used in run manifests.
std::string canonical_json(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

TeacherTask build_teacher(const TaskSpec& spec);
ClassifyTask build_classify(const TaskSpec& spec);

} // namespace dylora
