#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dylora/adapter.hpp"
#include "dylora/bench.hpp"
#include "dylora/config.hpp"
#include "dylora/errors.hpp"
#include "dylora/report_io.hpp"
#include "dylora/tasks.hpp"
#include "dylora/trainer.hpp"

namespace {

using dylora::ExperimentConfig;
using nlohmann::json;

// Exit codes: 0 ok, 2 config error, 3 usage/contract error,
// 4 hard-assertion failure, 5 divergence.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitContract = 3;
constexpr int kExitAssertion = 4;
constexpr int kExitDivergence = 5;

std::string hash_string(const ExperimentConfig& cfg) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016llx",
                  static_cast<unsigned long long>(dylora::config_hash(cfg)));
    return buf;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.output_dir);
    return (std::filesystem::path(cfg.output_dir) / name).string();
}

json counters_json(const dylora::StepCounters& c) {
    json j;
    j["steps_run"] = c.steps_run;
    j["truncated_passes"] = c.truncated_passes;
    j["param_scalar_updates"] = c.param_scalar_updates;
    return j;
}

dylora::Dataset train_data_for(const ExperimentConfig& cfg,
                               const dylora::TeacherTask*& teacher_out,
                               dylora::TeacherTask& teacher_storage,
                               dylora::ClassifyTask& classify_storage) {
    if (cfg.task.kind == dylora::TaskSpec::Kind::Teacher) {
        teacher_storage = dylora::build_teacher(cfg.task);
        teacher_out = &teacher_storage;
        return teacher_storage.train_data();
    }
    classify_storage = dylora::build_classify(cfg.task);
    teacher_out = nullptr;
    return classify_storage.train_data();
}

dylora::Matrix base_weights_for(const dylora::TeacherTask* teacher,
                                const dylora::ClassifyTask& classify) {
    return teacher != nullptr ? teacher->w0 : classify.w0;
}

int cmd_train(const ExperimentConfig& cfg) {
    dylora::TeacherTask teacher;
    dylora::ClassifyTask classify;
    const dylora::TeacherTask* teacher_ptr = nullptr;
    const dylora::Dataset data = train_data_for(cfg, teacher_ptr, teacher, classify);

    dylora::Rng init_rng(cfg.train.seed, dylora::kInitStream);
    dylora::DyLoraAdapter adapter = dylora::init_adapter(
        init_rng, base_weights_for(teacher_ptr, classify), cfg.adapter.r_min,
        cfg.adapter.r_max, cfg.adapter.alpha, cfg.adapter.sigma);
    const dylora::TrainResult res = dylora::train(adapter, data, cfg.train);

    dylora::save_adapter(adapter, out_path(cfg, "checkpoint.bin"));
    dylora::write_text_file(out_path(cfg, "trace.csv"), dylora::trace_csv(res.trace));

    json manifest;
    manifest["command"] = "train";
    manifest["config_hash"] = hash_string(cfg);
    manifest["seed"] = cfg.train.seed;
    manifest["counters"] = counters_json(res.counters);
    manifest["final_loss"] = res.trace.empty() ? 0.0 : res.trace.back().loss;
    manifest["files"] = {{"checkpoint", "checkpoint.bin"}, {"trace", "trace.csv"}};
    dylora::write_text_file(out_path(cfg, "manifest.json"), manifest.dump(2) + "\n");

    std::printf("wrote %s\n", out_path(cfg, "checkpoint.bin").c_str());
    return kExitOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint, int rank,
             bool merged) {
    const dylora::DyLoraAdapter adapter = dylora::load_adapter(checkpoint);
    if (rank < adapter.r_min || rank > adapter.r_max) {
        std::fprintf(stderr,
                     "eval: rank %d outside the checkpoint's trained range [%d,%d]\n",
                     rank, adapter.r_min, adapter.r_max);
        return kExitContract;
    }

    dylora::TeacherTask teacher;
    dylora::ClassifyTask classify;
    const dylora::TeacherTask* teacher_ptr = nullptr;
    (void)train_data_for(cfg, teacher_ptr, teacher, classify);

    double metric = 0.0;
    const char* metric_kind = teacher_ptr != nullptr ? "mse" : "accuracy";
    if (merged) {
        const dylora::Matrix w = dylora::merge(adapter, rank);
        metric = teacher_ptr != nullptr ? dylora::eval_merged(w, teacher)
                                        : dylora::eval_merged(w, classify);
        dylora::save_matrix(w, out_path(cfg, "merged.bin"));
    } else {
        metric = teacher_ptr != nullptr ? dylora::eval_task(adapter, teacher, rank)
                                        : dylora::eval_task(adapter, classify, rank);
    }

    json record;
    record["command"] = "eval";
    record["rank"] = rank;
    record["metric"] = metric;
    record["metric_kind"] = metric_kind;
    record["merged"] = merged;
    dylora::write_text_file(out_path(cfg, "eval.json"), record.dump(2) + "\n");
    std::printf("%s@rank%d = %s\n", metric_kind, rank,
                dylora::format_double(metric).c_str());
    return kExitOk;
}

dylora::TeacherTask require_teacher(const ExperimentConfig& cfg) {
    if (cfg.task.kind != dylora::TaskSpec::Kind::Teacher) {
        throw dylora::ConfigError(
            "task.kind: sweep/ablation/search operate on teacher tasks");
    }
    return dylora::build_teacher(cfg.task);
}

json assertion_json(const dylora::CheckResult& c) {
    json j;
    j["name"] = c.name;
    j["pass"] = c.pass;
    j["detail"] = c.detail;
    return j;
}

int cmd_sweep(const ExperimentConfig& cfg) {
    const dylora::TeacherTask task = require_teacher(cfg);
    dylora::BenchArm dynamic_arm;
    dynamic_arm.name = "dylora";
    dynamic_arm.adapter = cfg.adapter;
    dynamic_arm.train = cfg.train;
    dylora::BenchArm static_arm;
    static_arm.name = "static-r" + std::to_string(cfg.adapter.r_max);
    static_arm.adapter = cfg.adapter;
    static_arm.train = cfg.train;
    static_arm.static_baseline = true;

    const dylora::EvalReport report = dylora::rank_sweep(
        task, {dynamic_arm, static_arm}, cfg.bench.ranks, cfg.bench.seeds);

    const dylora::CheckResult headline =
        dylora::headline_check(report, dynamic_arm.name, static_arm.name);
    const dylora::CheckResult monotonic =
        dylora::monotonicity_check(report, dynamic_arm.name);

    dylora::write_text_file(out_path(cfg, "report.csv"), dylora::report_csv(report));
    json manifest;
    manifest["command"] = "sweep";
    manifest["config_hash"] = hash_string(cfg);
    manifest["seeds"] = cfg.bench.seeds;
    for (const auto& [arm, counters] : report.counters) {
        manifest["counters"][arm] = counters_json(counters);
    }
    manifest["assertions"] = json::array({assertion_json(headline),
                                          assertion_json(monotonic)});
    manifest["errors"] = report.errors;
    dylora::write_text_file(out_path(cfg, "manifest.json"), manifest.dump(2) + "\n");

    std::printf("%s: %s\n", headline.name.c_str(), headline.pass ? "pass" : "FAIL");
    std::printf("%s: %s\n", monotonic.name.c_str(), monotonic.pass ? "pass" : "FAIL");
    return headline.pass && monotonic.pass ? kExitOk : kExitAssertion;
}

int cmd_ablation(const ExperimentConfig& cfg) {
    const dylora::TeacherTask task = require_teacher(cfg);
    const dylora::AblationReport out =
        dylora::ablation(task, cfg.bench.distributions, cfg.bench.update_modes,
                         cfg.bench.seeds, cfg.adapter, cfg.train);

    dylora::write_text_file(out_path(cfg, "report.csv"), dylora::report_csv(out.report));
    json manifest;
    manifest["command"] = "ablation";
    manifest["config_hash"] = hash_string(cfg);
    manifest["seeds"] = cfg.bench.seeds;
    for (const auto& [arm, counters] : out.report.counters) {
        manifest["counters"][arm] = counters_json(counters);
    }
    manifest["soft_flags"] = json::array();
    for (const auto& flag : out.flags) {
        json j;
        j["name"] = flag.name;
        j["status"] = flag.observed ? "pass" : "warn";
        j["detail"] = flag.detail;
        manifest["soft_flags"].push_back(j);
        std::printf("[%s] %s: %s\n", flag.observed ? "pass" : "warn",
                    flag.name.c_str(), flag.detail.c_str());
    }
    manifest["errors"] = out.report.errors;
    dylora::write_text_file(out_path(cfg, "manifest.json"), manifest.dump(2) + "\n");
    return kExitOk;
}

int cmd_search(const ExperimentConfig& cfg) {
    const dylora::TeacherTask task = require_teacher(cfg);
    const std::size_t cap = std::min(cfg.task.m, cfg.task.d);
    for (const int r : cfg.bench.candidate_ranks) {
        if (static_cast<std::size_t>(r) > cap) {
            throw dylora::ConfigError("bench.candidate_ranks: rank " +
                                      std::to_string(r) + " exceeds min(m,d)=" +
                                      std::to_string(cap));
        }
    }
    const std::uint64_t per_run =
        cfg.bench.per_run_steps > 0 ? cfg.bench.per_run_steps : cfg.train.steps;
    const dylora::SearchCostLedger ledger = dylora::search_simulation(
        task, cfg.bench.candidate_ranks, per_run, cfg.adapter, cfg.train);

    // Per-candidate metrics: the search arm's own-rank results and the single
    // dynamic checkpoint swept over the same candidates.
    std::string csv = "rank,arm,seed,metric\n";
    for (const auto* arm : {&ledger.lora_search, &ledger.dylora}) {
        for (const auto& [r, metric] : arm->candidate_metrics) {
            csv += std::to_string(r) + "," + arm->name + "," +
                   std::to_string(cfg.train.seed) + "," +
                   dylora::format_double(metric) + "\n";
        }
    }
    json manifest;
    manifest["command"] = "search";
    manifest["config_hash"] = hash_string(cfg);
    manifest["per_run_steps"] = per_run;
    manifest["candidate_ranks"] = cfg.bench.candidate_ranks;
    for (const auto* arm : {&ledger.lora_search, &ledger.dylora}) {
        json j;
        j["total_steps"] = arm->total_steps;
        j["truncated_passes"] = arm->truncated_passes;
        j["ranks_trained"] = arm->ranks_trained;
        j["best_rank"] = arm->best_rank;
        j["best_metric"] = arm->best_metric;
        manifest["arms"][arm->name] = j;
    }
    manifest["steps_ratio"] = ledger.steps_ratio;

    dylora::CheckResult ratio_check;
    ratio_check.name = "search-steps-ratio-equals-candidate-count";
    const auto n_candidates =
        static_cast<std::uint64_t>(cfg.bench.candidate_ranks.size());
    ratio_check.pass =
        ledger.steps_ratio == n_candidates &&
        ledger.lora_search.total_steps == n_candidates * ledger.dylora.total_steps;
    ratio_check.detail = std::to_string(ledger.lora_search.total_steps) + " vs " +
                         std::to_string(ledger.dylora.total_steps) + " steps (ratio " +
                         std::to_string(ledger.steps_ratio) + "x, " +
                         std::to_string(n_candidates) + " candidates)";
    manifest["assertions"] = json::array({assertion_json(ratio_check)});

    dylora::write_text_file(out_path(cfg, "report.csv"), csv);
    dylora::write_text_file(out_path(cfg, "manifest.json"), manifest.dump(2) + "\n");
    std::printf("%s: %s (%s)\n", ratio_check.name.c_str(),
                ratio_check.pass ? "pass" : "FAIL", ratio_check.detail.c_str());
    return ratio_check.pass ? kExitOk : kExitAssertion;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic low-rank adapter training and benchmarking"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string checkpoint;
    std::uint64_t seed_override = 0;
    bool have_seed = false;
    int rank = 0;
    bool merged = false;

    auto add_common = [&](CLI::App* cmd, bool need_config) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config (JSON)");
        if (need_config) {
            opt->required();
        }
        cmd->add_option("--out", out_override, "output directory override");
        cmd->add_option("--seed", seed_override, "training seed override")
            ->each([&](const std::string&) { have_seed = true; });
    };

    auto* train_cmd = app.add_subcommand("train", "train one adapter");
    add_common(train_cmd, true);
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint at a rank");
    add_common(eval_cmd, true);
    eval_cmd->add_option("--checkpoint", checkpoint, "adapter checkpoint")->required();
    eval_cmd->add_option("--rank", rank, "evaluation rank")->required();
    eval_cmd->add_flag("--merged", merged, "evaluate through merged dense weights");
    auto* sweep_cmd = app.add_subcommand("sweep", "dynamic-vs-static rank sweep");
    add_common(sweep_cmd, true);
    auto* ablation_cmd =
        app.add_subcommand("ablation", "distribution x update-mode ablation");
    add_common(ablation_cmd, true);
    auto* search_cmd = app.add_subcommand("search", "rank-search cost comparison");
    add_common(search_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitContract;
    }

    try {
        ExperimentConfig cfg = dylora::load_config(config_path);
        if (have_seed) {
            cfg.train.seed = seed_override;
        }
        if (!out_override.empty()) {
            cfg.output_dir = out_override;
        }
        if (train_cmd->parsed()) {
            return cmd_train(cfg);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(cfg, checkpoint, rank, merged);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(cfg);
        }
        if (ablation_cmd->parsed()) {
            return cmd_ablation(cfg);
        }
        if (search_cmd->parsed()) {
            return cmd_search(cfg);
        }
        return kExitContract;
    } catch (const dylora::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const dylora::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const dylora::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitContract;
    }
}
