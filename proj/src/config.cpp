#include "dylora/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dylora/errors.hpp"

namespace dylora {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            known = known || it.key() == key;
        }
        if (!known) {
            fail(path + "." + it.key(), "unknown field");
        }
    }
}

template <typename T>
T get_number(const json& obj, const std::string& path, const char* key, T fallback,
             bool required = false) {
    if (!obj.contains(key)) {
        if (required) {
            fail(path + "." + key, "missing required field");
        }
        return fallback;
    }
    const json& v = obj.at(key);
    if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) {
            fail(path + "." + key, "expected a number");
        }
    } else {
        if (!v.is_number_integer() && !v.is_number_unsigned()) {
            fail(path + "." + key, "expected an integer");
        }
    }
    return v.get<T>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback, bool required = false) {
    if (!obj.contains(key)) {
        if (required) {
            fail(path + "." + key, "missing required field");
        }
        return fallback;
    }
    if (!obj.at(key).is_string()) {
        fail(path + "." + key, "expected a string");
    }
    return obj.at(key).get<std::string>();
}

RankDistSpec parse_distribution(const json& obj, const std::string& path) {
    check_keys(obj, path, {"kind", "p"});
    RankDistSpec spec;
    const std::string kind = get_string(obj, path, "kind", "", true);
    if (kind == "uniform") {
        spec.kind = RankDistKind::Uniform;
    } else if (kind == "geometric") {
        spec.kind = RankDistKind::Geometric;
        spec.p = get_number<double>(obj, path, "p", 0.15);
        if (!(spec.p > 0.0) || !(spec.p < 1.0)) {
            fail(path + ".p", "must lie in (0,1)");
        }
    } else {
        fail(path + ".kind", "expected \"uniform\" or \"geometric\"");
    }
    return spec;
}

UpdateMode parse_update_mode(const std::string& s, const std::string& path) {
    if (s == "frozen") {
        return UpdateMode::Frozen;
    }
    if (s == "cascade") {
        return UpdateMode::Cascade;
    }
    fail(path, "expected \"frozen\" or \"cascade\"");
}

TaskSpec parse_task(const json& obj) {
    check_keys(obj, "task",
               {"kind", "seed", "m", "d", "r_star", "samples", "noise", "classes",
                "feature_dim", "raw_dim", "separation"});
    TaskSpec t;
    const std::string kind = get_string(obj, "task", "kind", "", true);
    if (kind == "teacher") {
        t.kind = TaskSpec::Kind::Teacher;
    } else if (kind == "classify") {
        t.kind = TaskSpec::Kind::Classify;
    } else {
        fail("task.kind", "expected \"teacher\" or \"classify\"");
    }
    t.seed = get_number<std::uint64_t>(obj, "task", "seed", t.seed);
    t.m = get_number<std::size_t>(obj, "task", "m", t.m);
    t.d = get_number<std::size_t>(obj, "task", "d", t.d);
    t.r_star = get_number<int>(obj, "task", "r_star", t.r_star);
    t.samples = get_number<std::size_t>(obj, "task", "samples", t.samples);
    t.noise = get_number<double>(obj, "task", "noise", t.noise);
    t.classes = get_number<int>(obj, "task", "classes", t.classes);
    t.feature_dim = get_number<std::size_t>(obj, "task", "feature_dim", t.feature_dim);
    t.raw_dim = get_number<std::size_t>(obj, "task", "raw_dim", t.raw_dim);
    t.separation = get_number<double>(obj, "task", "separation", t.separation);

    if (t.kind == TaskSpec::Kind::Teacher) {
        if (t.m < 1 || t.d < 1) {
            fail("task.m", "teacher dimensions must be positive");
        }
        if (t.r_star < 0 || static_cast<std::size_t>(t.r_star) > std::min(t.m, t.d)) {
            fail("task.r_star", "must lie in [0, min(m,d)]");
        }
        if (t.samples < 4) {
            fail("task.samples", "need at least 4 samples");
        }
        if (t.noise < 0.0) {
            fail("task.noise", "must be non-negative");
        }
    } else {
        if (t.classes < 2) {
            fail("task.classes", "need at least 2 classes");
        }
        if (t.feature_dim < 1 || t.raw_dim < 1) {
            fail("task.feature_dim", "classify dimensions must be positive");
        }
        if (!(t.separation > 0.0)) {
            fail("task.separation", "must be positive");
        }
    }
    return t;
}

AdapterSpec parse_adapter(const json& obj, const TaskSpec& task) {
    check_keys(obj, "adapter", {"r_min", "r_max", "alpha", "sigma"});
    AdapterSpec a;
    a.r_min = get_number<int>(obj, "adapter", "r_min", 0, true);
    a.r_max = get_number<int>(obj, "adapter", "r_max", 0, true);
    a.alpha = get_number<double>(obj, "adapter", "alpha", a.alpha);
    a.sigma = get_number<double>(obj, "adapter", "sigma", a.sigma);
    if (a.r_min < 1 || a.r_min > a.r_max) {
        fail("adapter.r_min", "need 1 <= r_min <= r_max");
    }
    const std::size_t cap = task.kind == TaskSpec::Kind::Teacher
                                ? std::min(task.m, task.d)
                                : std::min<std::size_t>(
                                      static_cast<std::size_t>(task.classes),
                                      task.feature_dim);
    if (static_cast<std::size_t>(a.r_max) > cap) {
        fail("adapter.r_max", "exceeds min of the adapted map's dimensions (" +
                                  std::to_string(cap) + ")");
    }
    if (!(a.alpha > 0.0)) {
        fail("adapter.alpha", "must be positive");
    }
    if (!(a.sigma > 0.0)) {
        fail("adapter.sigma", "must be positive");
    }
    return a;
}

TrainConfig parse_train(const json& obj) {
    check_keys(obj, "train",
               {"update_mode", "loss_mode", "steps", "batch_size", "learning_rate",
                "warmup_steps", "optimizer", "seed", "distribution"});
    TrainConfig t;
    t.optimizer = OptKind::AdamLike;
    t.adam.weight_decay = 0.1;
    t.update_mode = parse_update_mode(
        get_string(obj, "train", "update_mode", "cascade"), "train.update_mode");
    const std::string loss = get_string(obj, "train", "loss_mode", "individual");
    if (loss == "individual") {
        t.loss_mode = LossMode::Individual;
    } else if (loss == "summation") {
        t.loss_mode = LossMode::Summation;
    } else {
        fail("train.loss_mode", "expected \"individual\" or \"summation\"");
    }
    t.steps = get_number<std::uint64_t>(obj, "train", "steps", 4000);
    t.batch_size = get_number<std::uint64_t>(obj, "train", "batch_size", 32);
    t.learning_rate = get_number<double>(obj, "train", "learning_rate", 4e-4);
    t.warmup_steps = get_number<std::uint64_t>(obj, "train", "warmup_steps", 0);
    t.seed = get_number<std::uint64_t>(obj, "train", "seed", 42);
    if (obj.contains("distribution")) {
        if (!obj.at("distribution").is_object()) {
            fail("train.distribution", "expected an object");
        }
        t.distribution = parse_distribution(obj.at("distribution"), "train.distribution");
    }
    if (obj.contains("optimizer")) {
        const json& opt = obj.at("optimizer");
        if (!opt.is_object()) {
            fail("train.optimizer", "expected an object");
        }
        check_keys(opt, "train.optimizer",
                   {"kind", "beta1", "beta2", "eps", "weight_decay"});
        const std::string kind =
            get_string(opt, "train.optimizer", "kind", "", true);
        if (kind == "sgd") {
            t.optimizer = OptKind::Sgd;
        } else if (kind == "adam") {
            t.optimizer = OptKind::AdamLike;
            t.adam.beta1 = get_number<double>(opt, "train.optimizer", "beta1", 0.9);
            t.adam.beta2 = get_number<double>(opt, "train.optimizer", "beta2", 0.999);
            t.adam.eps = get_number<double>(opt, "train.optimizer", "eps", 1e-8);
            t.adam.weight_decay =
                get_number<double>(opt, "train.optimizer", "weight_decay", 0.1);
            if (!(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0) ||
                !(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0)) {
                fail("train.optimizer.beta1", "betas must lie in [0,1)");
            }
        } else {
            fail("train.optimizer.kind", "expected \"sgd\" or \"adam\"");
        }
    }
    if (t.steps < 1) {
        fail("train.steps", "must be >= 1");
    }
    if (t.batch_size < 1) {
        fail("train.batch_size", "must be >= 1");
    }
    if (!(t.learning_rate >= 0.0)) {
        fail("train.learning_rate", "must be non-negative");
    }
    return t;
}

BenchSpec parse_bench(const json& obj, const AdapterSpec& adapter) {
    check_keys(obj, "bench",
               {"seeds", "ranks", "candidate_ranks", "per_run_steps", "distributions",
                "update_modes"});
    BenchSpec b;
    if (obj.contains("seeds")) {
        if (!obj.at("seeds").is_array() || obj.at("seeds").empty()) {
            fail("bench.seeds", "expected a non-empty array of integers");
        }
        b.seeds.clear();
        for (const auto& v : obj.at("seeds")) {
            if (!v.is_number_integer() && !v.is_number_unsigned()) {
                fail("bench.seeds", "expected integers");
            }
            b.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    if (obj.contains("ranks")) {
        if (!obj.at("ranks").is_array() || obj.at("ranks").empty()) {
            fail("bench.ranks", "expected a non-empty array of integers");
        }
        b.ranks.clear();
        for (const auto& v : obj.at("ranks")) {
            if (!v.is_number_integer()) {
                fail("bench.ranks", "expected integers");
            }
            const int r = v.get<int>();
            if (r < 1 || r > adapter.r_max) {
                fail("bench.ranks", "rank " + std::to_string(r) +
                                        " outside [1, adapter.r_max]");
            }
            b.ranks.push_back(r);
        }
    } else {
        for (int r = adapter.r_min; r <= adapter.r_max; ++r) {
            b.ranks.push_back(r);
        }
    }
    if (obj.contains("candidate_ranks")) {
        if (!obj.at("candidate_ranks").is_array() || obj.at("candidate_ranks").empty()) {
            fail("bench.candidate_ranks", "expected a non-empty array of integers");
        }
        b.candidate_ranks.clear();
        for (const auto& v : obj.at("candidate_ranks")) {
            if (!v.is_number_integer()) {
                fail("bench.candidate_ranks", "expected integers");
            }
            const int r = v.get<int>();
            if (r < 1) {
                fail("bench.candidate_ranks", "ranks must be >= 1");
            }
            b.candidate_ranks.push_back(r);
        }
    }
    b.per_run_steps = get_number<std::uint64_t>(obj, "bench", "per_run_steps", 0);
    if (obj.contains("distributions")) {
        if (!obj.at("distributions").is_array() || obj.at("distributions").empty()) {
            fail("bench.distributions", "expected a non-empty array");
        }
        for (const auto& v : obj.at("distributions")) {
            if (!v.is_object()) {
                fail("bench.distributions", "expected objects");
            }
            b.distributions.push_back(parse_distribution(v, "bench.distributions"));
        }
    } else {
        b.distributions.push_back({RankDistKind::Uniform, 0.15});
        b.distributions.push_back({RankDistKind::Geometric, 0.15});
    }
    if (obj.contains("update_modes")) {
        if (!obj.at("update_modes").is_array() || obj.at("update_modes").empty()) {
            fail("bench.update_modes", "expected a non-empty array of strings");
        }
        for (const auto& v : obj.at("update_modes")) {
            if (!v.is_string()) {
                fail("bench.update_modes", "expected strings");
            }
            b.update_modes.push_back(
                parse_update_mode(v.get<std::string>(), "bench.update_modes"));
        }
    } else {
        b.update_modes = {UpdateMode::Cascade, UpdateMode::Frozen};
    }
    return b;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw ConfigError("config root must be a JSON object");
    }
    check_keys(root, "config", {"task", "adapter", "train", "bench", "output_dir"});
    if (!root.contains("task") || !root.at("task").is_object()) {
        throw ConfigError("task: missing required section");
    }
    if (!root.contains("adapter") || !root.at("adapter").is_object()) {
        throw ConfigError("adapter: missing required section");
    }
    ExperimentConfig cfg;
    cfg.task = parse_task(root.at("task"));
    cfg.adapter = parse_adapter(root.at("adapter"), cfg.task);
    if (root.contains("train")) {
        if (!root.at("train").is_object()) {
            throw ConfigError("train: expected an object");
        }
        cfg.train = parse_train(root.at("train"));
    } else {
        cfg.train = parse_train(json::object());
    }
    cfg.bench = parse_bench(root.contains("bench") ? root.at("bench") : json::object(),
                            cfg.adapter);
    cfg.output_dir = get_string(root, "config", "output_dir", cfg.output_dir);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open config file " + path);
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

namespace {

json distribution_json(const RankDistSpec& d) {
    json j;
    j["kind"] = d.kind == RankDistKind::Uniform ? "uniform" : "geometric";
    if (d.kind == RankDistKind::Geometric) {
        j["p"] = d.p;
    }
    return j;
}

} // namespace

std::string canonical_json(const ExperimentConfig& cfg) {
    json j;
    j["task"]["kind"] = cfg.task.kind == TaskSpec::Kind::Teacher ? "teacher" : "classify";
    j["task"]["seed"] = cfg.task.seed;
    if (cfg.task.kind == TaskSpec::Kind::Teacher) {
        j["task"]["m"] = cfg.task.m;
        j["task"]["d"] = cfg.task.d;
        j["task"]["r_star"] = cfg.task.r_star;
        j["task"]["samples"] = cfg.task.samples;
        j["task"]["noise"] = cfg.task.noise;
    } else {
        j["task"]["classes"] = cfg.task.classes;
        j["task"]["feature_dim"] = cfg.task.feature_dim;
        j["task"]["raw_dim"] = cfg.task.raw_dim;
        j["task"]["samples"] = cfg.task.samples;
        j["task"]["separation"] = cfg.task.separation;
    }
    j["adapter"]["r_min"] = cfg.adapter.r_min;
    j["adapter"]["r_max"] = cfg.adapter.r_max;
    j["adapter"]["alpha"] = cfg.adapter.alpha;
    j["adapter"]["sigma"] = cfg.adapter.sigma;
    j["train"]["update_mode"] =
        cfg.train.update_mode == UpdateMode::Frozen ? "frozen" : "cascade";
    j["train"]["loss_mode"] =
        cfg.train.loss_mode == LossMode::Individual ? "individual" : "summation";
    j["train"]["steps"] = cfg.train.steps;
    j["train"]["batch_size"] = cfg.train.batch_size;
    j["train"]["learning_rate"] = cfg.train.learning_rate;
    j["train"]["warmup_steps"] = cfg.train.warmup_steps;
    j["train"]["seed"] = cfg.train.seed;
    j["train"]["distribution"] = distribution_json(cfg.train.distribution);
    if (cfg.train.optimizer == OptKind::Sgd) {
        j["train"]["optimizer"]["kind"] = "sgd";
    } else {
        j["train"]["optimizer"]["kind"] = "adam";
        j["train"]["optimizer"]["beta1"] = cfg.train.adam.beta1;
        j["train"]["optimizer"]["beta2"] = cfg.train.adam.beta2;
        j["train"]["optimizer"]["eps"] = cfg.train.adam.eps;
        j["train"]["optimizer"]["weight_decay"] = cfg.train.adam.weight_decay;
    }
    j["bench"]["seeds"] = cfg.bench.seeds;
    j["bench"]["ranks"] = cfg.bench.ranks;
    j["bench"]["candidate_ranks"] = cfg.bench.candidate_ranks;
    j["bench"]["per_run_steps"] = cfg.bench.per_run_steps;
    j["bench"]["distributions"] = json::array();
    for (const auto& d : cfg.bench.distributions) {
        j["bench"]["distributions"].push_back(distribution_json(d));
    }
    j["bench"]["update_modes"] = json::array();
    for (const auto m : cfg.bench.update_modes) {
        j["bench"]["update_modes"].push_back(m == UpdateMode::Frozen ? "frozen"
                                                                     : "cascade");
    }
    j["output_dir"] = cfg.output_dir;
    return j.dump();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string text = canonical_json(cfg);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

TeacherTask build_teacher(const TaskSpec& spec) {
    if (spec.kind != TaskSpec::Kind::Teacher) {
        throw ConfigError("task.kind: expected a teacher task");
    }
    return make_teacher(spec.seed, spec.m, spec.d, spec.r_star, spec.samples,
                        spec.noise);
}

ClassifyTask build_classify(const TaskSpec& spec) {
    if (spec.kind != TaskSpec::Kind::Classify) {
        throw ConfigError("task.kind: expected a classify task");
    }
    return make_classify(spec.seed, spec.classes, spec.feature_dim, spec.raw_dim,
                         spec.samples, spec.separation);
}

} // namespace dylora
