#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "refinelab/infer.hpp"
#include "refinelab/losses.hpp"
#include "refinelab/nn/adamw.hpp"
#include "refinelab/nn/backbone.hpp"
#include "refinelab/schedule.hpp"
#include "refinelab/task.hpp"
#include "refinelab/train.hpp"

namespace refinelab {

// The full experiment configuration: flat dotted keys, unknown keys
// rejected, echoed verbatim into every run directory.
struct RunConfig {
    TaskSpec task = TaskSpec::mini_sudoku();

    nn::Variant variant = nn::Variant::adaptive;
    int hidden_dim = 128;
    int n_blocks = 4;
    int n_heads = 4;
    int ffn_ratio = 4;
    double dropout = 0.05;
    int head_hidden_dim = 64;
    int head_layers = 2;
    std::string precision = "f32";  // f32 | f64

    nn::AdamWConfig optim;
    LossConfig loss;
    Schedule schedule = Schedule::polynomial(2.0);
    double gidd_p_u_max = 0.2;

    TrainMode train_mode = TrainMode::adaptive;
    int64_t train_steps = 3000;
    int batch_size = 64;
    int64_t checkpoint_every = 1000;
    int64_t log_every = 1;
    bool feed_time_adaptive = false;

    SolveMethod infer_method = SolveMethod::adaptive;
    int infer_K = 1;
    int infer_n_steps = 100;
    double infer_epsilon = 0.05;
    int infer_max_steps = 256;
    double infer_eta = 0.9;
    double euler_end_clamp = 1e-3;
    int jobs = 1;

    uint64_t seed = 1;

    std::string dataset_path;
    std::string run_dir;
    std::string out_path;
    std::string checkpoint_path;

    nn::BackboneConfig backbone() const {
        nn::BackboneConfig c;
        c.variant = variant;
        c.vocab_size = task.vocab().size;
        c.seq_len = task.d();
        c.hidden_dim = hidden_dim;
        c.n_blocks = n_blocks;
        c.n_heads = n_heads;
        c.ffn_ratio = ffn_ratio;
        c.dropout = dropout;
        c.head_hidden_dim = head_hidden_dim;
        c.head_layers = head_layers;
        c.validate();
        return c;
    }

    TrainConfig trainer() const {
        TrainConfig t;
        t.mode = train_mode;
        t.steps = train_steps;
        t.batch_size = batch_size;
        t.checkpoint_every = checkpoint_every;
        t.log_every = log_every;
        t.seed = seed;
        t.schedule = schedule;
        t.gidd_p_u_max = gidd_p_u_max;
        t.loss = loss;
        t.optim = optim;
        t.feed_time_adaptive = feed_time_adaptive;
        return t;
    }

    InferConfig inference() const {
        InferConfig c;
        c.method = infer_method;
        c.K = infer_K;
        c.n_steps = infer_n_steps;
        c.kernel.epsilon = infer_epsilon;
        c.kernel.max_steps = infer_max_steps;
        c.kernel.rollout_len = loss.rollout_len;
        c.kernel.rollout_prob = loss.rollout_prob;
        c.eta = infer_eta;
        c.schedule = schedule;
        c.euler_end_clamp = euler_end_clamp;
        c.jobs = jobs;
        return c;
    }

    std::map<std::string, std::string> echo() const;
    void validate() const {
        backbone();
        optim.validate();
        loss.validate();
        if (precision != "f32" && precision != "f64")
            throw config_error("model.precision must be f32 or f64");
        if (train_steps < 1 || batch_size < 1) throw config_error("bad training settings");
        if (infer_K < 1 || infer_n_steps < 1 || infer_max_steps < 1 || jobs < 1)
            throw config_error("bad inference settings");
        if (infer_epsilon <= 0.0 || infer_epsilon >= 1.0)
            throw config_error("infer.epsilon must lie in (0,1)");
        if (infer_eta < 0.0 || infer_eta > 1.0) throw config_error("infer.eta must lie in [0,1]");
    }
};

namespace config_detail {

inline int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config key " + key + " expects an integer, got '" + v + "'");
    }
}

inline int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config key " + key + " expects an integer, got '" + v + "'");
    }
}

inline uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config key " + key + " expects an unsigned integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw config_error("config key " + key + " expects a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("config key " + key + " expects true/false, got '" + v + "'");
}

}  // namespace config_detail

inline void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    using namespace config_detail;
    // task block
    if (key == "task.kind") {
        if (value == "mini-sudoku") cfg.task = TaskSpec::mini_sudoku();
        else if (value == "sudoku") cfg.task = TaskSpec::sudoku9();
        else if (value == "countdown") cfg.task = TaskSpec::mini_countdown();
        else throw config_error("unknown task.kind: " + value);
    } else if (key == "task.n") {
        cfg.task.n = to_int(key, value);
        if (cfg.task.n == 9 && cfg.task.clue_max <= 10) {
            cfg.task.clue_min = 17;
            cfg.task.clue_max = 25;
        }
    } else if (key == "task.clue_min") cfg.task.clue_min = to_int(key, value);
    else if (key == "task.clue_max") cfg.task.clue_max = to_int(key, value);
    else if (key == "task.k") cfg.task.countdown.k = to_int(key, value);
    else if (key == "task.operand_max") cfg.task.countdown.operand_max = to_int(key, value);
    else if (key == "task.result_max") cfg.task.countdown.result_max = to_int(key, value);
    else if (key == "task.target_min") cfg.task.countdown.target_min = to_int(key, value);
    else if (key == "task.target_max") cfg.task.countdown.target_max = to_int(key, value);
    // model block
    else if (key == "model.variant") cfg.variant = nn::variant_from_string(value);
    else if (key == "model.hidden_dim") cfg.hidden_dim = to_int(key, value);
    else if (key == "model.n_blocks") cfg.n_blocks = to_int(key, value);
    else if (key == "model.n_heads") cfg.n_heads = to_int(key, value);
    else if (key == "model.ffn_ratio") cfg.ffn_ratio = to_int(key, value);
    else if (key == "model.dropout") cfg.dropout = to_double(key, value);
    else if (key == "model.head_hidden_dim") cfg.head_hidden_dim = to_int(key, value);
    else if (key == "model.head_layers") cfg.head_layers = to_int(key, value);
    else if (key == "model.precision") cfg.precision = value;
    else if (key == "model.preset") {
        if (value == "desk") {
            cfg.hidden_dim = 128;
            cfg.n_blocks = 4;
            cfg.n_heads = 4;
            cfg.head_hidden_dim = 64;
            cfg.head_layers = 2;
        } else if (value == "paper") {
            cfg.hidden_dim = 512;
            cfg.n_blocks = 8;
            cfg.n_heads = 8;
            cfg.head_hidden_dim = 256;
            cfg.head_layers = 3;
        } else if (value == "tiny") {
            cfg.hidden_dim = 32;
            cfg.n_blocks = 2;
            cfg.n_heads = 2;
            cfg.head_hidden_dim = 16;
            cfg.head_layers = 2;
        } else {
            throw config_error("unknown model.preset: " + value);
        }
    }
    // optimizer block
    else if (key == "optim.lr") cfg.optim.lr = to_double(key, value);
    else if (key == "optim.beta1") cfg.optim.beta1 = to_double(key, value);
    else if (key == "optim.beta2") cfg.optim.beta2 = to_double(key, value);
    else if (key == "optim.eps") cfg.optim.eps = to_double(key, value);
    else if (key == "optim.weight_decay") cfg.optim.weight_decay = to_double(key, value);
    else if (key == "optim.warmup_steps") cfg.optim.warmup_steps = to_int(key, value);
    else if (key == "optim.clip_norm") cfg.optim.clip_norm = to_double(key, value);
    // loss block
    else if (key == "loss.epsilon") cfg.loss.epsilon = to_double(key, value);
    else if (key == "loss.exponent_k") cfg.loss.exponent_k = to_double(key, value);
    else if (key == "loss.tau_loss") cfg.loss.tau_loss = tau_loss_from_string(value);
    else if (key == "loss.confidence_clamp") cfg.loss.confidence_clamp = to_double(key, value);
    else if (key == "loss.w1") cfg.loss.w1 = to_double(key, value);
    else if (key == "loss.w2") cfg.loss.w2 = to_double(key, value);
    else if (key == "loss.w3") cfg.loss.w3 = to_double(key, value);
    else if (key == "loss.on_policy") {
        if (value == "one_step") cfg.loss.on_policy = OnPolicyMode::one_step;
        else if (value == "rollout") cfg.loss.on_policy = OnPolicyMode::rollout;
        else throw config_error("unknown loss.on_policy: " + value);
    } else if (key == "loss.rollout_len") cfg.loss.rollout_len = to_int(key, value);
    else if (key == "loss.rollout_prob") cfg.loss.rollout_prob = to_double(key, value);
    // schedule block
    else if (key == "schedule.kind") {
        if (value == "linear") cfg.schedule = Schedule::linear();
        else if (value == "polynomial") cfg.schedule = Schedule::polynomial(cfg.schedule.exponent);
        else throw config_error("unknown schedule.kind: " + value);
    } else if (key == "schedule.exponent") {
        const double e = to_double(key, value);
        if (cfg.schedule.kind == Schedule::Kind::polynomial) cfg.schedule = Schedule::polynomial(e);
        else cfg.schedule.exponent = e;
    } else if (key == "gidd.p_u_max") cfg.gidd_p_u_max = to_double(key, value);
    // train block
    else if (key == "train.mode") cfg.train_mode = train_mode_from_string(value);
    else if (key == "train.steps") cfg.train_steps = to_i64(key, value);
    else if (key == "train.batch_size") cfg.batch_size = to_int(key, value);
    else if (key == "train.checkpoint_every") cfg.checkpoint_every = to_i64(key, value);
    else if (key == "train.log_every") cfg.log_every = to_i64(key, value);
    else if (key == "train.feed_time") cfg.feed_time_adaptive = to_bool(key, value);
    // inference block
    else if (key == "infer.method") cfg.infer_method = solve_method_from_string(value);
    else if (key == "infer.K") cfg.infer_K = to_int(key, value);
    else if (key == "infer.n_steps") cfg.infer_n_steps = to_int(key, value);
    else if (key == "infer.epsilon") cfg.infer_epsilon = to_double(key, value);
    else if (key == "infer.max_steps") cfg.infer_max_steps = to_int(key, value);
    else if (key == "infer.eta") cfg.infer_eta = to_double(key, value);
    else if (key == "infer.euler_end_clamp") cfg.euler_end_clamp = to_double(key, value);
    else if (key == "infer.jobs") cfg.jobs = to_int(key, value);
    // misc
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "paths.dataset") cfg.dataset_path = value;
    else if (key == "paths.run_dir") cfg.run_dir = value;
    else if (key == "paths.out") cfg.out_path = value;
    else if (key == "paths.checkpoint") cfg.checkpoint_path = value;
    else throw config_error("unknown config key: " + key);
}

inline void apply_config_line(RunConfig& cfg, const std::string& raw, int lineno) {
    std::string line = raw;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) return;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    auto eq = line.find('=');
    if (eq == std::string::npos)
        throw config_error("config line " + std::to_string(lineno) + " is not key = value");
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
        throw config_error("config line " + std::to_string(lineno) + " has an empty key or value");
    apply_config_kv(cfg, key, value);
}

inline RunConfig load_config_file(const std::string& path, RunConfig cfg = RunConfig{}) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) apply_config_line(cfg, line, ++lineno);
    return cfg;
}

inline std::map<std::string, std::string> RunConfig::echo() const {
    std::map<std::string, std::string> m;
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    m["task.kind"] = task.name();
    if (task.kind == TaskKind::sudoku) {
        m["task.n"] = std::to_string(task.n);
        m["task.clue_min"] = std::to_string(task.clue_min);
        m["task.clue_max"] = std::to_string(task.clue_max);
    } else {
        m["task.k"] = std::to_string(task.countdown.k);
        m["task.operand_max"] = std::to_string(task.countdown.operand_max);
        m["task.result_max"] = std::to_string(task.countdown.result_max);
        m["task.target_min"] = std::to_string(task.countdown.target_min);
        m["task.target_max"] = std::to_string(task.countdown.target_max);
    }
    m["model.variant"] = nn::to_string(variant);
    m["model.hidden_dim"] = std::to_string(hidden_dim);
    m["model.n_blocks"] = std::to_string(n_blocks);
    m["model.n_heads"] = std::to_string(n_heads);
    m["model.ffn_ratio"] = std::to_string(ffn_ratio);
    m["model.dropout"] = num(dropout);
    m["model.head_hidden_dim"] = std::to_string(head_hidden_dim);
    m["model.head_layers"] = std::to_string(head_layers);
    m["model.precision"] = precision;
    m["optim.lr"] = num(optim.lr);
    m["optim.beta1"] = num(optim.beta1);
    m["optim.beta2"] = num(optim.beta2);
    m["optim.eps"] = num(optim.eps);
    m["optim.weight_decay"] = num(optim.weight_decay);
    m["optim.warmup_steps"] = std::to_string(optim.warmup_steps);
    m["optim.clip_norm"] = num(optim.clip_norm);
    m["loss.epsilon"] = num(loss.epsilon);
    m["loss.exponent_k"] = num(loss.exponent_k);
    m["loss.tau_loss"] = loss.tau_loss == TauLossKind::absolute ? "absolute" : "squared";
    m["loss.confidence_clamp"] = num(loss.confidence_clamp);
    m["loss.w1"] = num(loss.w1);
    m["loss.w2"] = num(loss.w2);
    m["loss.w3"] = num(loss.w3);
    m["loss.on_policy"] = loss.on_policy == OnPolicyMode::one_step ? "one_step" : "rollout";
    m["loss.rollout_len"] = std::to_string(loss.rollout_len);
    m["loss.rollout_prob"] = num(loss.rollout_prob);
    m["schedule.kind"] = schedule.kind == Schedule::Kind::linear ? "linear" : "polynomial";
    m["schedule.exponent"] = num(schedule.exponent);
    m["gidd.p_u_max"] = num(gidd_p_u_max);
    m["train.mode"] = to_string(train_mode);
    m["train.steps"] = std::to_string(train_steps);
    m["train.batch_size"] = std::to_string(batch_size);
    m["train.checkpoint_every"] = std::to_string(checkpoint_every);
    m["train.log_every"] = std::to_string(log_every);
    m["train.feed_time"] = feed_time_adaptive ? "true" : "false";
    m["infer.method"] = to_string(infer_method);
    m["infer.K"] = std::to_string(infer_K);
    m["infer.n_steps"] = std::to_string(infer_n_steps);
    m["infer.epsilon"] = num(infer_epsilon);
    m["infer.max_steps"] = std::to_string(infer_max_steps);
    m["infer.eta"] = num(infer_eta);
    m["infer.euler_end_clamp"] = num(euler_end_clamp);
    m["infer.jobs"] = std::to_string(jobs);
    m["seed"] = std::to_string(seed);
    return m;
}

// Task presets for the two experiment families; mirrors the defaults used in
// the configs shipped under configs/.
inline RunConfig mini_sudoku_defaults(TrainMode mode) {
    RunConfig cfg;
    cfg.task = TaskSpec::mini_sudoku();
    cfg.schedule = Schedule::polynomial(2.0);
    cfg.train_mode = mode;
    cfg.variant = mode == TrainMode::adaptive ? nn::Variant::adaptive : nn::Variant::baseline;
    cfg.optim.lr = 3e-4;
    cfg.optim.weight_decay = 1e-4;
    cfg.loss.on_policy = OnPolicyMode::one_step;
    return cfg;
}

inline RunConfig mini_countdown_defaults(TrainMode mode) {
    RunConfig cfg;
    cfg.task = TaskSpec::mini_countdown(3);
    cfg.train_mode = mode;
    cfg.variant = mode == TrainMode::adaptive ? nn::Variant::adaptive : nn::Variant::baseline;
    cfg.optim.lr = 5e-4;
    cfg.optim.weight_decay = 0.02;
    if (mode == TrainMode::adaptive) {
        cfg.schedule = Schedule::linear();
        cfg.loss.on_policy = OnPolicyMode::rollout;
        cfg.loss.rollout_len = 5;
        cfg.loss.rollout_prob = 0.1;
    } else {
        cfg.schedule = Schedule::polynomial(2.0);
    }
    return cfg;
}

}  // namespace refinelab
