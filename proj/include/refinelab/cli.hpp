#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "refinelab/config.hpp"
#include "refinelab/dataset.hpp"
#include "refinelab/infer.hpp"
#include "refinelab/model_fn.hpp"
#include "refinelab/nn/checkpoint.hpp"
#include "refinelab/train.hpp"

namespace refinelab::cli {

namespace fs = std::filesystem;

inline void write_config_echo(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write config echo: " + path);
    for (const auto& [k, v] : cfg.echo()) out << k << " = " << v << "\n";
}

// ---------------------------------------------------------------- gen-data

inline void cmd_gen_data(const RunConfig& cfg, size_t count, Split split,
                         const std::string& out_path, bool quiet = false) {
    cfg.validate();
    auto progress = [&](size_t n) {
        if (!quiet) std::cerr << "generated " << n << "/" << count << " instances\n";
    };
    Dataset ds = generate_dataset_parallel(cfg.task, cfg.seed, count, split, cfg.jobs, progress);
    write_dataset(ds, out_path);
    if (!quiet)
        std::cerr << "wrote " << ds.size() << " " << to_string(split) << " instances to "
                  << out_path << "\n";
}

// ------------------------------------------------------------------- train

template <typename Real>
void run_train_impl(RunConfig cfg, bool resume, bool quiet) {
    Dataset data = read_dataset(cfg.dataset_path);  // before any run-dir output
    cfg.task = data.task;
    cfg.validate();

    nn::Backbone<Real> model(cfg.backbone());
    Trainer<Real> trainer(model, cfg.trainer(), data);

    fs::create_directories(cfg.run_dir);
    write_config_echo(cfg, cfg.run_dir + "/config.echo");
    const uint64_t data_hash = file_content_hash(cfg.dataset_path);
    {
        std::ofstream out(cfg.run_dir + "/dataset.hash", std::ios::binary);
        std::ostringstream os;
        os << std::hex << data_hash;
        out << os.str() << "  " << cfg.dataset_path << "\n";
    }

    const std::string latest = cfg.run_dir + "/ckpt_latest.bin";
    bool resumed = false;
    if (resume && fs::exists(latest)) {
        trainer.restore(nn::load_checkpoint<Real>(latest, model.layout()));
        resumed = true;
        if (!quiet) std::cerr << "resumed from step " << trainer.step_count() << "\n";
    }

    const std::string log_path = cfg.run_dir + "/train_log.csv";
    const bool fresh_log = !resumed || !fs::exists(log_path);
    std::ofstream log(log_path, fresh_log ? std::ios::binary
                                          : (std::ios::binary | std::ios::app));
    if (!log) throw io_error("cannot write training log: " + log_path);
    if (fresh_log) log << "step,total,term1,term2,term3,grad_norm,lr\n";

    auto save = [&](const std::string& path) {
        auto meta = cfg.echo();
        std::ostringstream os;
        os << std::hex << data_hash;
        meta["dataset.hash"] = os.str();
        nn::save_checkpoint(path, model.layout(), trainer.make_checkpoint(meta));
    };

    while (trainer.step_count() < cfg.train_steps) {
        TrainRecord rec = trainer.step();
        if (rec.step % cfg.log_every == 0 || rec.step == cfg.train_steps) {
            char row[256];
            std::snprintf(row, sizeof row, "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                          (long long)rec.step, rec.total, rec.term1, rec.term2, rec.term3,
                          rec.grad_norm, rec.lr);
            log << row;
            log.flush();
        }
        if (rec.step % cfg.checkpoint_every == 0 || rec.step == cfg.train_steps) save(latest);
        if (!quiet && rec.step % 100 == 0)
            std::cerr << "step " << rec.step << "/" << cfg.train_steps << " loss " << rec.total
                      << "\n";
    }
    save(cfg.run_dir + "/ckpt_final.bin");
    if (!quiet) {
        std::cerr << "training complete: " << trainer.step_count() << " steps";
        if (cfg.train_mode == TrainMode::adaptive)
            std::cerr << ", off-path token fraction " << trainer.stats().off_path_fraction();
        std::cerr << "\n";
    }
}

inline void cmd_train(const RunConfig& cfg, bool resume, bool quiet = false) {
    if (cfg.dataset_path.empty()) throw config_error("train needs paths.dataset");
    if (cfg.run_dir.empty()) throw config_error("train needs paths.run_dir");
    if (cfg.precision == "f64") run_train_impl<double>(cfg, resume, quiet);
    else run_train_impl<float>(cfg, resume, quiet);
}

// -------------------------------------------------------------------- eval

inline nn::BackboneConfig backbone_config_from_meta(
    const std::map<std::string, std::string>& meta, int vocab, int d) {
    auto get = [&](const std::string& key) {
        auto it = meta.find(key);
        if (it == meta.end()) throw io_error("checkpoint metadata missing " + key);
        return it->second;
    };
    nn::BackboneConfig c;
    c.variant = nn::variant_from_string(get("model.variant"));
    c.vocab_size = vocab;
    c.seq_len = d;
    c.hidden_dim = std::stoi(get("model.hidden_dim"));
    c.n_blocks = std::stoi(get("model.n_blocks"));
    c.n_heads = std::stoi(get("model.n_heads"));
    c.ffn_ratio = std::stoi(get("model.ffn_ratio"));
    c.dropout = std::stod(get("model.dropout"));
    c.head_hidden_dim = std::stoi(get("model.head_hidden_dim"));
    c.head_layers = std::stoi(get("model.head_layers"));
    c.validate();
    return c;
}

template <typename Real>
struct LoadedFamily {
    std::unique_ptr<nn::Backbone<Real>> model;
    std::vector<std::vector<Real>> params;
    std::vector<ModelFn> fns;

    static LoadedFamily load(const std::vector<std::string>& paths, const TaskSpec& task) {
        if (paths.empty()) throw config_error("no checkpoint supplied");
        LoadedFamily fam;
        auto meta = nn::peek_checkpoint_meta(paths[0]);
        fam.model = std::make_unique<nn::Backbone<Real>>(
            backbone_config_from_meta(meta, task.vocab().size, task.d()));
        fam.params.reserve(paths.size());
        for (const auto& p : paths)
            fam.params.push_back(nn::load_checkpoint<Real>(p, fam.model->layout()).params);
        for (const auto& pv : fam.params) fam.fns.push_back(make_model_fn(*fam.model, pv));
        return fam;
    }
};

inline bool method_uses_kernel(SolveMethod m) {
    return m == SolveMethod::adaptive || m == SolveMethod::ensemble;
}

template <typename Real>
std::vector<MetricsRecord> run_eval_impl(const RunConfig& cfg, const Dataset& data,
                                         const std::vector<std::string>& kernel_ckpts,
                                         const std::vector<std::string>& flow_ckpts,
                                         const std::vector<SolveMethod>& methods,
                                         const std::vector<int>& Ks, bool quiet) {
    std::unique_ptr<LoadedFamily<Real>> kernel_fam, flow_fam;
    std::vector<MetricsRecord> rows;
    for (SolveMethod m : methods) {
        const bool kernel = method_uses_kernel(m);
        auto& fam = kernel ? kernel_fam : flow_fam;
        const auto& paths = kernel ? kernel_ckpts : flow_ckpts;
        if (!fam) {
            if (paths.empty())
                throw config_error(std::string("method ") + to_string(m) +
                                   " needs a " + (kernel ? "--checkpoint" : "--flow-checkpoint"));
            fam = std::make_unique<LoadedFamily<Real>>(LoadedFamily<Real>::load(paths, data.task));
        }
        InferConfig ic = cfg.inference();
        ic.method = m;
        if (m == SolveMethod::ensemble) {
            for (int K : Ks) {
                ic.K = K;
                rows.push_back(evaluate(fam->fns, data, ic, cfg.seed).record);
                if (!quiet) std::cerr << metrics_csv_row(rows.back()) << "\n";
            }
        } else {
            rows.push_back(evaluate(fam->fns, data, ic, cfg.seed).record);
            if (!quiet) std::cerr << metrics_csv_row(rows.back()) << "\n";
        }
    }
    return rows;
}

inline void cmd_eval(const RunConfig& cfg, const std::vector<std::string>& kernel_ckpts,
                     const std::vector<std::string>& flow_ckpts,
                     const std::vector<SolveMethod>& methods, const std::vector<int>& Ks,
                     bool quiet = false) {
    if (cfg.dataset_path.empty()) throw config_error("eval needs paths.dataset");
    if (cfg.out_path.empty()) throw config_error("eval needs paths.out");
    Dataset data = read_dataset(cfg.dataset_path);
    RunConfig rc = cfg;
    rc.task = data.task;
    rc.validate();

    const auto& first = !kernel_ckpts.empty() ? kernel_ckpts[0]
                        : !flow_ckpts.empty() ? flow_ckpts[0]
                                              : throw config_error("eval needs a checkpoint");
    const int scalar_bytes = std::stoi(nn::peek_checkpoint_meta(first).at("__scalar_bytes"));

    std::vector<MetricsRecord> rows =
        scalar_bytes == 8
            ? run_eval_impl<double>(rc, data, kernel_ckpts, flow_ckpts, methods, Ks, quiet)
            : run_eval_impl<float>(rc, data, kernel_ckpts, flow_ckpts, methods, Ks, quiet);

    std::ofstream out(rc.out_path, std::ios::binary);
    if (!out) throw io_error("cannot write metrics: " + rc.out_path);
    out << metrics_csv_header() << "\n";
    for (const auto& r : rows) out << metrics_csv_row(r) << "\n";
}

// ------------------------------------------------------------------- trace

inline PuzzleInstance parse_literal_puzzle(const TaskSpec& task, const std::string& text) {
    PuzzleInstance inst;
    if (task.kind == TaskKind::sudoku) {
        const int d = task.d();
        if (int(text.size()) != d)
            throw input_error("sudoku literal must have " + std::to_string(d) + " characters");
        inst.x0.resize(d);
        inst.clues.assign(d, 0);
        for (int i = 0; i < d; ++i) {
            const char ch = text[i];
            if (ch == '0' || ch == '.') {
                inst.x0[i] = Token(task.n);
            } else if (ch >= '1' && ch <= char('0' + task.n)) {
                inst.x0[i] = Token(ch - '1');
                inst.clues[i] = 1;
            } else {
                throw input_error("bad sudoku literal character: " + std::string(1, ch));
            }
        }
        auto sols = sudoku_solve(inst.x0, task.n, 2);
        if (sols.empty()) throw input_error("literal puzzle has no solution");
        inst.x1 = sols[0];
        return inst;
    }
    // countdown literal: "a,b,c:target"
    auto colon = text.find(':');
    if (colon == std::string::npos)
        throw input_error("countdown literal must look like a,b,c:target");
    std::vector<int> given;
    std::istringstream nums(text.substr(0, colon));
    std::string item;
    while (std::getline(nums, item, ',')) given.push_back(std::stoi(item));
    const int target = std::stoi(text.substr(colon + 1));
    const CountdownTask& ct = task.countdown;
    if (int(given.size()) != ct.k)
        throw input_error("countdown literal needs " + std::to_string(ct.k) + " numbers");

    auto steps = countdown_solve(ct, given, target);
    if (!steps) throw input_error("literal countdown puzzle has no solution");
    std::vector<Token> expr = countdown_serialize(ct, *steps);
    while (int(expr.size()) < ct.expr_len()) expr.push_back(ct.tok_eos());

    const int d = ct.d();
    inst.x0.assign(d, ct.vocab().mask_id);
    inst.x1.assign(d, ct.vocab().mask_id);
    inst.clues.assign(d, 0);
    for (int i = 0; i < ct.k; ++i) inst.x0[i] = inst.x1[i] = Token(given[i]);
    inst.x0[ct.k] = inst.x1[ct.k] = Token(target);
    for (int i = 0; i <= ct.k; ++i) inst.clues[i] = 1;
    for (int i = 0; i < ct.expr_len(); ++i) inst.x1[ct.expr_begin() + i] = expr[i];
    return inst;
}

template <typename Real>
void run_trace_impl(const RunConfig& cfg, const PuzzleInstance& inst, const TaskSpec& task,
                    const std::string& out_path) {
    auto fam = LoadedFamily<Real>::load({cfg.checkpoint_path}, task);
    KernelConfig kc = cfg.inference().kernel;
    Rng rng(cfg.seed);
    SolveResult res = solve_adaptive(fam.fns[0], inst.x0, inst.clues, kc, rng, true);

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw io_error("cannot write trace: " + out_path);
    out << "step,position,token,confidence,tau,is_clue,is_correct\n";
    for (size_t s = 0; s < res.trace.size(); ++s) {
        const auto& step = res.trace[s];
        for (size_t i = 0; i < step.tokens.size(); ++i) {
            char row[160];
            std::snprintf(row, sizeof row, "%zu,%zu,%d,%.6f,%.6f,%d,%d\n", s + 1, i,
                          int(step.tokens[i]), step.confidence[i], step.tau,
                          int(inst.clues[i]), int(step.tokens[i] == inst.x1[i]));
            out << row;
        }
    }
}

inline void cmd_trace(const RunConfig& cfg, int instance_index, const std::string& literal,
                      const std::string& out_path) {
    if (cfg.checkpoint_path.empty()) throw config_error("trace needs paths.checkpoint");
    const int scalar_bytes =
        std::stoi(nn::peek_checkpoint_meta(cfg.checkpoint_path).at("__scalar_bytes"));

    TaskSpec task = cfg.task;
    PuzzleInstance inst;
    if (!literal.empty()) {
        inst = parse_literal_puzzle(task, literal);
    } else {
        if (cfg.dataset_path.empty())
            throw config_error("trace needs a dataset (or a literal puzzle)");
        Dataset data = read_dataset(cfg.dataset_path);
        task = data.task;
        if (instance_index < 0 || size_t(instance_index) >= data.size())
            throw input_error("unknown instance id: " + std::to_string(instance_index));
        inst = data.instances[instance_index];
    }
    if (scalar_bytes == 8) run_trace_impl<double>(cfg, inst, task, out_path);
    else run_trace_impl<float>(cfg, inst, task, out_path);
}

}  // namespace refinelab::cli
