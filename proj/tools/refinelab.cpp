#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "refinelab/cli.hpp"
#include "refinelab/mem.hpp"

using namespace refinelab;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string seed_flag;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "config file of dotted key = value lines");
    cmd->add_option("--set", opts.sets, "override a config key, e.g. --set train.steps=500");
    cmd->add_option("--seed", opts.seed_flag, "override the config seed");
}

RunConfig build_config(const CommonOpts& opts, RunConfig base = RunConfig{}) {
    RunConfig cfg = opts.config_path.empty() ? base : load_config_file(opts.config_path, base);
    for (const std::string& s : opts.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw config_error("--set expects key=value, got " + s);
        apply_config_kv(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!opts.seed_flag.empty()) apply_config_kv(cfg, "seed", opts.seed_flag);
    if (const char* env = std::getenv("REFINE_LAB_SEED"); env && *env)
        apply_config_kv(cfg, "seed", env);  // environment wins over file and flags
    return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"self-correcting discrete refinement lab: datasets, training, evaluation"};
    app.require_subcommand(1);

    // gen-data
    CommonOpts gen_opts;
    std::string gen_task, gen_split = "train", gen_out;
    size_t gen_count = 1000;
    auto* gen = app.add_subcommand("gen-data", "generate a puzzle dataset file");
    add_common(gen, gen_opts);
    gen->add_option("--task", gen_task, "mini-sudoku | sudoku | countdown");
    gen->add_option("--count", gen_count, "number of instances")->required();
    gen->add_option("--split", gen_split, "train | val | test | all");
    gen->add_option("--out", gen_out, "output dataset path")->required();
    gen->add_option("--jobs", [&gen_opts](const auto& vals) {
        gen_opts.sets.push_back("infer.jobs=" + vals[0]);
        return true;
    }, "worker count");

    // train
    CommonOpts train_opts;
    std::string train_data, train_dir;
    bool train_resume = false;
    auto* train = app.add_subcommand("train", "train a model and write a run directory");
    add_common(train, train_opts);
    train->add_option("--data", train_data, "training dataset path");
    train->add_option("--out", train_dir, "run directory");
    train->add_flag("--resume", train_resume, "continue from the latest checkpoint");

    // eval
    CommonOpts eval_opts;
    std::string eval_data, eval_out, eval_methods, eval_Ks = "1";
    std::vector<std::string> eval_ckpts, eval_flow_ckpts;
    auto* eval = app.add_subcommand("eval", "evaluate checkpoints and write a metrics CSV");
    add_common(eval, eval_opts);
    eval->add_option("--data", eval_data, "evaluation dataset path");
    eval->add_option("--out", eval_out, "metrics CSV path");
    eval->add_option("--checkpoint", eval_ckpts,
                     "kernel-model checkpoint(s); repeat for multi-model ensembles");
    eval->add_option("--flow-checkpoint", eval_flow_ckpts,
                     "flow-matching checkpoint for euler/topk/remdm methods");
    eval->add_option("--methods", eval_methods,
                     "comma list: adaptive,ensemble,euler,topk,topk_margin,remdm,gidd-euler");
    eval->add_option("--K", eval_Ks, "comma list of ensemble sizes, e.g. 1,3,5,10");
    eval->add_option("--jobs", [&eval_opts](const auto& vals) {
        eval_opts.sets.push_back("infer.jobs=" + vals[0]);
        return true;
    }, "worker count");

    // trace
    CommonOpts trace_opts;
    std::string trace_ckpt, trace_data, trace_puzzle, trace_out = "trace.csv";
    int trace_instance = -1;
    auto* trace = app.add_subcommand("trace", "dump a per-step refinement trace as CSV");
    add_common(trace, trace_opts);
    trace->add_option("--checkpoint", trace_ckpt, "kernel-model checkpoint")->required();
    trace->add_option("--data", trace_data, "dataset supplying the instance");
    trace->add_option("--instance", trace_instance, "0-based instance id in the dataset");
    trace->add_option("--puzzle", trace_puzzle,
                      "literal puzzle: sudoku digit string (0/.=blank) or a,b,c:target");
    trace->add_option("--out", trace_out, "trace CSV path");

    try {
        app.parse(argc, argv);

        if (gen->parsed()) {
            RunConfig cfg = build_config(gen_opts);
            if (!gen_task.empty()) apply_config_kv(cfg, "task.kind", gen_task);
            cli::cmd_gen_data(cfg, gen_count, split_from_string(gen_split), gen_out);
        } else if (train->parsed()) {
            RunConfig cfg = build_config(train_opts);
            if (!train_data.empty()) cfg.dataset_path = train_data;
            if (!train_dir.empty()) cfg.run_dir = train_dir;
            cli::cmd_train(cfg, train_resume);
        } else if (eval->parsed()) {
            RunConfig cfg = build_config(eval_opts);
            if (!eval_data.empty()) cfg.dataset_path = eval_data;
            if (!eval_out.empty()) cfg.out_path = eval_out;
            std::vector<SolveMethod> methods;
            if (eval_methods.empty()) {
                methods.push_back(cfg.infer_method);
            } else {
                for (const auto& m : split_csv(eval_methods))
                    methods.push_back(solve_method_from_string(m));
            }
            std::vector<int> Ks;
            for (const auto& k : split_csv(eval_Ks)) Ks.push_back(std::stoi(k));
            if (Ks.empty()) Ks.push_back(cfg.infer_K);
            cli::cmd_eval(cfg, eval_ckpts, eval_flow_ckpts, methods, Ks);
        } else if (trace->parsed()) {
            RunConfig cfg = build_config(trace_opts);
            cfg.checkpoint_path = trace_ckpt;
            if (!trace_data.empty()) cfg.dataset_path = trace_data;
            cli::cmd_trace(cfg, trace_instance, trace_puzzle, trace_out);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const input_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
