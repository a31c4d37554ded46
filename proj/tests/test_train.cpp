#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "refinelab/config.hpp"
#include "refinelab/train.hpp"

using namespace refinelab;

namespace {

Dataset tiny_dataset(int count, uint64_t seed) {
    TaskSpec task = TaskSpec::mini_sudoku();
    return generate_dataset(task, seed, count, Split::train);
}

TrainConfig tiny_train_cfg(TrainMode mode, int64_t steps) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.steps = steps;
    cfg.batch_size = 8;
    cfg.seed = 5;
    cfg.schedule = Schedule::polynomial(2.0);
    cfg.optim.warmup_steps = 20;
    return cfg;
}

nn::BackboneConfig tiny_model_cfg(nn::Variant v) {
    auto cfg = nn::BackboneConfig::tiny(v, 4, 16);
    cfg.dropout = 0.05;
    return cfg;
}

}  // namespace

TEST_CASE("two identical runs produce identical loss traces over 100 steps") {
    Dataset data = tiny_dataset(64, 3);
    nn::Backbone<double> model(tiny_model_cfg(nn::Variant::adaptive));

    std::vector<double> trace_a, trace_b;
    {
        Trainer<double> t(model, tiny_train_cfg(TrainMode::adaptive, 100), data);
        for (int s = 0; s < 100; ++s) trace_a.push_back(t.step().total);
    }
    {
        Trainer<double> t(model, tiny_train_cfg(TrainMode::adaptive, 100), data);
        for (int s = 0; s < 100; ++s) trace_b.push_back(t.step().total);
    }
    REQUIRE(trace_a == trace_b);
}

TEST_CASE("mode and variant pairing is enforced") {
    Dataset data = tiny_dataset(16, 3);
    nn::Backbone<double> adaptive(tiny_model_cfg(nn::Variant::adaptive));
    nn::Backbone<double> baseline(tiny_model_cfg(nn::Variant::baseline));

    REQUIRE_THROWS_AS(
        (Trainer<double>(adaptive, tiny_train_cfg(TrainMode::baseline, 1), data)), config_error);
    REQUIRE_THROWS_AS(
        (Trainer<double>(baseline, tiny_train_cfg(TrainMode::adaptive, 1), data)), config_error);
}

TEST_CASE("baseline and gidd modes train the time-conditioned variant") {
    Dataset data = tiny_dataset(32, 4);
    nn::Backbone<double> model(tiny_model_cfg(nn::Variant::baseline));
    for (TrainMode mode : {TrainMode::baseline, TrainMode::gidd}) {
        Trainer<double> t(model, tiny_train_cfg(mode, 5), data);
        double last = 0;
        for (int s = 0; s < 5; ++s) {
            auto rec = t.step();
            REQUIRE(std::isfinite(rec.total));
            REQUIRE(rec.term2 == 0.0);
            REQUIRE(rec.term3 == 0.0);
            last = rec.total;
        }
        REQUIRE(last > 0.0);
    }
}

TEST_CASE("adaptive training states expose the model to its own errors") {
    Dataset data = tiny_dataset(64, 5);
    nn::Backbone<double> model(tiny_model_cfg(nn::Variant::adaptive));
    Trainer<double> t(model, tiny_train_cfg(TrainMode::adaptive, 30), data);
    for (int s = 0; s < 30; ++s) t.step();
    REQUIRE(t.stats().off_path_fraction() > 0.0);
    REQUIRE(t.stats().off_path_fraction() < 1.0);
}

TEST_CASE("rollout mode uses the configured probability of deeper rollouts") {
    Dataset data = tiny_dataset(64, 6);
    nn::Backbone<double> model(tiny_model_cfg(nn::Variant::adaptive));
    auto cfg = tiny_train_cfg(TrainMode::adaptive, 20);
    cfg.batch_size = 500;
    cfg.loss.on_policy = OnPolicyMode::rollout;
    cfg.loss.rollout_len = 3;
    cfg.loss.rollout_prob = 0.1;

    Trainer<double> t(model, cfg, data);
    for (int s = 0; s < 20; ++s) t.step();
    const auto& st = t.stats();
    REQUIRE(st.total_states == 10000);
    const double p_hat = st.rollout_fraction();
    const double sigma3 = 3.0 * std::sqrt(0.1 * 0.9 / double(st.total_states));
    REQUIRE(std::fabs(p_hat - 0.1) <= sigma3);
}

TEST_CASE("interrupt and resume reproduces the uninterrupted run exactly") {
    Dataset data = tiny_dataset(48, 7);
    nn::Backbone<double> model(tiny_model_cfg(nn::Variant::adaptive));
    auto cfg = tiny_train_cfg(TrainMode::adaptive, 60);

    std::vector<TrainRecord> full;
    Trainer<double> a(model, cfg, data);
    for (int s = 0; s < 60; ++s) full.push_back(a.step());

    Trainer<double> b1(model, cfg, data);
    for (int s = 0; s < 30; ++s) b1.step();
    auto ckpt = b1.make_checkpoint({});

    Trainer<double> b2(model, cfg, data);
    b2.restore(ckpt);
    REQUIRE(b2.step_count() == 30);
    for (int s = 30; s < 60; ++s) {
        auto rec = b2.step();
        REQUIRE(rec.total == full[s].total);
        REQUIRE(rec.grad_norm == full[s].grad_norm);
    }
    REQUIRE(b2.params() == a.params());
}

TEST_CASE("training on a few hundred steps actually reduces the loss") {
    Dataset data = tiny_dataset(128, 8);

    auto windowed = [&](nn::Variant v, TrainMode mode, int steps) {
        auto model_cfg = tiny_model_cfg(v);
        model_cfg.hidden_dim = 32;
        model_cfg.n_heads = 2;
        nn::Backbone<double> model(model_cfg);
        auto cfg = tiny_train_cfg(mode, steps);
        cfg.optim.lr = 1e-3;
        Trainer<double> t(model, cfg, data);
        double head = 0, tail = 0;
        for (int s = 0; s < steps; ++s) {
            const double total = t.step().total;
            if (s < 30) head += total / 30.0;
            if (s >= steps - 30) tail += total / 30.0;
        }
        return std::pair{head, tail};
    };

    auto [b_head, b_tail] = windowed(nn::Variant::baseline, TrainMode::baseline, 250);
    REQUIRE(b_tail < 0.6 * b_head);

    auto [a_head, a_tail] = windowed(nn::Variant::adaptive, TrainMode::adaptive, 400);
    REQUIRE(a_tail < 0.9 * a_head);
}
