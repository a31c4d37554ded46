#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "refinelab/nn/adamw.hpp"
#include "refinelab/nn/backbone.hpp"
#include "refinelab/nn/checkpoint.hpp"

using namespace refinelab;
using namespace refinelab::nn;

namespace {

template <typename Real>
Batch random_batch(const BackboneConfig& cfg, int B, uint64_t seed, bool with_t) {
    Batch b;
    b.B = B;
    b.d = cfg.seq_len;
    b.has_t = with_t;
    Rng rng(seed);
    b.tokens.resize(size_t(B) * cfg.seq_len);
    b.clues.resize(size_t(B) * cfg.seq_len);
    for (int s = 0; s < B; ++s)
        for (int i = 0; i < cfg.seq_len; ++i) {
            const size_t pos = size_t(s) * cfg.seq_len + i;
            b.tokens[pos] = Token(rng.below_int(cfg.vocab_size + 1));
            b.clues[pos] = i > 0 && rng.bernoulli(0.3);  // position 0 never a clue
        }
    if (with_t) {
        b.t.resize(B);
        for (int s = 0; s < B; ++s) b.t[s] = rng.uniform01();
    }
    return b;
}

}  // namespace

TEST_CASE("forward produces the contracted shapes and ranges") {
    auto cfg = BackboneConfig::tiny(Variant::adaptive, 5, 8);
    Backbone<double> model(cfg);
    auto params = model.init_params(1);
    auto batch = random_batch<double>(cfg, 3, 2, false);

    Activations<double> acts;
    model.forward(params, batch, false, nullptr, acts);
    REQUIRE(acts.logits.size() == size_t(3 * 8 * 5));
    REQUIRE(acts.conf.size() == size_t(3 * 8));
    REQUIRE(acts.tau.size() == 3);
    for (double c : acts.conf) {
        REQUIRE(c > 0.0);
        REQUIRE(c < 1.0);
    }
    for (double t : acts.tau) {
        REQUIRE(t > 0.0);
        REQUIRE(t < 1.0);
    }
    for (double l : acts.logits) {
        REQUIRE(l >= -50.0);
        REQUIRE(l <= 50.0);
    }
}

TEST_CASE("softmax of the denoiser logits normalizes per position") {
    auto cfg = BackboneConfig::tiny(Variant::adaptive, 5, 8);
    cfg.hidden_dim = 16;
    cfg.n_blocks = 2;
    Backbone<double> model(cfg);
    auto params = model.init_params(3);
    auto batch = random_batch<double>(cfg, 4, 5, false);
    Activations<double> acts;
    model.forward(params, batch, false, nullptr, acts);
    for (int r = 0; r < 4 * 8; ++r) {
        std::vector<double> p(5);
        softmax_rows(acts.logits.data() + size_t(r) * 5, p.data(), 1, 5);
        double sum = 0;
        for (double v : p) sum += v;
        REQUIRE(std::fabs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("forward is deterministic with dropout disabled") {
    for (auto variant : {Variant::adaptive, Variant::baseline}) {
        auto cfg = BackboneConfig::tiny(variant, 4, 6);
        Backbone<float> model(cfg);
        auto params = model.init_params(7);
        auto batch = random_batch<float>(cfg, 2, 11, variant == Variant::baseline);

        Activations<float> a1, a2;
        model.forward(params, batch, false, nullptr, a1);
        model.forward(params, batch, false, nullptr, a2);
        REQUIRE(a1.logits == a2.logits);
        REQUIRE(a1.conf == a2.conf);
        REQUIRE(a1.tau == a2.tau);
    }
}

TEST_CASE("baseline variant demands a time input, shapes are checked") {
    auto cfg = BackboneConfig::tiny(Variant::baseline, 4, 6);
    Backbone<double> model(cfg);
    auto params = model.init_params(1);
    auto batch = random_batch<double>(cfg, 2, 1, false);
    Activations<double> acts;
    REQUIRE_THROWS_AS(model.forward(params, batch, false, nullptr, acts), input_error);

    auto bad = random_batch<double>(cfg, 2, 1, true);
    bad.tokens.pop_back();
    REQUIRE_THROWS_AS(model.forward(params, bad, false, nullptr, acts), input_error);

    auto wrong_len = bad;
    wrong_len.tokens.assign(size_t(2) * 7, 0);
    wrong_len.clues.assign(size_t(2) * 7, 0);
    wrong_len.d = 7;
    REQUIRE_THROWS_AS(model.forward(params, wrong_len, false, nullptr, acts), input_error);
}

TEST_CASE("adaptive variant accepts either a time value or the null embedding") {
    auto cfg = BackboneConfig::tiny(Variant::adaptive, 4, 6);
    Backbone<double> model(cfg);
    auto params = model.init_params(5);
    // give the null embedding and time mlp distinguishable weights
    Rng rng(9);
    for (auto& p : params) p += 0.05 * rng.normal();

    auto with_t = random_batch<double>(cfg, 2, 3, true);
    auto no_t = with_t;
    no_t.has_t = false;
    no_t.t.clear();

    Activations<double> a1, a2;
    model.forward(params, with_t, false, nullptr, a1);
    model.forward(params, no_t, false, nullptr, a2);
    REQUIRE(a1.logits != a2.logits);  // the two conditioning paths differ
}

TEST_CASE("dropout is active only in training mode and is seed-deterministic") {
    auto cfg = BackboneConfig::tiny(Variant::adaptive, 4, 6);
    cfg.dropout = 0.3;
    Backbone<double> model(cfg);
    auto params = model.init_params(2);
    auto batch = random_batch<double>(cfg, 2, 4, false);

    Activations<double> train1, train2, eval1;
    Rng r1(42), r2(42);
    model.forward(params, batch, true, &r1, train1);
    model.forward(params, batch, true, &r2, train2);
    model.forward(params, batch, false, nullptr, eval1);
    REQUIRE(train1.logits == train2.logits);
    REQUIRE(train1.logits != eval1.logits);
}

TEST_CASE("optimizer: warmup, clipping and fixed points") {
    AdamWConfig cfg;
    cfg.lr = 1.0;
    cfg.warmup_steps = 1000;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg, 3);
    std::vector<double> params = {1.0, 2.0, 3.0};

    // zero grads, zero decay: parameters unchanged
    std::vector<double> zeros(3, 0.0);
    auto s0 = opt.step(params, zeros);
    REQUIRE(params == std::vector<double>{1.0, 2.0, 3.0});
    REQUIRE(s0.lr == Catch::Approx(1.0 / 1000.0));

    // global norm 10 with clip 1.0 scales gradients by 0.1
    AdamW<double> opt2(cfg, 2);
    std::vector<double> p2 = {0.0, 0.0};
    std::vector<double> g2 = {6.0, 8.0};
    auto s2 = opt2.step(p2, g2);
    REQUIRE(s2.grad_norm == Catch::Approx(10.0));
    REQUIRE(s2.clip_scale == Catch::Approx(0.1));

    // warmup multiplier at step 500 of 1000
    AdamW<double> opt3(cfg, 1);
    std::vector<double> p3 = {0.0}, g3 = {0.0};
    for (int s = 0; s < 500; ++s) opt3.step(p3, g3);
    std::vector<double> g4 = {1e-12};
    REQUIRE(opt3.step(p3, g4).lr == Catch::Approx(0.501));
}

TEST_CASE("checkpoint round-trip is byte-identical and validated") {
    auto cfg = BackboneConfig::tiny(Variant::adaptive, 4, 6);
    Backbone<double> model(cfg);
    Checkpoint<double> ckpt;
    ckpt.meta["model.variant"] = "adaptive";
    ckpt.meta["train.step"] = "17";
    ckpt.params = model.init_params(9);
    ckpt.has_opt = true;
    ckpt.opt_step = 17;
    ckpt.m.assign(model.n_params(), 0.25);
    ckpt.v.assign(model.n_params(), 0.5);

    const std::string p1 = "refinelab_test_ckpt_a.bin";
    const std::string p2 = "refinelab_test_ckpt_b.bin";
    save_checkpoint(p1, model.layout(), ckpt);
    auto back = load_checkpoint<double>(p1, model.layout());
    REQUIRE(back.params == ckpt.params);
    REQUIRE(back.meta == ckpt.meta);
    REQUIRE(back.opt_step == 17);
    save_checkpoint(p2, model.layout(), back);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(b1 == b2);

    // shape mismatch: a differently sized model rejects the file
    auto cfg2 = cfg;
    cfg2.hidden_dim = 32;
    Backbone<double> other(cfg2);
    REQUIRE_THROWS_AS(load_checkpoint<double>(p1, other.layout()), io_error);

    // checksum corruption
    {
        std::fstream f(p1, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(64);
        char junk = 0x5a;
        f.write(&junk, 1);
    }
    REQUIRE_THROWS_AS(load_checkpoint<double>(p1, model.layout()), io_error);

    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("full-scale preset builds and runs a forward pass") {
    // hidden 512, 8 blocks, 8 heads, head MLPs 256x3, d=81, ten digits
    auto cfg = BackboneConfig::paper(Variant::adaptive, 9, 81);
    REQUIRE(cfg.hidden_dim == 512);
    REQUIRE(cfg.n_blocks == 8);
    REQUIRE(cfg.head_hidden_dim == 256);
    REQUIRE(cfg.head_layers == 3);
    Backbone<float> model(cfg);
    auto params = model.init_params(1);
    auto batch = random_batch<float>(cfg, 1, 2, false);
    Activations<float> acts;
    model.forward(params, batch, false, nullptr, acts);
    REQUIRE(acts.logits.size() == size_t(81 * 9));
    REQUIRE(acts.conf.size() == 81);
}

TEST_CASE("float and double instantiations share the layout") {
    auto cfg = BackboneConfig::desk(Variant::adaptive, 4, 16);
    Backbone<float> mf(cfg);
    Backbone<double> md(cfg);
    REQUIRE(mf.n_params() == md.n_params());
    REQUIRE(mf.layout().entries.size() == md.layout().entries.size());
}
