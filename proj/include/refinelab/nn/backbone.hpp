#pragma once

#include <cassert>
#include <cmath>
#include <string>
#include <vector>

#include "refinelab/nn/ops.hpp"
#include "refinelab/nn/tensor.hpp"
#include "refinelab/rng.hpp"
#include "refinelab/types.hpp"

namespace refinelab::nn {

enum class Variant { baseline, adaptive };

inline const char* to_string(Variant v) {
    return v == Variant::baseline ? "baseline" : "adaptive";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "baseline") return Variant::baseline;
    if (s == "adaptive") return Variant::adaptive;
    throw config_error("unknown model variant: " + s);
}

// Transformer encoder with rotary position embeddings and token + clue
// embeddings. The baseline variant conditions on time through adaptive layer
// normalization (DiT style); the adaptive variant uses an additive time
// embedding (or a learned null vector when no time is supplied) and carries
// two extra heads: a per-position confidence and a scalar progress estimate.
struct BackboneConfig {
    Variant variant = Variant::adaptive;
    int vocab_size = 4;  // non-mask tokens N; embeddings cover N+1 ids
    int seq_len = 16;
    int hidden_dim = 128;
    int n_blocks = 4;
    int n_heads = 4;
    int ffn_ratio = 4;
    double dropout = 0.05;
    int head_hidden_dim = 64;
    int head_layers = 2;

    int ffn_dim() const { return hidden_dim * ffn_ratio; }
    int head_dim() const { return hidden_dim / n_heads; }

    void validate() const {
        if (hidden_dim % n_heads != 0)
            throw config_error("hidden_dim must be divisible by n_heads");
        if (head_dim() % 2 != 0) throw config_error("head dim must be even for rotary embedding");
        if (hidden_dim % 2 != 0) throw config_error("hidden_dim must be even");
        if (vocab_size < 2 || seq_len < 1 || n_blocks < 1 || head_layers < 1)
            throw config_error("degenerate backbone config");
        if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout outside [0,1)");
    }

    // hidden 128, 4 blocks, 4 heads: the desk-scale preset
    static BackboneConfig desk(Variant v, int vocab, int d) {
        BackboneConfig c;
        c.variant = v;
        c.vocab_size = vocab;
        c.seq_len = d;
        return c;
    }

    // hidden 512, 8 blocks, 8 heads, head MLPs 256x3: the full-scale preset
    static BackboneConfig paper(Variant v, int vocab, int d) {
        BackboneConfig c;
        c.variant = v;
        c.vocab_size = vocab;
        c.seq_len = d;
        c.hidden_dim = 512;
        c.n_blocks = 8;
        c.n_heads = 8;
        c.head_hidden_dim = 256;
        c.head_layers = 3;
        return c;
    }

    static BackboneConfig tiny(Variant v, int vocab, int d) {
        BackboneConfig c;
        c.variant = v;
        c.vocab_size = vocab;
        c.seq_len = d;
        c.hidden_dim = 16;
        c.n_blocks = 2;
        c.n_heads = 2;
        c.head_hidden_dim = 8;
        c.head_layers = 2;
        c.dropout = 0.0;
        return c;
    }
};

struct Batch {
    int B = 0;
    int d = 0;
    std::vector<Token> tokens;   // B*d
    std::vector<uint8_t> clues;  // B*d
    std::vector<double> t;       // B entries when has_t
    bool has_t = false;
};

namespace detail {

struct MlpSpec {
    std::vector<size_t> w_off, b_off;
    std::vector<int> dims;  // dims[0] = input, dims.back() = output

    int n_layers() const { return int(w_off.size()); }
};

inline MlpSpec register_mlp(ParamLayout& layout, const std::string& prefix, int in, int hidden,
                            int layers, int out) {
    MlpSpec spec;
    spec.dims.push_back(in);
    for (int l = 0; l < layers - 1; ++l) spec.dims.push_back(hidden);
    spec.dims.push_back(out);
    for (int l = 0; l < layers; ++l) {
        spec.w_off.push_back(layout.add(prefix + std::to_string(l) + "_w",
                                        {spec.dims[l], spec.dims[l + 1]}));
        spec.b_off.push_back(layout.add(prefix + std::to_string(l) + "_b", {spec.dims[l + 1]}));
    }
    return spec;
}

}  // namespace detail

template <typename Real>
struct MlpActs {
    std::vector<std::vector<Real>> pre;  // per layer, rows x dims[l+1]
    std::vector<std::vector<Real>> act;  // post-gelu for non-final layers

    void resize(const detail::MlpSpec& spec, int rows) {
        pre.assign(spec.n_layers(), {});
        act.assign(spec.n_layers(), {});
        for (int l = 0; l < spec.n_layers(); ++l) {
            pre[l].assign(size_t(rows) * spec.dims[l + 1], Real(0));
            if (l + 1 < spec.n_layers()) act[l].assign(size_t(rows) * spec.dims[l + 1], Real(0));
        }
    }
};

template <typename Real>
struct BlockActs {
    std::vector<Real> h_in, x1, x1m;
    std::vector<Real> ln1_mean, ln1_rstd;
    std::vector<Real> q, k, v;        // post-rope q/k
    std::vector<Real> q_pre, k_pre;   // pre-rope
    std::vector<Real> att;            // B*H*d*d probabilities
    std::vector<Real> ctx;
    std::vector<Real> attn_out;       // post-dropout projection
    std::vector<Real> attn_mask;      // dropout mask (train only)
    std::vector<Real> h_mid, x2, x2m;
    std::vector<Real> ln2_mean, ln2_rstd;
    std::vector<Real> ffn_pre, ffn_act;
    std::vector<Real> ffn_out;        // post-dropout
    std::vector<Real> ffn_mask;
    std::vector<Real> mod;            // B x 6D (baseline)
};

template <typename Real>
struct Activations {
    int B = 0;
    bool train = false;

    std::vector<Real> feat;         // B x D sinusoidal features
    std::vector<Real> time_pre;     // B x D pre-silu of time mlp layer 1
    std::vector<Real> time_hidden;  // B x D
    std::vector<Real> tvec;         // B x D final time vector
    std::vector<Real> silu_tvec;    // B x D (baseline modulation input)
    bool used_time_mlp = false;
    bool used_time_null = false;

    std::vector<BlockActs<Real>> blocks;

    std::vector<Real> h_final;  // input to final LN
    std::vector<Real> lnf_mean, lnf_rstd;
    std::vector<Real> xf;        // post final LN
    std::vector<Real> xfm;       // post final modulation (baseline)
    std::vector<Real> modf;      // B x 2D
    std::vector<Real> logits_raw, logits;  // B*d*N

    // adaptive heads
    std::vector<Real> tau_scores, tau_alpha;  // B*d
    std::vector<Real> tau_pooled;             // B*D
    MlpActs<Real> tau_mlp;
    std::vector<Real> tau;  // B

    std::vector<Real> conf_scores, conf_alpha;  // B*d
    std::vector<Real> conf_ctx;                 // B*D
    std::vector<Real> conf_in;                  // B*d x 2D
    MlpActs<Real> conf_mlp;
    std::vector<Real> conf;  // B*d
};

// The network: maps a token sequence (plus clue mask and optional time) to
// per-position vocabulary logits, per-position confidences and a scalar
// progress estimate. Parameters live in one flat array laid out by `layout`.
template <typename Real>
class Backbone {
public:
    explicit Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        build_layout();
        build_rope_tables();
    }

    const BackboneConfig& config() const { return cfg_; }
    const ParamLayout& layout() const { return layout_; }
    size_t n_params() const { return layout_.total; }

    std::vector<Real> init_params(uint64_t seed) const {
        Rng rng(seed);
        std::vector<Real> p(layout_.total, Real(0));
        const double base_std = 0.02;
        const double resid_std = base_std / std::sqrt(2.0 * cfg_.n_blocks);
        for (const auto& e : layout_.entries) {
            Real* dst = p.data() + e.offset;
            const bool is_bias = e.name.ends_with("_b") || e.name.ends_with("_bias");
            const bool is_ln_gamma = e.name.find("ln") != std::string::npos &&
                                     e.name.ends_with("_g");
            const bool is_mod = e.name.find("mod") != std::string::npos;
            const bool is_resid_proj =
                e.name.ends_with(".wo") || e.name.ends_with(".ffn_w2");
            if (is_ln_gamma) {
                for (size_t i = 0; i < e.size; ++i) dst[i] = Real(1);
            } else if (is_bias || is_mod || e.name == "time_null") {
                // zeros; adaLN modulation starts as identity (zero gates)
            } else if (e.name.find("ln") != std::string::npos) {
                // ln beta: zeros
            } else {
                const double std = is_resid_proj ? resid_std : base_std;
                for (size_t i = 0; i < e.size; ++i) dst[i] = Real(rng.normal() * std);
            }
        }
        return p;
    }

    void check_batch(const Batch& batch) const {
        if (batch.B < 1) throw input_error("empty batch");
        if (batch.d != cfg_.seq_len)
            throw input_error("sequence length mismatch: got " + std::to_string(batch.d) +
                              ", model expects " + std::to_string(cfg_.seq_len));
        if (int(batch.tokens.size()) != batch.B * batch.d ||
            int(batch.clues.size()) != batch.B * batch.d)
            throw input_error("batch buffer size mismatch");
        for (Token t : batch.tokens)
            if (t < 0 || t > Token(cfg_.vocab_size))
                throw input_error("token id out of range: " + std::to_string(t));
        if (batch.has_t && int(batch.t.size()) != batch.B)
            throw input_error("time vector size mismatch");
        if (cfg_.variant == Variant::baseline && !batch.has_t)
            throw input_error("baseline variant requires a time input");
    }

    void forward(const std::vector<Real>& params, const Batch& batch, bool train,
                 Rng* dropout_rng, Activations<Real>& acts) const {
        check_batch(batch);
        if (params.size() != layout_.total) throw input_error("parameter vector size mismatch");
        const int B = batch.B, d = cfg_.seq_len, D = cfg_.hidden_dim, N = cfg_.vocab_size;
        const int rows = B * d;
        const bool adaln = cfg_.variant == Variant::baseline;
        const bool drop = train && cfg_.dropout > 0.0;
        if (drop && !dropout_rng) throw input_error("dropout requires an rng in training mode");

        acts.B = B;
        acts.train = drop;
        acts.blocks.resize(cfg_.n_blocks);

        // ---- time vector ----
        acts.tvec.assign(size_t(B) * D, Real(0));
        acts.used_time_mlp = false;
        acts.used_time_null = false;
        if (batch.has_t) {
            acts.used_time_mlp = true;
            acts.feat.assign(size_t(B) * D, Real(0));
            for (int b = 0; b < B; ++b) time_features(batch.t[b], acts.feat.data() + size_t(b) * D);
            acts.time_pre.assign(size_t(B) * D, Real(0));
            linear_forward(acts.feat.data(), params.data() + off_.time_w1,
                           params.data() + off_.time_b1, acts.time_pre.data(), B, D, D);
            acts.time_hidden.assign(size_t(B) * D, Real(0));
            for (size_t i = 0; i < acts.time_pre.size(); ++i)
                acts.time_hidden[i] = silu_scalar(acts.time_pre[i]);
            linear_forward(acts.time_hidden.data(), params.data() + off_.time_w2,
                           params.data() + off_.time_b2, acts.tvec.data(), B, D, D);
        } else if (cfg_.variant == Variant::adaptive) {
            acts.used_time_null = true;
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < D; ++c)
                    acts.tvec[size_t(b) * D + c] = params[off_.time_null + c];
        }
        if (adaln) {
            acts.silu_tvec.assign(size_t(B) * D, Real(0));
            for (size_t i = 0; i < acts.tvec.size(); ++i)
                acts.silu_tvec[i] = silu_scalar(acts.tvec[i]);
        }

        // ---- embeddings ----
        std::vector<Real> h(size_t(rows) * D);
        for (int r = 0; r < rows; ++r) {
            const Real* te = params.data() + off_.tok_emb + size_t(batch.tokens[r]) * D;
            const Real* ce = params.data() + off_.clue_emb + size_t(batch.clues[r] ? 1 : 0) * D;
            Real* hr = h.data() + size_t(r) * D;
            for (int c = 0; c < D; ++c) hr[c] = te[c] + ce[c];
        }
        if (cfg_.variant == Variant::adaptive) {
            for (int b = 0; b < B; ++b) {
                const Real* tv = acts.tvec.data() + size_t(b) * D;
                for (int i = 0; i < d; ++i) {
                    Real* hr = h.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) hr[c] += tv[c];
                }
            }
        }

        // ---- transformer blocks ----
        for (int blk = 0; blk < cfg_.n_blocks; ++blk)
            block_forward(params, batch, blk, h, drop, dropout_rng, acts.blocks[blk], acts);

        // ---- final LN (+ modulation) and heads ----
        acts.h_final = h;
        acts.lnf_mean.assign(rows, Real(0));
        acts.lnf_rstd.assign(rows, Real(0));
        acts.xf.assign(size_t(rows) * D, Real(0));
        layernorm_forward(h.data(), params.data() + off_.lnf_g, params.data() + off_.lnf_b,
                          acts.xf.data(), acts.lnf_mean.data(), acts.lnf_rstd.data(), rows, D);
        const Real* rep = acts.xf.data();
        if (adaln) {
            acts.modf.assign(size_t(B) * 2 * D, Real(0));
            linear_forward(acts.silu_tvec.data(), params.data() + off_.modf_w,
                           params.data() + off_.modf_b, acts.modf.data(), B, D, 2 * D);
            acts.xfm.assign(size_t(rows) * D, Real(0));
            for (int b = 0; b < B; ++b) {
                const Real* shift = acts.modf.data() + size_t(b) * 2 * D;
                const Real* scale = shift + D;
                for (int i = 0; i < d; ++i) {
                    const Real* src = acts.xf.data() + (size_t(b) * d + i) * D;
                    Real* dst = acts.xfm.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) dst[c] = src[c] * (Real(1) + scale[c]) + shift[c];
                }
            }
            rep = acts.xfm.data();
        }

        acts.logits_raw.assign(size_t(rows) * N, Real(0));
        linear_forward(rep, params.data() + off_.logit_w, params.data() + off_.logit_b,
                       acts.logits_raw.data(), rows, D, N);
        acts.logits = acts.logits_raw;
        for (Real& v : acts.logits) v = std::min(Real(50), std::max(Real(-50), v));

        if (cfg_.variant == Variant::adaptive) {
            heads_forward(params, batch, rep, acts);
        } else {
            acts.conf.assign(rows, Real(1));
            acts.tau.assign(B, Real(0));
        }
    }

    // Gradients of a scalar loss with respect to all parameters, given the
    // loss gradients at the three outputs (clipped logits, sigmoid
    // confidence, sigmoid tau). Accumulates into `grads`.
    void backward(const std::vector<Real>& params, const Batch& batch,
                  const Activations<Real>& acts, const Real* dlogits, const Real* dconf,
                  const Real* dtau, std::vector<Real>& grads) const {
        if (grads.size() != layout_.total) throw input_error("gradient vector size mismatch");
        const int B = batch.B, d = cfg_.seq_len, D = cfg_.hidden_dim, N = cfg_.vocab_size;
        const int rows = B * d;
        const bool adaln = cfg_.variant == Variant::baseline;

        // clip pass-through
        std::vector<Real> dlog(size_t(rows) * N, Real(0));
        if (dlogits)
            for (size_t i = 0; i < dlog.size(); ++i)
                dlog[i] = (std::fabs(double(acts.logits_raw[i])) < 50.0) ? dlogits[i] : Real(0);

        const Real* rep = adaln ? acts.xfm.data() : acts.xf.data();
        std::vector<Real> drep(size_t(rows) * D, Real(0));
        linear_backward(rep, params.data() + off_.logit_w, dlog.data(), drep.data(),
                        grads.data() + off_.logit_w, grads.data() + off_.logit_b, rows, D, N);

        std::vector<Real> dsilu_tvec(size_t(B) * D, Real(0));
        std::vector<Real> dtvec(size_t(B) * D, Real(0));

        if (cfg_.variant == Variant::adaptive && (dconf || dtau))
            heads_backward(params, batch, acts, dconf, dtau, drep, grads);

        // final modulation
        std::vector<Real> dxf;
        if (adaln) {
            dxf.assign(size_t(rows) * D, Real(0));
            std::vector<Real> dmodf(size_t(B) * 2 * D, Real(0));
            for (int b = 0; b < B; ++b) {
                const Real* shift = acts.modf.data() + size_t(b) * 2 * D;
                const Real* scale = shift + D;
                Real* dshift = dmodf.data() + size_t(b) * 2 * D;
                Real* dscale = dshift + D;
                for (int i = 0; i < d; ++i) {
                    const Real* xr = acts.xf.data() + (size_t(b) * d + i) * D;
                    const Real* dr = drep.data() + (size_t(b) * d + i) * D;
                    Real* dx = dxf.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) {
                        dx[c] = dr[c] * (Real(1) + scale[c]);
                        dscale[c] += dr[c] * xr[c];
                        dshift[c] += dr[c];
                    }
                }
            }
            linear_backward(acts.silu_tvec.data(), params.data() + off_.modf_w, dmodf.data(),
                            dsilu_tvec.data(), grads.data() + off_.modf_w,
                            grads.data() + off_.modf_b, B, D, 2 * D);
        } else {
            dxf = drep;
        }

        std::vector<Real> dh(size_t(rows) * D, Real(0));
        layernorm_backward(acts.h_final.data(), params.data() + off_.lnf_g, acts.lnf_mean.data(),
                           acts.lnf_rstd.data(), dxf.data(), dh.data(), grads.data() + off_.lnf_g,
                           grads.data() + off_.lnf_b, rows, D);

        for (int blk = cfg_.n_blocks - 1; blk >= 0; --blk)
            block_backward(params, batch, blk, acts.blocks[blk], acts, dh, dsilu_tvec, grads);

        // embedding gradients
        for (int r = 0; r < rows; ++r) {
            Real* gt = grads.data() + off_.tok_emb + size_t(batch.tokens[r]) * D;
            Real* gc = grads.data() + off_.clue_emb + size_t(batch.clues[r] ? 1 : 0) * D;
            const Real* dr = dh.data() + size_t(r) * D;
            for (int c = 0; c < D; ++c) {
                gt[c] += dr[c];
                gc[c] += dr[c];
            }
        }
        if (cfg_.variant == Variant::adaptive) {
            for (int b = 0; b < B; ++b) {
                Real* dtv = dtvec.data() + size_t(b) * D;
                for (int i = 0; i < d; ++i) {
                    const Real* dr = dh.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) dtv[c] += dr[c];
                }
            }
        }

        // time pathway
        if (adaln) {
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < D; ++c) {
                    const size_t i = size_t(b) * D + c;
                    dtvec[i] += dsilu_tvec[i] * silu_grad_scalar(acts.tvec[i]);
                }
        }
        if (acts.used_time_mlp) {
            std::vector<Real> dhidden(size_t(B) * D, Real(0));
            linear_backward(acts.time_hidden.data(), params.data() + off_.time_w2, dtvec.data(),
                            dhidden.data(), grads.data() + off_.time_w2,
                            grads.data() + off_.time_b2, B, D, D);
            for (size_t i = 0; i < dhidden.size(); ++i)
                dhidden[i] *= silu_grad_scalar(acts.time_pre[i]);
            linear_backward(acts.feat.data(), params.data() + off_.time_w1, dhidden.data(),
                            static_cast<Real*>(nullptr), grads.data() + off_.time_w1,
                            grads.data() + off_.time_b1, B, D, D);
        } else if (acts.used_time_null) {
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < D; ++c)
                    grads[off_.time_null + c] += dtvec[size_t(b) * D + c];
        }
    }

private:
    struct BlockOff {
        size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        size_t ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        size_t mod_w = 0, mod_b = 0;  // baseline only
    };
    struct Offsets {
        size_t tok_emb, clue_emb;
        size_t time_w1, time_b1, time_w2, time_b2;
        size_t time_null = 0;
        size_t lnf_g, lnf_b;
        size_t modf_w = 0, modf_b = 0;
        size_t logit_w, logit_b;
        size_t tau_pool_w = 0, conf_pool_w = 0;
    };

    BackboneConfig cfg_;
    ParamLayout layout_;
    Offsets off_;
    std::vector<BlockOff> blk_off_;
    detail::MlpSpec tau_mlp_, conf_mlp_;
    std::vector<Real> rope_cos_, rope_sin_;  // d x head_dim/2

    void build_layout() {
        const int D = cfg_.hidden_dim, F = cfg_.ffn_dim(), N = cfg_.vocab_size;
        off_.tok_emb = layout_.add("tok_emb", {N + 1, D});
        off_.clue_emb = layout_.add("clue_emb", {2, D});
        off_.time_w1 = layout_.add("time_w1", {D, D});
        off_.time_b1 = layout_.add("time_b1", {D});
        off_.time_w2 = layout_.add("time_w2", {D, D});
        off_.time_b2 = layout_.add("time_b2", {D});
        if (cfg_.variant == Variant::adaptive)
            off_.time_null = layout_.add("time_null", {D});
        for (int b = 0; b < cfg_.n_blocks; ++b) {
            const std::string p = "blk" + std::to_string(b) + ".";
            BlockOff o;
            o.ln1_g = layout_.add(p + "ln1_g", {D});
            o.ln1_b = layout_.add(p + "ln1_b", {D});
            o.wq = layout_.add(p + "wq", {D, D});
            o.bq = layout_.add(p + "bq", {D});
            o.wk = layout_.add(p + "wk", {D, D});
            o.bk = layout_.add(p + "bk", {D});
            o.wv = layout_.add(p + "wv", {D, D});
            o.bv = layout_.add(p + "bv", {D});
            o.wo = layout_.add(p + "wo", {D, D});
            o.bo = layout_.add(p + "bo", {D});
            o.ln2_g = layout_.add(p + "ln2_g", {D});
            o.ln2_b = layout_.add(p + "ln2_b", {D});
            o.ffn_w1 = layout_.add(p + "ffn_w1", {D, F});
            o.ffn_b1 = layout_.add(p + "ffn_b1", {F});
            o.ffn_w2 = layout_.add(p + "ffn_w2", {F, D});
            o.ffn_b2 = layout_.add(p + "ffn_b2", {D});
            if (cfg_.variant == Variant::baseline) {
                o.mod_w = layout_.add(p + "mod_w", {D, 6 * D});
                o.mod_b = layout_.add(p + "mod_b", {6 * D});
            }
            blk_off_.push_back(o);
        }
        off_.lnf_g = layout_.add("lnf_g", {D});
        off_.lnf_b = layout_.add("lnf_b", {D});
        if (cfg_.variant == Variant::baseline) {
            off_.modf_w = layout_.add("modf_w", {D, 2 * D});
            off_.modf_b = layout_.add("modf_b", {2 * D});
        }
        off_.logit_w = layout_.add("logit_w", {D, N});
        off_.logit_b = layout_.add("logit_b", {N});
        if (cfg_.variant == Variant::adaptive) {
            off_.tau_pool_w = layout_.add("tau_pool_w", {D});
            tau_mlp_ = detail::register_mlp(layout_, "tau_mlp", D, cfg_.head_hidden_dim,
                                            cfg_.head_layers, 1);
            off_.conf_pool_w = layout_.add("conf_pool_w", {D});
            conf_mlp_ = detail::register_mlp(layout_, "conf_mlp", 2 * D, cfg_.head_hidden_dim,
                                             cfg_.head_layers, 1);
        }
    }

    void build_rope_tables() {
        const int half = cfg_.head_dim() / 2;
        rope_cos_.resize(size_t(cfg_.seq_len) * half);
        rope_sin_.resize(size_t(cfg_.seq_len) * half);
        for (int pos = 0; pos < cfg_.seq_len; ++pos)
            for (int j = 0; j < half; ++j) {
                const double theta =
                    pos * std::pow(10000.0, -2.0 * j / double(cfg_.head_dim()));
                rope_cos_[size_t(pos) * half + j] = Real(std::cos(theta));
                rope_sin_[size_t(pos) * half + j] = Real(std::sin(theta));
            }
    }

    // geometric frequencies from 2*pi to 2000*pi: resolves times in [0,1]
    void time_features(double t, Real* out) const {
        const int D = cfg_.hidden_dim, half = D / 2;
        const double two_pi = 6.283185307179586;
        for (int j = 0; j < half; ++j) {
            const double frac = half > 1 ? double(j) / double(half - 1) : 0.0;
            const double w = two_pi * std::pow(1000.0, frac);
            out[j] = Real(std::cos(w * t));
            out[half + j] = Real(std::sin(w * t));
        }
    }

    void block_forward(const std::vector<Real>& params, const Batch& batch, int blk,
                       std::vector<Real>& h, bool drop, Rng* rng, BlockActs<Real>& a,
                       Activations<Real>& acts) const {
        const int B = batch.B, d = cfg_.seq_len, D = cfg_.hidden_dim, F = cfg_.ffn_dim();
        const int H = cfg_.n_heads, hd = cfg_.head_dim();
        const int rows = B * d;
        const bool adaln = cfg_.variant == Variant::baseline;
        const BlockOff& o = blk_off_[blk];

        a.h_in = h;
        a.ln1_mean.assign(rows, Real(0));
        a.ln1_rstd.assign(rows, Real(0));
        a.x1.assign(size_t(rows) * D, Real(0));
        layernorm_forward(h.data(), params.data() + o.ln1_g, params.data() + o.ln1_b, a.x1.data(),
                          a.ln1_mean.data(), a.ln1_rstd.data(), rows, D);

        const Real* gate1 = nullptr;
        const Real* gate2 = nullptr;
        if (adaln) {
            a.mod.assign(size_t(B) * 6 * D, Real(0));
            linear_forward(acts.silu_tvec.data(), params.data() + o.mod_w,
                           params.data() + o.mod_b, a.mod.data(), B, D, 6 * D);
            a.x1m.assign(size_t(rows) * D, Real(0));
            for (int b = 0; b < B; ++b) {
                const Real* m = a.mod.data() + size_t(b) * 6 * D;
                const Real *shift1 = m, *scale1 = m + D;
                for (int i = 0; i < d; ++i) {
                    const Real* src = a.x1.data() + (size_t(b) * d + i) * D;
                    Real* dst = a.x1m.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c)
                        dst[c] = src[c] * (Real(1) + scale1[c]) + shift1[c];
                }
            }
        }
        const Real* attn_in = adaln ? a.x1m.data() : a.x1.data();

        a.q_pre.assign(size_t(rows) * D, Real(0));
        a.k_pre.assign(size_t(rows) * D, Real(0));
        a.v.assign(size_t(rows) * D, Real(0));
        linear_forward(attn_in, params.data() + o.wq, params.data() + o.bq, a.q_pre.data(), rows,
                       D, D);
        linear_forward(attn_in, params.data() + o.wk, params.data() + o.bk, a.k_pre.data(), rows,
                       D, D);
        linear_forward(attn_in, params.data() + o.wv, params.data() + o.bv, a.v.data(), rows, D,
                       D);
        a.q = a.q_pre;
        a.k = a.k_pre;
        rope_forward(a.q.data(), B, d, D, H, rope_cos_.data(), rope_sin_.data());
        rope_forward(a.k.data(), B, d, D, H, rope_cos_.data(), rope_sin_.data());

        a.att.assign(size_t(B) * H * d * d, Real(0));
        a.ctx.assign(size_t(rows) * D, Real(0));
        const Real scale = Real(1.0 / std::sqrt(double(hd)));
        std::vector<Real> scores(size_t(d) * d);
        for (int b = 0; b < B; ++b)
            for (int hh = 0; hh < H; ++hh) {
                const Real* qp = a.q.data() + size_t(b) * d * D + hh * hd;
                const Real* kp = a.k.data() + size_t(b) * d * D + hh * hd;
                const Real* vp = a.v.data() + size_t(b) * d * D + hh * hd;
                Real* att = a.att.data() + (size_t(b) * H + hh) * d * d;
                gemm(false, true, d, d, hd, scale, qp, D, kp, D, Real(0), scores.data(), d);
                softmax_rows(scores.data(), att, d, d);
                Real* cp = a.ctx.data() + size_t(b) * d * D + hh * hd;
                gemm(false, false, d, hd, d, Real(1), att, d, vp, D, Real(0), cp, D);
            }

        a.attn_out.assign(size_t(rows) * D, Real(0));
        linear_forward(a.ctx.data(), params.data() + o.wo, params.data() + o.bo,
                       a.attn_out.data(), rows, D, D);
        if (drop) {
            a.attn_mask.resize(size_t(rows) * D);
            dropout_forward(a.attn_out.data(), a.attn_mask.data(), a.attn_out.size(),
                            cfg_.dropout, *rng);
        } else {
            a.attn_mask.clear();
        }

        for (int b = 0; b < B; ++b) {
            gate1 = adaln ? a.mod.data() + size_t(b) * 6 * D + 2 * D : nullptr;
            for (int i = 0; i < d; ++i) {
                Real* hr = h.data() + (size_t(b) * d + i) * D;
                const Real* ar = a.attn_out.data() + (size_t(b) * d + i) * D;
                for (int c = 0; c < D; ++c) hr[c] += (gate1 ? gate1[c] : Real(1)) * ar[c];
            }
        }

        a.h_mid = h;
        a.ln2_mean.assign(rows, Real(0));
        a.ln2_rstd.assign(rows, Real(0));
        a.x2.assign(size_t(rows) * D, Real(0));
        layernorm_forward(h.data(), params.data() + o.ln2_g, params.data() + o.ln2_b, a.x2.data(),
                          a.ln2_mean.data(), a.ln2_rstd.data(), rows, D);
        if (adaln) {
            a.x2m.assign(size_t(rows) * D, Real(0));
            for (int b = 0; b < B; ++b) {
                const Real* m = a.mod.data() + size_t(b) * 6 * D;
                const Real *shift2 = m + 3 * D, *scale2 = m + 4 * D;
                for (int i = 0; i < d; ++i) {
                    const Real* src = a.x2.data() + (size_t(b) * d + i) * D;
                    Real* dst = a.x2m.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c)
                        dst[c] = src[c] * (Real(1) + scale2[c]) + shift2[c];
                }
            }
        }
        const Real* ffn_in = adaln ? a.x2m.data() : a.x2.data();

        a.ffn_pre.assign(size_t(rows) * F, Real(0));
        linear_forward(ffn_in, params.data() + o.ffn_w1, params.data() + o.ffn_b1,
                       a.ffn_pre.data(), rows, D, F);
        a.ffn_act.assign(size_t(rows) * F, Real(0));
        gelu_forward(a.ffn_pre.data(), a.ffn_act.data(), a.ffn_pre.size());
        a.ffn_out.assign(size_t(rows) * D, Real(0));
        linear_forward(a.ffn_act.data(), params.data() + o.ffn_w2, params.data() + o.ffn_b2,
                       a.ffn_out.data(), rows, F, D);
        if (drop) {
            a.ffn_mask.resize(size_t(rows) * D);
            dropout_forward(a.ffn_out.data(), a.ffn_mask.data(), a.ffn_out.size(), cfg_.dropout,
                            *rng);
        } else {
            a.ffn_mask.clear();
        }

        for (int b = 0; b < B; ++b) {
            gate2 = adaln ? a.mod.data() + size_t(b) * 6 * D + 5 * D : nullptr;
            for (int i = 0; i < d; ++i) {
                Real* hr = h.data() + (size_t(b) * d + i) * D;
                const Real* fr = a.ffn_out.data() + (size_t(b) * d + i) * D;
                for (int c = 0; c < D; ++c) hr[c] += (gate2 ? gate2[c] : Real(1)) * fr[c];
            }
        }
    }

    void block_backward(const std::vector<Real>& params, const Batch& batch, int blk,
                        const BlockActs<Real>& a, const Activations<Real>& acts,
                        std::vector<Real>& dh, std::vector<Real>& dsilu_tvec,
                        std::vector<Real>& grads) const {
        const int B = batch.B, d = cfg_.seq_len, D = cfg_.hidden_dim, F = cfg_.ffn_dim();
        const int H = cfg_.n_heads, hd = cfg_.head_dim();
        const int rows = B * d;
        const bool adaln = cfg_.variant == Variant::baseline;
        const BlockOff& o = blk_off_[blk];

        std::vector<Real> dmod;
        if (adaln) dmod.assign(size_t(B) * 6 * D, Real(0));

        // ---- FFN residual: h_out = h_mid + gate2 .* ffn_out ----
        std::vector<Real> dffn_out(size_t(rows) * D, Real(0));
        for (int b = 0; b < B; ++b) {
            const Real* gate2 = adaln ? a.mod.data() + size_t(b) * 6 * D + 5 * D : nullptr;
            Real* dgate2 = adaln ? dmod.data() + size_t(b) * 6 * D + 5 * D : nullptr;
            for (int i = 0; i < d; ++i) {
                const Real* dhr = dh.data() + (size_t(b) * d + i) * D;
                const Real* fr = a.ffn_out.data() + (size_t(b) * d + i) * D;
                Real* dfr = dffn_out.data() + (size_t(b) * d + i) * D;
                for (int c = 0; c < D; ++c) {
                    dfr[c] = dhr[c] * (gate2 ? gate2[c] : Real(1));
                    if (dgate2) dgate2[c] += dhr[c] * fr[c];
                }
            }
        }
        if (!a.ffn_mask.empty()) dropout_backward(a.ffn_mask.data(), dffn_out.data(),
                                                  dffn_out.size());

        std::vector<Real> dffn_act(size_t(rows) * F, Real(0));
        linear_backward(a.ffn_act.data(), params.data() + o.ffn_w2, dffn_out.data(),
                        dffn_act.data(), grads.data() + o.ffn_w2, grads.data() + o.ffn_b2, rows,
                        F, D);
        gelu_backward(a.ffn_pre.data(), dffn_act.data(), dffn_act.data(), dffn_act.size());
        const Real* ffn_in = adaln ? a.x2m.data() : a.x2.data();
        std::vector<Real> dffn_in(size_t(rows) * D, Real(0));
        linear_backward(ffn_in, params.data() + o.ffn_w1, dffn_act.data(), dffn_in.data(),
                        grads.data() + o.ffn_w1, grads.data() + o.ffn_b1, rows, D, F);

        std::vector<Real> dx2(size_t(rows) * D, Real(0));
        if (adaln) {
            for (int b = 0; b < B; ++b) {
                const Real* m = a.mod.data() + size_t(b) * 6 * D;
                const Real* scale2 = m + 4 * D;
                Real* dshift2 = dmod.data() + size_t(b) * 6 * D + 3 * D;
                Real* dscale2 = dmod.data() + size_t(b) * 6 * D + 4 * D;
                for (int i = 0; i < d; ++i) {
                    const Real* xr = a.x2.data() + (size_t(b) * d + i) * D;
                    const Real* dr = dffn_in.data() + (size_t(b) * d + i) * D;
                    Real* dx = dx2.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) {
                        dx[c] = dr[c] * (Real(1) + scale2[c]);
                        dscale2[c] += dr[c] * xr[c];
                        dshift2[c] += dr[c];
                    }
                }
            }
        } else {
            dx2 = dffn_in;
        }

        std::vector<Real> dh_mid(size_t(rows) * D, Real(0));
        layernorm_backward(a.h_mid.data(), params.data() + o.ln2_g, a.ln2_mean.data(),
                           a.ln2_rstd.data(), dx2.data(), dh_mid.data(), grads.data() + o.ln2_g,
                           grads.data() + o.ln2_b, rows, D);
        for (size_t i = 0; i < dh.size(); ++i) dh[i] += dh_mid[i];

        // ---- attention residual: h_mid = h_in + gate1 .* attn_out ----
        std::vector<Real> dattn_out(size_t(rows) * D, Real(0));
        for (int b = 0; b < B; ++b) {
            const Real* gate1 = adaln ? a.mod.data() + size_t(b) * 6 * D + 2 * D : nullptr;
            Real* dgate1 = adaln ? dmod.data() + size_t(b) * 6 * D + 2 * D : nullptr;
            for (int i = 0; i < d; ++i) {
                const Real* dhr = dh.data() + (size_t(b) * d + i) * D;
                const Real* ar = a.attn_out.data() + (size_t(b) * d + i) * D;
                Real* dar = dattn_out.data() + (size_t(b) * d + i) * D;
                for (int c = 0; c < D; ++c) {
                    dar[c] = dhr[c] * (gate1 ? gate1[c] : Real(1));
                    if (dgate1) dgate1[c] += dhr[c] * ar[c];
                }
            }
        }
        if (!a.attn_mask.empty()) dropout_backward(a.attn_mask.data(), dattn_out.data(),
                                                   dattn_out.size());

        std::vector<Real> dctx(size_t(rows) * D, Real(0));
        linear_backward(a.ctx.data(), params.data() + o.wo, dattn_out.data(), dctx.data(),
                        grads.data() + o.wo, grads.data() + o.bo, rows, D, D);

        std::vector<Real> dq(size_t(rows) * D, Real(0));
        std::vector<Real> dk(size_t(rows) * D, Real(0));
        std::vector<Real> dv(size_t(rows) * D, Real(0));
        const Real scale = Real(1.0 / std::sqrt(double(hd)));
        std::vector<Real> datt(size_t(d) * d), dscores(size_t(d) * d);
        for (int b = 0; b < B; ++b)
            for (int hh = 0; hh < H; ++hh) {
                const Real* att = a.att.data() + (size_t(b) * H + hh) * d * d;
                const Real* vp = a.v.data() + size_t(b) * d * D + hh * hd;
                const Real* qp = a.q.data() + size_t(b) * d * D + hh * hd;
                const Real* kp = a.k.data() + size_t(b) * d * D + hh * hd;
                const Real* dcp = dctx.data() + size_t(b) * d * D + hh * hd;

                gemm(false, true, d, d, hd, Real(1), dcp, D, vp, D, Real(0), datt.data(), d);
                gemm(true, false, d, hd, d, Real(1), att, d, dcp, D, Real(0),
                     dv.data() + size_t(b) * d * D + hh * hd, D);
                softmax_backward_rows(att, datt.data(), dscores.data(), d, d);
                gemm(false, false, d, hd, d, scale, dscores.data(), d, kp, D, Real(0),
                     dq.data() + size_t(b) * d * D + hh * hd, D);
                gemm(true, false, d, hd, d, scale, dscores.data(), d, qp, D, Real(0),
                     dk.data() + size_t(b) * d * D + hh * hd, D);
            }

        rope_backward(dq.data(), B, d, D, H, rope_cos_.data(), rope_sin_.data());
        rope_backward(dk.data(), B, d, D, H, rope_cos_.data(), rope_sin_.data());

        const Real* attn_in = adaln ? a.x1m.data() : a.x1.data();
        std::vector<Real> dattn_in(size_t(rows) * D, Real(0));
        std::vector<Real> tmp(size_t(rows) * D, Real(0));
        linear_backward(attn_in, params.data() + o.wq, dq.data(), dattn_in.data(),
                        grads.data() + o.wq, grads.data() + o.bq, rows, D, D);
        linear_backward(attn_in, params.data() + o.wk, dk.data(), tmp.data(),
                        grads.data() + o.wk, grads.data() + o.bk, rows, D, D);
        for (size_t i = 0; i < dattn_in.size(); ++i) dattn_in[i] += tmp[i];
        linear_backward(attn_in, params.data() + o.wv, dv.data(), tmp.data(),
                        grads.data() + o.wv, grads.data() + o.bv, rows, D, D);
        for (size_t i = 0; i < dattn_in.size(); ++i) dattn_in[i] += tmp[i];

        std::vector<Real> dx1(size_t(rows) * D, Real(0));
        if (adaln) {
            for (int b = 0; b < B; ++b) {
                const Real* m = a.mod.data() + size_t(b) * 6 * D;
                const Real* scale1 = m + D;
                Real* dshift1 = dmod.data() + size_t(b) * 6 * D;
                Real* dscale1 = dmod.data() + size_t(b) * 6 * D + D;
                for (int i = 0; i < d; ++i) {
                    const Real* xr = a.x1.data() + (size_t(b) * d + i) * D;
                    const Real* dr = dattn_in.data() + (size_t(b) * d + i) * D;
                    Real* dx = dx1.data() + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) {
                        dx[c] = dr[c] * (Real(1) + scale1[c]);
                        dscale1[c] += dr[c] * xr[c];
                        dshift1[c] += dr[c];
                    }
                }
            }
            linear_backward(acts.silu_tvec.data(), params.data() + o.mod_w, dmod.data(),
                            tmp.data(), grads.data() + o.mod_w, grads.data() + o.mod_b, B, D,
                            6 * D);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < D; ++c)
                    dsilu_tvec[size_t(b) * D + c] += tmp[size_t(b) * D + c];
        } else {
            dx1 = dattn_in;
        }

        std::vector<Real> dh_in(size_t(rows) * D, Real(0));
        layernorm_backward(a.h_in.data(), params.data() + o.ln1_g, a.ln1_mean.data(),
                           a.ln1_rstd.data(), dx1.data(), dh_in.data(), grads.data() + o.ln1_g,
                           grads.data() + o.ln1_b, rows, D);
        for (size_t i = 0; i < dh.size(); ++i) dh[i] += dh_in[i];
    }

    // attention pooling: alpha = softmax(x . w), pooled = sum_i alpha_i x_i;
    // the confidence context pools over non-clue positions only.
    void heads_forward(const std::vector<Real>& params, const Batch& batch, const Real* rep,
                       Activations<Real>& acts) const {
        const int B = batch.B, d = cfg_.seq_len, D = cfg_.hidden_dim;
        const int rows = B * d;

        acts.tau_scores.assign(rows, Real(0));
        acts.tau_alpha.assign(rows, Real(0));
        acts.tau_pooled.assign(size_t(B) * D, Real(0));
        for (int b = 0; b < B; ++b) {
            Real* sc = acts.tau_scores.data() + size_t(b) * d;
            for (int i = 0; i < d; ++i) {
                const Real* xr = rep + (size_t(b) * d + i) * D;
                Real s = 0;
                for (int c = 0; c < D; ++c) s += xr[c] * params[off_.tau_pool_w + c];
                sc[i] = s;
            }
            softmax_rows(sc, acts.tau_alpha.data() + size_t(b) * d, 1, d);
            Real* pooled = acts.tau_pooled.data() + size_t(b) * D;
            for (int i = 0; i < d; ++i) {
                const Real al = acts.tau_alpha[size_t(b) * d + i];
                const Real* xr = rep + (size_t(b) * d + i) * D;
                for (int c = 0; c < D; ++c) pooled[c] += al * xr[c];
            }
        }
        acts.tau_mlp.resize(tau_mlp_, B);
        const Real* tau_out = mlp_forward(params, tau_mlp_, acts.tau_pooled.data(), B,
                                          acts.tau_mlp);
        acts.tau.assign(B, Real(0));
        for (int b = 0; b < B; ++b) acts.tau[b] = sigmoid_scalar(tau_out[b]);

        acts.conf_scores.assign(rows, Real(0));
        acts.conf_alpha.assign(rows, Real(0));
        acts.conf_ctx.assign(size_t(B) * D, Real(0));
        for (int b = 0; b < B; ++b) {
            Real* sc = acts.conf_scores.data() + size_t(b) * d;
            Real mx = Real(-1e30);
            bool any = false;
            for (int i = 0; i < d; ++i) {
                const Real* xr = rep + (size_t(b) * d + i) * D;
                Real s = 0;
                for (int c = 0; c < D; ++c) s += xr[c] * params[off_.conf_pool_w + c];
                sc[i] = s;
                if (!batch.clues[size_t(b) * d + i]) {
                    mx = std::max(mx, s);
                    any = true;
                }
            }
            Real* al = acts.conf_alpha.data() + size_t(b) * d;
            if (!any) continue;  // all clues: context stays zero
            Real sum = 0;
            for (int i = 0; i < d; ++i) {
                if (batch.clues[size_t(b) * d + i]) {
                    al[i] = 0;
                } else {
                    al[i] = std::exp(sc[i] - mx);
                    sum += al[i];
                }
            }
            Real* ctx = acts.conf_ctx.data() + size_t(b) * D;
            for (int i = 0; i < d; ++i) {
                al[i] /= sum;
                const Real* xr = rep + (size_t(b) * d + i) * D;
                for (int c = 0; c < D; ++c) ctx[c] += al[i] * xr[c];
            }
        }
        acts.conf_in.assign(size_t(rows) * 2 * D, Real(0));
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < d; ++i) {
                Real* zi = acts.conf_in.data() + (size_t(b) * d + i) * 2 * D;
                const Real* xr = rep + (size_t(b) * d + i) * D;
                const Real* ctx = acts.conf_ctx.data() + size_t(b) * D;
                for (int c = 0; c < D; ++c) {
                    zi[c] = xr[c];
                    zi[D + c] = ctx[c];
                }
            }
        acts.conf_mlp.resize(conf_mlp_, rows);
        const Real* conf_out = mlp_forward(params, conf_mlp_, acts.conf_in.data(), rows,
                                           acts.conf_mlp);
        acts.conf.assign(rows, Real(0));
        for (int r = 0; r < rows; ++r) acts.conf[r] = sigmoid_scalar(conf_out[r]);
    }

    void heads_backward(const std::vector<Real>& params, const Batch& batch,
                        const Activations<Real>& acts, const Real* dconf, const Real* dtau,
                        std::vector<Real>& drep, std::vector<Real>& grads) const {
        const int B = batch.B, d = cfg_.seq_len, D = cfg_.hidden_dim;
        const int rows = B * d;
        const Real* rep = cfg_.variant == Variant::baseline ? acts.xfm.data() : acts.xf.data();

        // ---- tau head ----
        if (dtau) {
            std::vector<Real> dout(B, Real(0));
            for (int b = 0; b < B; ++b)
                dout[b] = dtau[b] * acts.tau[b] * (Real(1) - acts.tau[b]);
            std::vector<Real> dpooled(size_t(B) * D, Real(0));
            mlp_backward(params, tau_mlp_, acts.tau_pooled.data(), B, acts.tau_mlp, dout.data(),
                         dpooled.data(), grads);
            for (int b = 0; b < B; ++b) {
                const Real* dp = dpooled.data() + size_t(b) * D;
                std::vector<Real> dalpha(d, Real(0));
                for (int i = 0; i < d; ++i) {
                    const Real* xr = rep + (size_t(b) * d + i) * D;
                    const Real al = acts.tau_alpha[size_t(b) * d + i];
                    Real dot = 0;
                    for (int c = 0; c < D; ++c) {
                        dot += dp[c] * xr[c];
                        drep[(size_t(b) * d + i) * D + c] += al * dp[c];
                    }
                    dalpha[i] = dot;
                }
                // softmax backward on the pooling weights
                Real dot_aa = 0;
                for (int i = 0; i < d; ++i) dot_aa += dalpha[i] * acts.tau_alpha[size_t(b) * d + i];
                for (int i = 0; i < d; ++i) {
                    const Real ds = acts.tau_alpha[size_t(b) * d + i] * (dalpha[i] - dot_aa);
                    const Real* xr = rep + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) {
                        drep[(size_t(b) * d + i) * D + c] += ds * params[off_.tau_pool_w + c];
                        grads[off_.tau_pool_w + c] += ds * xr[c];
                    }
                }
            }
        }

        // ---- confidence head ----
        if (dconf) {
            std::vector<Real> dout(rows, Real(0));
            for (int r = 0; r < rows; ++r)
                dout[r] = dconf[r] * acts.conf[r] * (Real(1) - acts.conf[r]);
            std::vector<Real> dconf_in(size_t(rows) * 2 * D, Real(0));
            mlp_backward(params, conf_mlp_, acts.conf_in.data(), rows, acts.conf_mlp, dout.data(),
                         dconf_in.data(), grads);

            for (int b = 0; b < B; ++b) {
                std::vector<Real> dctx(D, Real(0));
                for (int i = 0; i < d; ++i) {
                    const Real* dz = dconf_in.data() + (size_t(b) * d + i) * 2 * D;
                    for (int c = 0; c < D; ++c) {
                        drep[(size_t(b) * d + i) * D + c] += dz[c];
                        dctx[c] += dz[D + c];
                    }
                }
                std::vector<Real> dalpha(d, Real(0));
                bool any = false;
                for (int i = 0; i < d; ++i) {
                    if (batch.clues[size_t(b) * d + i]) continue;
                    any = true;
                    const Real* xr = rep + (size_t(b) * d + i) * D;
                    Real dot = 0;
                    const Real al = acts.conf_alpha[size_t(b) * d + i];
                    for (int c = 0; c < D; ++c) {
                        dot += dctx[c] * xr[c];
                        drep[(size_t(b) * d + i) * D + c] += al * dctx[c];
                    }
                    dalpha[i] = dot;
                }
                if (!any) continue;
                Real dot_aa = 0;
                for (int i = 0; i < d; ++i)
                    dot_aa += dalpha[i] * acts.conf_alpha[size_t(b) * d + i];
                for (int i = 0; i < d; ++i) {
                    if (batch.clues[size_t(b) * d + i]) continue;
                    const Real ds = acts.conf_alpha[size_t(b) * d + i] * (dalpha[i] - dot_aa);
                    const Real* xr = rep + (size_t(b) * d + i) * D;
                    for (int c = 0; c < D; ++c) {
                        drep[(size_t(b) * d + i) * D + c] += ds * params[off_.conf_pool_w + c];
                        grads[off_.conf_pool_w + c] += ds * xr[c];
                    }
                }
            }
        }
    }

    const Real* mlp_forward(const std::vector<Real>& params, const detail::MlpSpec& spec,
                            const Real* x, int rows, MlpActs<Real>& acts) const {
        const Real* cur = x;
        for (int l = 0; l < spec.n_layers(); ++l) {
            linear_forward(cur, params.data() + spec.w_off[l], params.data() + spec.b_off[l],
                           acts.pre[l].data(), rows, spec.dims[l], spec.dims[l + 1]);
            if (l + 1 < spec.n_layers()) {
                gelu_forward(acts.pre[l].data(), acts.act[l].data(), acts.pre[l].size());
                cur = acts.act[l].data();
            } else {
                cur = acts.pre[l].data();
            }
        }
        return cur;
    }

    void mlp_backward(const std::vector<Real>& params, const detail::MlpSpec& spec, const Real* x,
                      int rows, const MlpActs<Real>& acts, const Real* dout, Real* dx,
                      std::vector<Real>& grads) const {
        const int L = spec.n_layers();
        std::vector<Real> dcur(dout, dout + size_t(rows) * spec.dims[L]);
        for (int l = L - 1; l >= 0; --l) {
            const Real* input = l == 0 ? x : acts.act[l - 1].data();
            std::vector<Real> din(size_t(rows) * spec.dims[l], Real(0));
            linear_backward(input, params.data() + spec.w_off[l], dcur.data(),
                            l == 0 ? dx : din.data(), grads.data() + spec.w_off[l],
                            grads.data() + spec.b_off[l], rows, spec.dims[l], spec.dims[l + 1]);
            if (l > 0) {
                gelu_backward(acts.pre[l - 1].data(), din.data(), din.data(), din.size());
                dcur = std::move(din);
            }
        }
    }
};

}  // namespace refinelab::nn
