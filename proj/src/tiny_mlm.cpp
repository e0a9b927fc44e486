#include "tiny_mlm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace pairprompt::scoring {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

constexpr std::size_t kTokEmb = 0;
constexpr std::size_t kPosEmb = 1;
constexpr std::size_t kPerBlock = 16;

enum BlockTensor : std::size_t {
    kLn1Gain = 0, kLn1Bias, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
    kLn2Gain, kLn2Bias, kW1, kB1, kW2, kB2,
};

std::size_t block_base(int block) { return 2 + static_cast<std::size_t>(block) * kPerBlock; }
std::size_t final_ln_gain_index(int blocks) { return block_base(blocks); }
std::size_t out_bias_index(int blocks) { return block_base(blocks) + 2; }

// y[L,Out] = x[L,In] * w[In,Out] + b
void linear_forward(const double* x, const double* w, const double* b, double* y,
                    std::size_t L, std::size_t in, std::size_t out) {
    for (std::size_t l = 0; l < L; ++l) {
        double* yrow = y + l * out;
        std::memcpy(yrow, b, out * sizeof(double));
        const double* xrow = x + l * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xrow[i];
            const double* wrow = w + i * out;
            for (std::size_t o = 0; o < out; ++o) yrow[o] += xi * wrow[o];
        }
    }
}

void linear_backward(const double* x, const double* w, const double* dy, double* dx, double* dw,
                     double* db, std::size_t L, std::size_t in, std::size_t out) {
    for (std::size_t l = 0; l < L; ++l) {
        const double* dyrow = dy + l * out;
        const double* xrow = x + l * in;
        double* dxrow = dx + l * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double* wrow = w + i * out;
            double* dwrow = dw + i * out;
            const double xi = xrow[i];
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) {
                acc += dyrow[o] * wrow[o];
                dwrow[o] += xi * dyrow[o];
            }
            dxrow[i] += acc;
        }
        for (std::size_t o = 0; o < out; ++o) db[o] += dyrow[o];
    }
}

void layernorm_forward(const double* x, const double* gain, const double* bias, double* out,
                       double* xhat, double* rstd, std::size_t L, std::size_t d) {
    for (std::size_t l = 0; l < L; ++l) {
        const double* xrow = x + l * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xrow[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xrow[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double r = 1.0 / std::sqrt(var + kLnEps);
        rstd[l] = r;
        double* hrow = xhat + l * d;
        double* orow = out + l * d;
        for (std::size_t j = 0; j < d; ++j) {
            hrow[j] = (xrow[j] - mean) * r;
            orow[j] = gain[j] * hrow[j] + bias[j];
        }
    }
}

void layernorm_backward(const double* dout, const double* xhat, const double* rstd,
                        const double* gain, double* dx, double* dgain, double* dbias,
                        std::size_t L, std::size_t d) {
    for (std::size_t l = 0; l < L; ++l) {
        const double* drow = dout + l * d;
        const double* hrow = xhat + l * d;
        double* dxrow = dx + l * d;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = drow[j] * gain[j];
            m1 += dxhat;
            m2 += dxhat * hrow[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = drow[j] * gain[j];
            dxrow[j] += rstd[l] * (dxhat - m1 - hrow[j] * m2);
            dgain[j] += drow[j] * hrow[j];
            dbias[j] += drow[j];
        }
    }
}

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
    return cdf + x * pdf;
}

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void softmax_inplace(double* x, std::size_t n) {
    double peak = x[0];
    for (std::size_t i = 1; i < n; ++i) peak = std::max(peak, x[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - peak);
        total += x[i];
    }
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

struct LnCache {
    std::vector<double> out, xhat, rstd;
    void resize(std::size_t L, std::size_t d) {
        out.resize(L * d);
        xhat.resize(L * d);
        rstd.resize(L);
    }
};

struct BlockCache {
    std::vector<double> x_in;  // block input (residual stream)
    LnCache ln1;
    std::vector<double> q, k, v, att, ctx, attn_out, resid1;
    LnCache ln2;
    std::vector<double> ff_pre, ff_act, ff_out;
};

struct Trace {
    std::vector<double> x0;             // L*d embedding sum
    std::vector<BlockCache> blocks;
    std::vector<double> final_in;       // L*d output of the last block
    LnCache final_ln;                   // mask position only (L = 1)
    std::vector<double> logits;         // V
};

struct Dims {
    std::size_t V, d, H, dh, F, L;
    double scale;
};

void attention_forward(const Dims& dm, const double* q, const double* k, const double* v,
                       double* att, double* ctx) {
    for (std::size_t h = 0; h < dm.H; ++h) {
        const std::size_t off = h * dm.dh;
        double* att_h = att + h * dm.L * dm.L;
        for (std::size_t i = 0; i < dm.L; ++i) {
            double* row = att_h + i * dm.L;
            const double* qi = q + i * dm.d + off;
            for (std::size_t j = 0; j < dm.L; ++j) {
                const double* kj = k + j * dm.d + off;
                double s = 0.0;
                for (std::size_t c = 0; c < dm.dh; ++c) s += qi[c] * kj[c];
                row[j] = s * dm.scale;
            }
            softmax_inplace(row, dm.L);
            double* ci = ctx + i * dm.d + off;
            std::fill(ci, ci + dm.dh, 0.0);
            for (std::size_t j = 0; j < dm.L; ++j) {
                const double a = row[j];
                const double* vj = v + j * dm.d + off;
                for (std::size_t c = 0; c < dm.dh; ++c) ci[c] += a * vj[c];
            }
        }
    }
}

void attention_backward(const Dims& dm, const double* q, const double* k, const double* v,
                        const double* att, const double* dctx, double* dq, double* dk, double* dv) {
    std::vector<double> datt(dm.L), dscore(dm.L);
    for (std::size_t h = 0; h < dm.H; ++h) {
        const std::size_t off = h * dm.dh;
        const double* att_h = att + h * dm.L * dm.L;
        for (std::size_t i = 0; i < dm.L; ++i) {
            const double* arow = att_h + i * dm.L;
            const double* dci = dctx + i * dm.d + off;
            // dv and datt
            for (std::size_t j = 0; j < dm.L; ++j) {
                const double* vj = v + j * dm.d + off;
                double* dvj = dv + j * dm.d + off;
                double s = 0.0;
                const double a = arow[j];
                for (std::size_t c = 0; c < dm.dh; ++c) {
                    s += dci[c] * vj[c];
                    dvj[c] += a * dci[c];
                }
                datt[j] = s;
            }
            // softmax backward
            double dot = 0.0;
            for (std::size_t j = 0; j < dm.L; ++j) dot += datt[j] * arow[j];
            for (std::size_t j = 0; j < dm.L; ++j) dscore[j] = arow[j] * (datt[j] - dot);
            // dq, dk
            double* dqi = dq + i * dm.d + off;
            const double* qi = q + i * dm.d + off;
            for (std::size_t j = 0; j < dm.L; ++j) {
                const double g = dscore[j] * dm.scale;
                const double* kj = k + j * dm.d + off;
                double* dkj = dk + j * dm.d + off;
                for (std::size_t c = 0; c < dm.dh; ++c) {
                    dqi[c] += g * kj[c];
                    dkj[c] += g * qi[c];
                }
            }
        }
    }
}

}  // namespace

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors) n += t.size();
    return n;
}

const Tensor& ParamSet::named(std::string_view name) const {
    for (const Tensor& t : tensors)
        if (t.name == name) return t;
    fail(ErrorCode::InvalidArgument, "no tensor named '" + std::string(name) + "'");
}

ParamSet ParamSet::zeros_like(const ParamSet& other) {
    ParamSet out;
    out.tensors.reserve(other.tensors.size());
    for (const Tensor& t : other.tensors) {
        Tensor z;
        z.name = t.name;
        z.shape = t.shape;
        z.decay = t.decay;
        z.data.assign(t.size(), 0.0);
        out.tensors.push_back(std::move(z));
    }
    return out;
}

TrainingConfig TrainingConfig::finetune_preset(int epochs) {
    TrainingConfig config;
    config.learning_rate = 1e-5;
    config.batch_size = 16;
    config.epochs = epochs;
    config.weight_decay = 0.01;
    return config;
}

namespace {

ParamSet init_params(const TinyMLMConfig& config, std::size_t vocab_size) {
    const std::size_t d = static_cast<std::size_t>(config.embed_dim);
    const std::size_t F = static_cast<std::size_t>(config.resolved_ff_dim());
    Rng rng(derive_seed(config.init_seed, "tiny-mlm-init"));

    ParamSet params;
    auto add = [&](const std::string& name, std::vector<std::size_t> shape, bool decay,
                   bool random, double constant = 0.0) {
        Tensor t;
        t.name = name;
        t.shape = std::move(shape);
        t.decay = decay;
        std::size_t n = 1;
        for (const std::size_t s : t.shape) n *= s;
        t.data.resize(n);
        if (random) {
            for (double& v : t.data) v = rng.gaussian() * kInitStd;
        } else {
            std::fill(t.data.begin(), t.data.end(), constant);
        }
        params.tensors.push_back(std::move(t));
    };

    add("tok_embedding", {vocab_size, d}, true, true);
    add("pos_embedding", {static_cast<std::size_t>(config.max_seq_len), d}, true, true);
    for (int b = 0; b < config.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        add(p + "ln1.gain", {d}, false, false, 1.0);
        add(p + "ln1.bias", {d}, false, false, 0.0);
        add(p + "attn.wq", {d, d}, true, true);
        add(p + "attn.bq", {d}, false, false, 0.0);
        add(p + "attn.wk", {d, d}, true, true);
        add(p + "attn.bk", {d}, false, false, 0.0);
        add(p + "attn.wv", {d, d}, true, true);
        add(p + "attn.bv", {d}, false, false, 0.0);
        add(p + "attn.wo", {d, d}, true, true);
        add(p + "attn.bo", {d}, false, false, 0.0);
        add(p + "ln2.gain", {d}, false, false, 1.0);
        add(p + "ln2.bias", {d}, false, false, 0.0);
        add(p + "ffn.w1", {d, F}, true, true);
        add(p + "ffn.b1", {F}, false, false, 0.0);
        add(p + "ffn.w2", {F, d}, true, true);
        add(p + "ffn.b2", {d}, false, false, 0.0);
    }
    add("final_ln.gain", {d}, false, false, 1.0);
    add("final_ln.bias", {d}, false, false, 0.0);
    add("out_bias", {vocab_size}, false, false, 0.0);
    return params;
}

// Runs the encoder and fills logits over the vocabulary at the mask position.
// trace may be null for evaluation-only calls.
void forward_mask_logits(const ParamSet& params, const TinyMLMConfig& config,
                         const prompting::PromptedPair& pair, std::vector<double>& logits,
                         Trace* trace) {
    const Tensor& tok_emb = params.tensors[kTokEmb];
    const std::size_t V = tok_emb.shape[0];
    Dims dm;
    dm.V = V;
    dm.d = static_cast<std::size_t>(config.embed_dim);
    dm.H = static_cast<std::size_t>(config.heads);
    dm.dh = dm.d / dm.H;
    dm.F = static_cast<std::size_t>(config.resolved_ff_dim());
    dm.L = pair.tokens.size();
    dm.scale = 1.0 / std::sqrt(static_cast<double>(dm.dh));

    if (dm.L == 0) fail(ErrorCode::InvalidArgument, "prompted pair has no tokens");
    if (dm.L > static_cast<std::size_t>(config.max_seq_len))
        fail(ErrorCode::Precondition, "sequence of " + std::to_string(dm.L) +
                                          " tokens exceeds max_seq_len " +
                                          std::to_string(config.max_seq_len));
    if (pair.mask_position >= dm.L || pair.tokens[pair.mask_position] != corpus::Tokenizer::kMask)
        fail(ErrorCode::InvalidArgument, "mask_position does not point at the mask token");
    for (const std::int32_t t : pair.tokens)
        if (t < 0 || static_cast<std::size_t>(t) >= V)
            fail(ErrorCode::InvalidArgument, "token index " + std::to_string(t) +
                                                 " outside vocabulary of size " + std::to_string(V));

    Trace local;
    Trace& tr = trace ? *trace : local;
    tr.x0.resize(dm.L * dm.d);
    const double* pos_emb = params.tensors[kPosEmb].data.data();
    for (std::size_t l = 0; l < dm.L; ++l) {
        const double* row = tok_emb.data.data() + static_cast<std::size_t>(pair.tokens[l]) * dm.d;
        const double* prow = pos_emb + l * dm.d;
        double* xrow = tr.x0.data() + l * dm.d;
        for (std::size_t j = 0; j < dm.d; ++j) xrow[j] = row[j] + prow[j];
    }

    tr.blocks.resize(static_cast<std::size_t>(config.blocks));
    std::vector<double> x = tr.x0;
    for (int b = 0; b < config.blocks; ++b) {
        BlockCache& bc = tr.blocks[static_cast<std::size_t>(b)];
        const std::size_t base = block_base(b);
        const auto& T = params.tensors;
        bc.x_in = x;
        bc.ln1.resize(dm.L, dm.d);
        layernorm_forward(bc.x_in.data(), T[base + kLn1Gain].data.data(),
                          T[base + kLn1Bias].data.data(), bc.ln1.out.data(), bc.ln1.xhat.data(),
                          bc.ln1.rstd.data(), dm.L, dm.d);
        bc.q.resize(dm.L * dm.d);
        bc.k.resize(dm.L * dm.d);
        bc.v.resize(dm.L * dm.d);
        linear_forward(bc.ln1.out.data(), T[base + kWq].data.data(), T[base + kBq].data.data(),
                       bc.q.data(), dm.L, dm.d, dm.d);
        linear_forward(bc.ln1.out.data(), T[base + kWk].data.data(), T[base + kBk].data.data(),
                       bc.k.data(), dm.L, dm.d, dm.d);
        linear_forward(bc.ln1.out.data(), T[base + kWv].data.data(), T[base + kBv].data.data(),
                       bc.v.data(), dm.L, dm.d, dm.d);
        bc.att.resize(dm.H * dm.L * dm.L);
        bc.ctx.resize(dm.L * dm.d);
        attention_forward(dm, bc.q.data(), bc.k.data(), bc.v.data(), bc.att.data(), bc.ctx.data());
        bc.attn_out.resize(dm.L * dm.d);
        linear_forward(bc.ctx.data(), T[base + kWo].data.data(), T[base + kBo].data.data(),
                       bc.attn_out.data(), dm.L, dm.d, dm.d);
        bc.resid1.resize(dm.L * dm.d);
        for (std::size_t i = 0; i < dm.L * dm.d; ++i) bc.resid1[i] = bc.x_in[i] + bc.attn_out[i];
        bc.ln2.resize(dm.L, dm.d);
        layernorm_forward(bc.resid1.data(), T[base + kLn2Gain].data.data(),
                          T[base + kLn2Bias].data.data(), bc.ln2.out.data(), bc.ln2.xhat.data(),
                          bc.ln2.rstd.data(), dm.L, dm.d);
        bc.ff_pre.resize(dm.L * dm.F);
        linear_forward(bc.ln2.out.data(), T[base + kW1].data.data(), T[base + kB1].data.data(),
                       bc.ff_pre.data(), dm.L, dm.d, dm.F);
        bc.ff_act.resize(dm.L * dm.F);
        for (std::size_t i = 0; i < dm.L * dm.F; ++i) bc.ff_act[i] = gelu(bc.ff_pre[i]);
        bc.ff_out.resize(dm.L * dm.d);
        linear_forward(bc.ff_act.data(), T[base + kW2].data.data(), T[base + kB2].data.data(),
                       bc.ff_out.data(), dm.L, dm.F, dm.d);
        for (std::size_t i = 0; i < dm.L * dm.d; ++i) x[i] = bc.resid1[i] + bc.ff_out[i];
    }
    tr.final_in = x;

    // Final layer norm and tied projection, mask position only.
    tr.final_ln.resize(1, dm.d);
    const std::size_t flg = final_ln_gain_index(config.blocks);
    layernorm_forward(x.data() + pair.mask_position * dm.d, params.tensors[flg].data.data(),
                      params.tensors[flg + 1].data.data(), tr.final_ln.out.data(),
                      tr.final_ln.xhat.data(), tr.final_ln.rstd.data(), 1, dm.d);
    const double* out_bias = params.tensors[out_bias_index(config.blocks)].data.data();
    logits.resize(V);
    const double* y = tr.final_ln.out.data();
    for (std::size_t w = 0; w < V; ++w) {
        const double* row = tok_emb.data.data() + w * dm.d;
        double s = out_bias[w];
        for (std::size_t j = 0; j < dm.d; ++j) s += row[j] * y[j];
        logits[w] = s;
    }
}

struct PairLoss {
    double loss = 0.0;
    // Gradient w.r.t. the mask logits, supported on the six meta words.
    std::array<std::pair<std::int32_t, double>, 6> dlogits{};
};

PairLoss loss_from_logits(const std::vector<double>& logits, const MetaVerbalizer& mv,
                          AggregateMode mode, int y) {
    PairLoss out;
    if (mode == AggregateMode::Logits) {
        double a1 = 0.0, a0 = 0.0;
        for (const auto w : mv.positive) a1 += logits[static_cast<std::size_t>(w)];
        for (const auto w : mv.negative) a0 += logits[static_cast<std::size_t>(w)];
        const double s = a1 - a0;
        out.loss = y == 1 ? softplus(-s) : softplus(s);
        const double p1 = 1.0 / (1.0 + std::exp(-s));
        const double g = p1 - static_cast<double>(y);
        for (std::size_t i = 0; i < 3; ++i) {
            out.dlogits[i] = {mv.positive[i], g};
            out.dlogits[i + 3] = {mv.negative[i], -g};
        }
        return out;
    }

    // Probability aggregation: full softmax, then mass on each word set.
    std::vector<double> probs = logits;
    softmax_inplace(probs.data(), probs.size());
    double s1 = 0.0, s0 = 0.0;
    for (const auto w : mv.positive) s1 += probs[static_cast<std::size_t>(w)];
    for (const auto w : mv.negative) s0 += probs[static_cast<std::size_t>(w)];
    const double total = s1 + s0;
    if (total <= 0.0)
        fail(ErrorCode::Numeric, "degenerate distribution: no mass on the meta-verbalizer words");
    const double target = y == 1 ? s1 : s0;
    out.loss = std::log(total) - std::log(target);
    // d(loss)/d(logit_w) = p_w * g_w on the meta words, exactly 0 elsewhere.
    const double inv_target = 1.0 / target, inv_total = 1.0 / total;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto wp = static_cast<std::size_t>(mv.positive[i]);
        const auto wn = static_cast<std::size_t>(mv.negative[i]);
        const double gp = inv_total - (y == 1 ? inv_target : 0.0);
        const double gn = inv_total - (y == 0 ? inv_target : 0.0);
        out.dlogits[i] = {mv.positive[i], probs[wp] * gp};
        out.dlogits[i + 3] = {mv.negative[i], probs[wn] * gn};
    }
    return out;
}

// Backpropagates the mask-logit gradient through the trace into `grad`.
void backward_from_logits(const ParamSet& params, const TinyMLMConfig& config,
                          const prompting::PromptedPair& pair, const Trace& tr,
                          const std::array<std::pair<std::int32_t, double>, 6>& dlogits,
                          ParamSet& grad) {
    const auto& T = params.tensors;
    const Tensor& tok_emb = T[kTokEmb];
    Dims dm;
    dm.V = tok_emb.shape[0];
    dm.d = static_cast<std::size_t>(config.embed_dim);
    dm.H = static_cast<std::size_t>(config.heads);
    dm.dh = dm.d / dm.H;
    dm.F = static_cast<std::size_t>(config.resolved_ff_dim());
    dm.L = pair.tokens.size();
    dm.scale = 1.0 / std::sqrt(static_cast<double>(dm.dh));

    auto& G = grad.tensors;
    const std::size_t flg = final_ln_gain_index(config.blocks);
    const std::size_t obi = out_bias_index(config.blocks);

    // Tied projection backward.
    std::vector<double> dy(dm.d, 0.0);
    const double* yln = tr.final_ln.out.data();
    for (const auto& [w, g] : dlogits) {
        const std::size_t wi = static_cast<std::size_t>(w);
        G[obi].data[wi] += g;
        const double* row = tok_emb.data.data() + wi * dm.d;
        double* drow = G[kTokEmb].data.data() + wi * dm.d;
        for (std::size_t j = 0; j < dm.d; ++j) {
            dy[j] += g * row[j];
            drow[j] += g * yln[j];
        }
    }

    // Final LN backward (mask position only).
    std::vector<double> dx(dm.L * dm.d, 0.0);
    layernorm_backward(dy.data(), tr.final_ln.xhat.data(), tr.final_ln.rstd.data(),
                       T[flg].data.data(), dx.data() + pair.mask_position * dm.d,
                       G[flg].data.data(), G[flg + 1].data.data(), 1, dm.d);

    std::vector<double> dresid1(dm.L * dm.d), dffact(dm.L * dm.F), dffpre(dm.L * dm.F),
        dln2(dm.L * dm.d), dctx(dm.L * dm.d), dq(dm.L * dm.d), dk(dm.L * dm.d), dv(dm.L * dm.d),
        dln1(dm.L * dm.d), dxin(dm.L * dm.d);

    for (int b = config.blocks - 1; b >= 0; --b) {
        const BlockCache& bc = tr.blocks[static_cast<std::size_t>(b)];
        const std::size_t base = block_base(b);

        // x_out = resid1 + ff_out
        std::fill(dffact.begin(), dffact.end(), 0.0);
        linear_backward(bc.ff_act.data(), T[base + kW2].data.data(), dx.data(), dffact.data(),
                        G[base + kW2].data.data(), G[base + kB2].data.data(), dm.L, dm.F, dm.d);
        for (std::size_t i = 0; i < dm.L * dm.F; ++i)
            dffpre[i] = dffact[i] * gelu_grad(bc.ff_pre[i]);
        std::fill(dln2.begin(), dln2.end(), 0.0);
        linear_backward(bc.ln2.out.data(), T[base + kW1].data.data(), dffpre.data(), dln2.data(),
                        G[base + kW1].data.data(), G[base + kB1].data.data(), dm.L, dm.d, dm.F);
        dresid1 = dx;  // residual branch
        layernorm_backward(dln2.data(), bc.ln2.xhat.data(), bc.ln2.rstd.data(),
                           T[base + kLn2Gain].data.data(), dresid1.data(),
                           G[base + kLn2Gain].data.data(), G[base + kLn2Bias].data.data(), dm.L,
                           dm.d);

        // resid1 = x_in + attn_out
        std::fill(dctx.begin(), dctx.end(), 0.0);
        linear_backward(bc.ctx.data(), T[base + kWo].data.data(), dresid1.data(), dctx.data(),
                        G[base + kWo].data.data(), G[base + kBo].data.data(), dm.L, dm.d, dm.d);
        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        attention_backward(dm, bc.q.data(), bc.k.data(), bc.v.data(), bc.att.data(), dctx.data(),
                           dq.data(), dk.data(), dv.data());
        std::fill(dln1.begin(), dln1.end(), 0.0);
        linear_backward(bc.ln1.out.data(), T[base + kWq].data.data(), dq.data(), dln1.data(),
                        G[base + kWq].data.data(), G[base + kBq].data.data(), dm.L, dm.d, dm.d);
        linear_backward(bc.ln1.out.data(), T[base + kWk].data.data(), dk.data(), dln1.data(),
                        G[base + kWk].data.data(), G[base + kBk].data.data(), dm.L, dm.d, dm.d);
        linear_backward(bc.ln1.out.data(), T[base + kWv].data.data(), dv.data(), dln1.data(),
                        G[base + kWv].data.data(), G[base + kBv].data.data(), dm.L, dm.d, dm.d);
        dxin = dresid1;  // residual branch around attention
        layernorm_backward(dln1.data(), bc.ln1.xhat.data(), bc.ln1.rstd.data(),
                           T[base + kLn1Gain].data.data(), dxin.data(),
                           G[base + kLn1Gain].data.data(), G[base + kLn1Bias].data.data(), dm.L,
                           dm.d);
        dx = dxin;
    }

    // Embedding backward.
    double* dtok = G[kTokEmb].data.data();
    double* dpos = G[kPosEmb].data.data();
    for (std::size_t l = 0; l < dm.L; ++l) {
        const double* dxrow = dx.data() + l * dm.d;
        double* trow = dtok + static_cast<std::size_t>(pair.tokens[l]) * dm.d;
        double* prow = dpos + l * dm.d;
        for (std::size_t j = 0; j < dm.d; ++j) {
            trow[j] += dxrow[j];
            prow[j] += dxrow[j];
        }
    }
}

void check_labeled(std::span<const prompting::PromptedPair> batch) {
    if (batch.empty()) fail(ErrorCode::Precondition, "batch of prompted pairs is empty");
    for (const auto& pair : batch)
        if (!pair.y)
            fail(ErrorCode::Precondition, "pair (" + pair.left_id + ", " + pair.right_id +
                                              ") has no same-class label");
}

void add_scaled(ParamSet& dst, const ParamSet& src, double scale) {
    for (std::size_t t = 0; t < dst.tensors.size(); ++t) {
        double* d = dst.tensors[t].data.data();
        const double* s = src.tensors[t].data.data();
        const std::size_t n = dst.tensors[t].size();
        for (std::size_t i = 0; i < n; ++i) d[i] += scale * s[i];
    }
}

}  // namespace

TinyMLMScorer::TinyMLMScorer(corpus::Tokenizer tokenizer, prompting::PromptTemplate tmpl,
                             TinyMLMConfig config)
    : TinyMLMScorer(std::move(tokenizer), std::move(tmpl), config, ParamSet{}) {
    params_ = init_params(config_, tokenizer_.size());
}

TinyMLMScorer::TinyMLMScorer(corpus::Tokenizer tokenizer, prompting::PromptTemplate tmpl,
                             TinyMLMConfig config, ParamSet params)
    : tokenizer_(std::move(tokenizer)),
      template_(std::move(tmpl)),
      config_(config),
      meta_(MetaVerbalizer::resolve(tokenizer_)),
      params_(std::move(params)) {
    if (config_.embed_dim < 2 || config_.blocks < 1 || config_.heads < 1 ||
        config_.max_seq_len < 2)
        fail(ErrorCode::InvalidArgument, "invalid tiny-mlm architecture configuration");
    if (config_.embed_dim % config_.heads != 0)
        fail(ErrorCode::InvalidArgument, "embed_dim must be divisible by heads");
}

VocabDistribution TinyMLMScorer::f_vocab(const prompting::PromptedPair& pair) const {
    VocabDistribution dist;
    forward_mask_logits(params_, config_, pair, dist.probs, nullptr);
    softmax_inplace(dist.probs.data(), dist.probs.size());
    return dist;
}

BinomialRelevance TinyMLMScorer::pair_relevance(const prompting::PromptedPair& pair) const {
    return meta_verbalize(f_vocab(pair), meta_, config_.aggregate);
}

BinomialRelevance TinyMLMScorer::relevance(const corpus::Sample& a, const corpus::Sample& b) const {
    count_call();
    const auto a_tokens = tokenizer_.encode(a.text, template_.per_side_limit());
    const auto b_tokens = tokenizer_.encode(b.text, template_.per_side_limit());
    return pair_relevance(prompting::render_pair(template_, a_tokens, b_tokens));
}

double TinyMLMScorer::loss_with(const ParamSet& params,
                                std::span<const prompting::PromptedPair> batch) const {
    double total = 0.0;
    std::vector<double> logits;
    for (const auto& pair : batch) {
        forward_mask_logits(params, config_, pair, logits, nullptr);
        total += loss_from_logits(logits, meta_, config_.aggregate, *pair.y).loss;
    }
    return total / static_cast<double>(batch.size());
}

double TinyMLMScorer::pair_loss(std::span<const prompting::PromptedPair> batch) const {
    check_labeled(batch);
    return loss_with(params_, batch);
}

double TinyMLMScorer::loss_and_grad(const ParamSet& params,
                                    std::span<const prompting::PromptedPair> batch,
                                    ParamSet& grad) const {
    // Per-pair gradients land in their own buffers and are reduced in pair
    // order, so the result does not depend on the worker count.
    constexpr std::size_t kWave = 16;
    std::vector<ParamSet> slots;
    std::vector<double> losses(batch.size(), 0.0);
    const std::size_t n_slots = std::min<std::size_t>(kWave, batch.size());
    slots.reserve(n_slots);
    for (std::size_t i = 0; i < n_slots; ++i) slots.push_back(ParamSet::zeros_like(params));

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (std::size_t wave = 0; wave < batch.size(); wave += n_slots) {
        const std::size_t count = std::min(n_slots, batch.size() - wave);
        parallel_for(count, [&](std::size_t s) {
            for (Tensor& t : slots[s].tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
            const auto& pair = batch[wave + s];
            Trace trace;
            std::vector<double> logits;
            forward_mask_logits(params, config_, pair, logits, &trace);
            const PairLoss pl = loss_from_logits(logits, meta_, config_.aggregate, *pair.y);
            losses[wave + s] = pl.loss;
            backward_from_logits(params, config_, pair, trace, pl.dlogits, slots[s]);
        });
        for (std::size_t s = 0; s < count; ++s) add_scaled(grad, slots[s], inv_n);
    }
    double total = 0.0;
    for (const double l : losses) total += l;
    return total * inv_n;
}

TrainResult TinyMLMScorer::train(std::span<const prompting::PromptedPair> pairs,
                                 const TrainingConfig& config) {
    check_labeled(pairs);
    if (config.learning_rate <= 0.0) fail(ErrorCode::InvalidArgument, "learning rate must be > 0");
    if (config.batch_size < 1) fail(ErrorCode::InvalidArgument, "batch size must be >= 1");
    if (config.epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");

    ParamSet m = ParamSet::zeros_like(params_);
    ParamSet v = ParamSet::zeros_like(params_);
    ParamSet grad = ParamSet::zeros_like(params_);

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, "train-shuffle"));

    TrainResult result;
    result.epoch_mean_loss.reserve(static_cast<std::size_t>(config.epochs));
    std::vector<prompting::PromptedPair> batch;
    std::uint64_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) batch.push_back(pairs[order[i]]);

            for (Tensor& t : grad.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
            const double loss = loss_and_grad(params_, batch, grad);
            ++step;
            if (!std::isfinite(loss))
                fail(ErrorCode::Numeric, "non-finite loss at step " + std::to_string(step) +
                                             " (epoch " + std::to_string(epoch + 1) + ")");
            double grad_probe = 0.0;
            for (const Tensor& t : grad.tensors)
                for (const double g : t.data) grad_probe += g;
            if (!std::isfinite(grad_probe))
                fail(ErrorCode::Numeric, "non-finite gradient at step " + std::to_string(step) +
                                             " (epoch " + std::to_string(epoch + 1) + ")");
            epoch_loss += loss * static_cast<double>(batch.size());

            const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
            for (std::size_t t = 0; t < params_.tensors.size(); ++t) {
                double* p = params_.tensors[t].data.data();
                const double* g = grad.tensors[t].data.data();
                double* mt = m.tensors[t].data.data();
                double* vt = v.tensors[t].data.data();
                const bool decay = params_.tensors[t].decay;
                const std::size_t n = params_.tensors[t].size();
                for (std::size_t i = 0; i < n; ++i) {
                    mt[i] = kAdamBeta1 * mt[i] + (1.0 - kAdamBeta1) * g[i];
                    vt[i] = kAdamBeta2 * vt[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
                    const double mhat = mt[i] / bc1;
                    const double vhat = vt[i] / bc2;
                    double update = mhat / (std::sqrt(vhat) + kAdamEps);
                    if (decay) update += config.weight_decay * p[i];
                    p[i] -= config.learning_rate * update;
                }
            }
        }
        result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(pairs.size()));
    }
    result.steps = step;
    return result;
}

double TinyMLMScorer::grad_check(std::span<const prompting::PromptedPair> batch, double step,
                                 std::size_t max_coords_per_tensor, std::uint64_t coord_seed) const {
    check_labeled(batch);
    ParamSet analytic = ParamSet::zeros_like(params_);
    loss_and_grad(params_, batch, analytic);

    struct Coord {
        std::size_t tensor;
        std::size_t index;
    };
    std::vector<Coord> coords;
    for (std::size_t t = 0; t < params_.tensors.size(); ++t) {
        const std::size_t n = params_.tensors[t].size();
        if (max_coords_per_tensor == 0 || n <= max_coords_per_tensor) {
            for (std::size_t i = 0; i < n; ++i) coords.push_back({t, i});
        } else {
            Rng rng(derive_seed(coord_seed, params_.tensors[t].name));
            for (const std::size_t i : rng.sample_indices(n, max_coords_per_tensor))
                coords.push_back({t, i});
        }
    }

    std::vector<double> errors(coords.size(), 0.0);
    parallel_for(coords.size(), [&](std::size_t c) {
        ParamSet perturbed = params_;
        double& slot = perturbed.tensors[coords[c].tensor].data[coords[c].index];
        const double original = slot;
        slot = original + step;
        const double up = loss_with(perturbed, batch);
        slot = original - step;
        const double down = loss_with(perturbed, batch);
        const double numeric = (up - down) / (2.0 * step);
        const double exact = analytic.tensors[coords[c].tensor].data[coords[c].index];
        const double diff = std::abs(numeric - exact);
        errors[c] = diff <= 1e-8 ? 0.0 : diff / std::max(std::abs(numeric), std::abs(exact));
    });
    double worst = 0.0;
    for (const double e : errors) worst = std::max(worst, e);
    return worst;
}

double TinyMLMScorer::training_pair_accuracy(std::span<const prompting::PromptedPair> pairs) const {
    check_labeled(pairs);
    std::vector<int> correct(pairs.size(), 0);
    parallel_for(pairs.size(), [&](std::size_t i) {
        const double d = delta(pair_relevance(pairs[i]));
        correct[i] = ((d > 0.0) == (*pairs[i].y == 1)) ? 1 : 0;
    });
    double total = 0.0;
    for (const int c : correct) total += c;
    return total / static_cast<double>(pairs.size());
}

}  // namespace pairprompt::scoring
