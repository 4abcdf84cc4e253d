#include "wdyn/toy_lm.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"
#include "wdyn/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace wdyn::lm {

// ---------------------------------------------------------------------------
// Configuration and layout

void ModelConfig::validate() const {
    if (layers < 0) {
        throw UsageError("model config: L must be >= 0");
    }
    if (d_model < 1 || heads < 1 || d_model % heads != 0) {
        throw UsageError("model config: d must be a positive multiple of H");
    }
    if (vocab < 2) {
        throw UsageError("model config: v must be >= 2");
    }
    if (n_ctx < 2) {
        throw UsageError("model config: n_ctx must be >= 2");
    }
}

ModelConfig parse_model_config(std::string_view json_text) {
    ModelConfig cfg;
    try {
        const auto j = nlohmann::json::parse(json_text);
        cfg.layers = j.at("L").get<int>();
        cfg.d_model = j.at("d").get<int>();
        cfg.heads = j.at("H").get<int>();
        cfg.vocab = j.value("v", 256);
        cfg.n_ctx = j.at("n_ctx").get<int>();
        cfg.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string model_config_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["L"] = cfg.layers;
    j["d"] = cfg.d_model;
    j["H"] = cfg.heads;
    j["v"] = cfg.vocab;
    j["n_ctx"] = cfg.n_ctx;
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
    cfg.validate();
    const auto d = static_cast<std::int64_t>(cfg.d_model);
    const auto v = static_cast<std::int64_t>(cfg.vocab);
    const auto n = static_cast<std::int64_t>(cfg.n_ctx);
    auto add = [this](std::string name, store::Shape shape) {
        const std::size_t size = store::element_count(shape);
        slots.push_back({std::move(name), std::move(shape), total, size});
        total += size;
        return slots.back().offset;
    };
    w_e = add("W_E", {v, d});
    w_p = add("W_P", {n, d});
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        Layer lay{};
        lay.ln1_gain = add(p + "ln1.gain", {d});
        lay.ln1_bias = add(p + "ln1.bias", {d});
        lay.w_q = add(p + "attn.W_Q", {d, d});
        lay.w_k = add(p + "attn.W_K", {d, d});
        lay.w_v = add(p + "attn.W_V", {d, d});
        lay.w_o = add(p + "attn.W_O", {d, d});
        lay.ln2_gain = add(p + "ln2.gain", {d});
        lay.ln2_bias = add(p + "ln2.bias", {d});
        lay.w_in = add(p + "mlp.W_in", {d, 4 * d});
        lay.b_in = add(p + "mlp.b_in", {4 * d});
        lay.w_out = add(p + "mlp.W_out", {4 * d, d});
        lay.b_out = add(p + "mlp.b_out", {d});
        layer.push_back(lay);
    }
    lnf_gain = add("ln_f.gain", {d});
    lnf_bias = add("ln_f.bias", {d});
    w_u = add("W_U", {d, v});
}

const ParamSlot& ParamLayout::slot(std::string_view name) const {
    for (const auto& s : slots) {
        if (s.name == name) {
            return s;
        }
    }
    throw DataError("unknown parameter '" + std::string(name) + "'");
}

ModelParams init_params(const ModelConfig& cfg) {
    ModelParams p(cfg);
    for (const auto& s : p.layout.slots) {
        const bool gain = s.name.ends_with(".gain");
        const bool bias = s.shape.size() == 1 && !gain;
        for (std::size_t i = 0; i < s.size; ++i) {
            float value = 0.0f;
            if (gain) {
                value = 1.0f;
            } else if (!bias) {
                value = static_cast<float>(0.02 * rng::normal(cfg.seed, rng::Stream::model_init, s.offset + i, 0));
            }
            p.data[s.offset + i] = value;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

constexpr double kLayerNormEps = 1e-5;

// y = x W (+ y when accumulate), W row-major (in x out)
template <class R>
void vec_mat(const R* x, const R* w, std::size_t in, std::size_t out, R* y, bool accumulate = false) {
    if (!accumulate) {
        std::fill(y, y + out, R(0));
    }
    for (std::size_t i = 0; i < in; ++i) {
        const R xi = x[i];
        const R* row = w + i * out;
        for (std::size_t j = 0; j < out; ++j) {
            y[j] += xi * row[j];
        }
    }
}

// dx += W dy
template <class R>
void mat_vec_acc(const R* w, const R* dy, std::size_t in, std::size_t out, R* dx) {
    for (std::size_t i = 0; i < in; ++i) {
        const R* row = w + i * out;
        R s = 0;
        for (std::size_t j = 0; j < out; ++j) {
            s += row[j] * dy[j];
        }
        dx[i] += s;
    }
}

// dW += x^T dy
template <class R>
void outer_acc(const R* x, const R* dy, std::size_t in, std::size_t out, R* dw) {
    for (std::size_t i = 0; i < in; ++i) {
        const R xi = x[i];
        R* row = dw + i * out;
        for (std::size_t j = 0; j < out; ++j) {
            row[j] += xi * dy[j];
        }
    }
}

template <class R>
void layer_norm(const R* x, const R* gain, const R* bias, std::size_t d, R* xhat, R* y, R& rstd_out) {
    R mean = 0;
    for (std::size_t i = 0; i < d; ++i) {
        mean += x[i];
    }
    mean /= R(d);
    R var = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const R c = x[i] - mean;
        var += c * c;
    }
    var /= R(d);
    const R rstd = R(1) / std::sqrt(var + R(kLayerNormEps));
    for (std::size_t i = 0; i < d; ++i) {
        xhat[i] = (x[i] - mean) * rstd;
        y[i] = xhat[i] * gain[i] + bias[i];
    }
    rstd_out = rstd;
}

template <class R>
void layer_norm_backward(const R* dy, const R* xhat, R rstd, const R* gain, std::size_t d, R* dx, R* dgain,
                         R* dbias) {
    R mean_dxhat = 0;
    R mean_dxhat_xhat = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const R g = dy[i] * gain[i];
        mean_dxhat += g;
        mean_dxhat_xhat += g * xhat[i];
        dgain[i] += dy[i] * xhat[i];
        dbias[i] += dy[i];
    }
    mean_dxhat /= R(d);
    mean_dxhat_xhat /= R(d);
    for (std::size_t i = 0; i < d; ++i) {
        dx[i] += rstd * (dy[i] * gain[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <class R>
R gelu(R x) {
    return R(0.5) * x * (R(1) + std::tanh(R(kGeluC) * (x + R(kGeluA) * x * x * x)));
}

template <class R>
R gelu_grad(R x) {
    const R th = std::tanh(R(kGeluC) * (x + R(kGeluA) * x * x * x));
    return R(0.5) * (R(1) + th) + R(0.5) * x * (R(1) - th * th) * R(kGeluC) * (R(1) + R(3 * kGeluA) * x * x);
}

// Causal attention output for query position t over keys/values 0..t of one
// head; probs receives t + 1 weights.
template <class R>
void attend(const R* q, const R* keys, const R* values, std::size_t t, std::size_t stride, std::size_t head_off,
            std::size_t hd, R scale, R* probs, R* out) {
    R mx = -std::numeric_limits<R>::infinity();
    for (std::size_t u = 0; u <= t; ++u) {
        const R* k = keys + u * stride + head_off;
        R s = 0;
        for (std::size_t c = 0; c < hd; ++c) {
            s += q[head_off + c] * k[c];
        }
        probs[u] = s * scale;
        mx = std::max(mx, probs[u]);
    }
    R z = 0;
    for (std::size_t u = 0; u <= t; ++u) {
        probs[u] = std::exp(probs[u] - mx);
        z += probs[u];
    }
    for (std::size_t c = 0; c < hd; ++c) {
        out[head_off + c] = 0;
    }
    for (std::size_t u = 0; u <= t; ++u) {
        probs[u] /= z;
        const R* vv = values + u * stride + head_off;
        for (std::size_t c = 0; c < hd; ++c) {
            out[head_off + c] += probs[u] * vv[c];
        }
    }
}

void check_tokens(const ModelConfig& cfg, std::span<const int> tokens, std::size_t max_len) {
    if (tokens.empty()) {
        throw DataError("empty token sequence");
    }
    if (tokens.size() > max_len) {
        throw DataError("sequence too long: " + std::to_string(tokens.size()) + " tokens, limit " +
                        std::to_string(max_len));
    }
    for (int t : tokens) {
        if (t < 0 || t >= cfg.vocab) {
            throw DataError("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(cfg.vocab));
        }
    }
}

template <class R>
struct LayerCache {
    std::vector<R> ln1_xhat, ln1_rstd, h1, q, k, v, probs, o;
    std::vector<R> ln2_xhat, ln2_rstd, h2, u, g;
};

template <class R>
struct Activations {
    std::size_t n = 0;
    std::vector<R> x; // (L + 1) x n x d residual stream
    std::vector<LayerCache<R>> layers;
    std::vector<R> lnf_xhat, lnf_rstd, hf, logits;
};

template <class R>
Activations<R> run_forward(const BasicParams<R>& p, std::span<const int> tokens) {
    const ModelConfig& cfg = p.config;
    check_tokens(cfg, tokens, static_cast<std::size_t>(cfg.n_ctx));
    const std::size_t n = tokens.size();
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto v = static_cast<std::size_t>(cfg.vocab);
    const auto H = static_cast<std::size_t>(cfg.heads);
    const std::size_t hd = d / H;
    const std::size_t L = static_cast<std::size_t>(cfg.layers);
    const R scale = R(1) / std::sqrt(R(hd));

    Activations<R> a;
    a.n = n;
    a.x.assign((L + 1) * n * d, R(0));
    for (std::size_t t = 0; t < n; ++t) {
        const R* e = p.at(p.layout.w_e) + static_cast<std::size_t>(tokens[t]) * d;
        const R* pos = p.at(p.layout.w_p) + t * d;
        for (std::size_t i = 0; i < d; ++i) {
            a.x[t * d + i] = e[i] + pos[i];
        }
    }

    a.layers.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        const auto& off = p.layout.layer[l];
        LayerCache<R>& c = a.layers[l];
        const R* x = a.x.data() + l * n * d;
        R* x_next = a.x.data() + (l + 1) * n * d;
        c.ln1_xhat.resize(n * d);
        c.ln1_rstd.resize(n);
        c.h1.resize(n * d);
        c.q.resize(n * d);
        c.k.resize(n * d);
        c.v.resize(n * d);
        c.probs.assign(H * n * n, R(0));
        c.o.resize(n * d);
        c.ln2_xhat.resize(n * d);
        c.ln2_rstd.resize(n);
        c.h2.resize(n * d);
        c.u.resize(n * 4 * d);
        c.g.resize(n * 4 * d);
        std::vector<R> branch(d);
        std::vector<R> mlp(d);

        for (std::size_t t = 0; t < n; ++t) {
            layer_norm(x + t * d, p.at(off.ln1_gain), p.at(off.ln1_bias), d, &c.ln1_xhat[t * d], &c.h1[t * d],
                       c.ln1_rstd[t]);
            vec_mat(&c.h1[t * d], p.at(off.w_q), d, d, &c.q[t * d]);
            vec_mat(&c.h1[t * d], p.at(off.w_k), d, d, &c.k[t * d]);
            vec_mat(&c.h1[t * d], p.at(off.w_v), d, d, &c.v[t * d]);
            for (std::size_t h = 0; h < H; ++h) {
                attend(&c.q[t * d], c.k.data(), c.v.data(), t, d, h * hd, hd, scale, &c.probs[(h * n + t) * n],
                       &c.o[t * d]);
            }
            vec_mat(&c.o[t * d], p.at(off.w_o), d, d, branch.data());

            layer_norm(x + t * d, p.at(off.ln2_gain), p.at(off.ln2_bias), d, &c.ln2_xhat[t * d], &c.h2[t * d],
                       c.ln2_rstd[t]);
            R* u = &c.u[t * 4 * d];
            std::copy(p.at(off.b_in), p.at(off.b_in) + 4 * d, u);
            vec_mat(&c.h2[t * d], p.at(off.w_in), d, 4 * d, u, true);
            for (std::size_t j = 0; j < 4 * d; ++j) {
                c.g[t * 4 * d + j] = gelu(u[j]);
            }
            std::copy(p.at(off.b_out), p.at(off.b_out) + d, mlp.begin());
            vec_mat(&c.g[t * 4 * d], p.at(off.w_out), 4 * d, d, mlp.data(), true);
            for (std::size_t i = 0; i < d; ++i) {
                x_next[t * d + i] = x[t * d + i] + branch[i] + mlp[i];
            }
        }
    }

    const R* xl = a.x.data() + L * n * d;
    a.lnf_xhat.resize(n * d);
    a.lnf_rstd.resize(n);
    a.hf.resize(n * d);
    a.logits.resize(n * v);
    for (std::size_t t = 0; t < n; ++t) {
        layer_norm(xl + t * d, p.at(p.layout.lnf_gain), p.at(p.layout.lnf_bias), d, &a.lnf_xhat[t * d],
                   &a.hf[t * d], a.lnf_rstd[t]);
        vec_mat(&a.hf[t * d], p.at(p.layout.w_u), d, v, &a.logits[t * v]);
    }
    return a;
}

template <class R>
R cross_entropy(const Activations<R>& a, std::span<const int> tokens, std::size_t v, std::vector<R>* dlogits) {
    const std::size_t targets = tokens.size() - 1;
    if (dlogits != nullptr) {
        dlogits->assign(a.n * v, R(0));
    }
    R total = 0;
    for (std::size_t t = 0; t < targets; ++t) {
        const R* row = &a.logits[t * v];
        const R mx = *std::max_element(row, row + v);
        R z = 0;
        for (std::size_t j = 0; j < v; ++j) {
            z += std::exp(row[j] - mx);
        }
        const auto target = static_cast<std::size_t>(tokens[t + 1]);
        total += std::log(z) + mx - row[target];
        if (dlogits != nullptr) {
            R* g = &(*dlogits)[t * v];
            for (std::size_t j = 0; j < v; ++j) {
                g[j] = std::exp(row[j] - mx) / z / R(targets);
            }
            g[target] -= R(1) / R(targets);
        }
    }
    return total / R(targets);
}

} // namespace

// ---------------------------------------------------------------------------
// Forward / backward

template <class R>
std::vector<R> forward(const BasicParams<R>& params, std::span<const int> tokens) {
    return run_forward(params, tokens).logits;
}

template <class R>
R loss_only(const BasicParams<R>& params, std::span<const int> tokens) {
    if (tokens.size() < 2) {
        throw DataError("need >= 2 tokens");
    }
    check_tokens(params.config, tokens, static_cast<std::size_t>(params.config.n_ctx) + 1);
    const auto a = run_forward(params, tokens.first(tokens.size() - 1));
    return cross_entropy<R>(a, tokens, static_cast<std::size_t>(params.config.vocab), nullptr);
}

template <class R>
LossAndGrad<R> loss_and_grad(const BasicParams<R>& p, std::span<const int> tokens) {
    if (tokens.size() < 2) {
        throw DataError("need >= 2 tokens");
    }
    const ModelConfig& cfg = p.config;
    check_tokens(cfg, tokens, static_cast<std::size_t>(cfg.n_ctx) + 1);
    const auto a = run_forward(p, tokens.first(tokens.size() - 1));
    const std::size_t n = a.n;
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto v = static_cast<std::size_t>(cfg.vocab);
    const auto H = static_cast<std::size_t>(cfg.heads);
    const std::size_t hd = d / H;
    const std::size_t L = static_cast<std::size_t>(cfg.layers);
    const R scale = R(1) / std::sqrt(R(hd));

    LossAndGrad<R> out;
    std::vector<R> dlogits;
    out.loss = cross_entropy(a, tokens, v, &dlogits);
    out.grad.assign(p.data.size(), R(0));
    auto G = [&](std::size_t offset) { return out.grad.data() + offset; };

    // unembedding and final norm
    std::vector<R> dx(n * d, R(0));
    {
        std::vector<R> dhf(d);
        for (std::size_t t = 0; t < n; ++t) {
            outer_acc(&a.hf[t * d], &dlogits[t * v], d, v, G(p.layout.w_u));
            std::fill(dhf.begin(), dhf.end(), R(0));
            mat_vec_acc(p.at(p.layout.w_u), &dlogits[t * v], d, v, dhf.data());
            layer_norm_backward(dhf.data(), &a.lnf_xhat[t * d], a.lnf_rstd[t], p.at(p.layout.lnf_gain), d,
                                &dx[t * d], G(p.layout.lnf_gain), G(p.layout.lnf_bias));
        }
    }

    for (std::size_t li = L; li-- > 0;) {
        const auto& off = p.layout.layer[li];
        const LayerCache<R>& c = a.layers[li];
        // dx holds dL/dz^{l}; residual passes it straight through
        std::vector<R> dx_prev = dx;

        // MLP branch
        std::vector<R> dg(4 * d);
        std::vector<R> dh2(n * d, R(0));
        for (std::size_t t = 0; t < n; ++t) {
            const R* dm = &dx[t * d];
            R* db_out = G(off.b_out);
            for (std::size_t i = 0; i < d; ++i) {
                db_out[i] += dm[i];
            }
            outer_acc(&c.g[t * 4 * d], dm, 4 * d, d, G(off.w_out));
            std::fill(dg.begin(), dg.end(), R(0));
            mat_vec_acc(p.at(off.w_out), dm, 4 * d, d, dg.data());
            R* db_in = G(off.b_in);
            for (std::size_t j = 0; j < 4 * d; ++j) {
                dg[j] *= gelu_grad(c.u[t * 4 * d + j]);
                db_in[j] += dg[j];
            }
            outer_acc(&c.h2[t * d], dg.data(), d, 4 * d, G(off.w_in));
            mat_vec_acc(p.at(off.w_in), dg.data(), d, 4 * d, &dh2[t * d]);
            layer_norm_backward(&dh2[t * d], &c.ln2_xhat[t * d], c.ln2_rstd[t], p.at(off.ln2_gain), d,
                                &dx_prev[t * d], G(off.ln2_gain), G(off.ln2_bias));
        }

        // attention branch
        std::vector<R> d_o(n * d, R(0));
        for (std::size_t t = 0; t < n; ++t) {
            outer_acc(&c.o[t * d], &dx[t * d], d, d, G(off.w_o));
            mat_vec_acc(p.at(off.w_o), &dx[t * d], d, d, &d_o[t * d]);
        }
        std::vector<R> dq(n * d, R(0));
        std::vector<R> dk(n * d, R(0));
        std::vector<R> dv(n * d, R(0));
        std::vector<R> dp(n);
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t ho = h * hd;
            for (std::size_t t = 0; t < n; ++t) {
                const R* probs = &c.probs[(h * n + t) * n];
                R dot = 0;
                for (std::size_t u = 0; u <= t; ++u) {
                    R s = 0;
                    for (std::size_t cc = 0; cc < hd; ++cc) {
                        s += d_o[t * d + ho + cc] * c.v[u * d + ho + cc];
                        dv[u * d + ho + cc] += probs[u] * d_o[t * d + ho + cc];
                    }
                    dp[u] = s;
                    dot += probs[u] * s;
                }
                for (std::size_t u = 0; u <= t; ++u) {
                    const R ds = probs[u] * (dp[u] - dot) * scale;
                    for (std::size_t cc = 0; cc < hd; ++cc) {
                        dq[t * d + ho + cc] += ds * c.k[u * d + ho + cc];
                        dk[u * d + ho + cc] += ds * c.q[t * d + ho + cc];
                    }
                }
            }
        }
        std::vector<R> dh1(d);
        for (std::size_t t = 0; t < n; ++t) {
            outer_acc(&c.h1[t * d], &dq[t * d], d, d, G(off.w_q));
            outer_acc(&c.h1[t * d], &dk[t * d], d, d, G(off.w_k));
            outer_acc(&c.h1[t * d], &dv[t * d], d, d, G(off.w_v));
            std::fill(dh1.begin(), dh1.end(), R(0));
            mat_vec_acc(p.at(off.w_q), &dq[t * d], d, d, dh1.data());
            mat_vec_acc(p.at(off.w_k), &dk[t * d], d, d, dh1.data());
            mat_vec_acc(p.at(off.w_v), &dv[t * d], d, d, dh1.data());
            layer_norm_backward(dh1.data(), &c.ln1_xhat[t * d], c.ln1_rstd[t], p.at(off.ln1_gain), d,
                                &dx_prev[t * d], G(off.ln1_gain), G(off.ln1_bias));
        }
        dx = std::move(dx_prev);
    }

    // embeddings
    for (std::size_t t = 0; t < n; ++t) {
        R* de = G(p.layout.w_e) + static_cast<std::size_t>(tokens[t]) * d;
        R* dpos = G(p.layout.w_p) + t * d;
        for (std::size_t i = 0; i < d; ++i) {
            de[i] += dx[t * d + i];
            dpos[i] += dx[t * d + i];
        }
    }
    return out;
}

template std::vector<float> forward(const BasicParams<float>&, std::span<const int>);
template std::vector<double> forward(const BasicParams<double>&, std::span<const int>);
template LossAndGrad<float> loss_and_grad(const BasicParams<float>&, std::span<const int>);
template LossAndGrad<double> loss_and_grad(const BasicParams<double>&, std::span<const int>);
template float loss_only(const BasicParams<float>&, std::span<const int>);
template double loss_only(const BasicParams<double>&, std::span<const int>);

// ---------------------------------------------------------------------------
// Incremental decoding

Decoder::Decoder(const ModelParams& params)
    : params_(params),
      keys_(static_cast<std::size_t>(params.config.layers * params.config.n_ctx * params.config.d_model)),
      values_(keys_.size()),
      logits_(static_cast<std::size_t>(params.config.vocab)) {}

std::span<const float> Decoder::push(int token) {
    const ModelConfig& cfg = params_.config;
    const ModelParams& p = params_;
    if (len_ >= static_cast<std::size_t>(cfg.n_ctx)) {
        throw DataError("sequence too long: context holds " + std::to_string(cfg.n_ctx) + " tokens");
    }
    if (token < 0 || token >= cfg.vocab) {
        throw DataError("token id " + std::to_string(token) + " outside vocabulary of " + std::to_string(cfg.vocab));
    }
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto v = static_cast<std::size_t>(cfg.vocab);
    const auto H = static_cast<std::size_t>(cfg.heads);
    const std::size_t hd = d / H;
    const std::size_t n_ctx = static_cast<std::size_t>(cfg.n_ctx);
    const float scale = 1.0f / std::sqrt(float(hd));
    const std::size_t t = len_;

    std::vector<float> x(d), xhat(d), h(d), q(d), o(d), branch(d), mlp(d), u(4 * d), g(4 * d), probs(t + 1);
    const float* e = p.at(p.layout.w_e) + static_cast<std::size_t>(token) * d;
    const float* pos = p.at(p.layout.w_p) + t * d;
    for (std::size_t i = 0; i < d; ++i) {
        x[i] = e[i] + pos[i];
    }
    float rstd = 0.0f;
    for (std::size_t l = 0; l < p.layout.layer.size(); ++l) {
        const auto& off = p.layout.layer[l];
        float* keys = keys_.data() + l * n_ctx * d;
        float* values = values_.data() + l * n_ctx * d;
        layer_norm(x.data(), p.at(off.ln1_gain), p.at(off.ln1_bias), d, xhat.data(), h.data(), rstd);
        vec_mat(h.data(), p.at(off.w_q), d, d, q.data());
        vec_mat(h.data(), p.at(off.w_k), d, d, keys + t * d);
        vec_mat(h.data(), p.at(off.w_v), d, d, values + t * d);
        for (std::size_t hh = 0; hh < H; ++hh) {
            attend(q.data(), keys, values, t, d, hh * hd, hd, scale, probs.data(), o.data());
        }
        vec_mat(o.data(), p.at(off.w_o), d, d, branch.data());

        layer_norm(x.data(), p.at(off.ln2_gain), p.at(off.ln2_bias), d, xhat.data(), h.data(), rstd);
        std::copy(p.at(off.b_in), p.at(off.b_in) + 4 * d, u.begin());
        vec_mat(h.data(), p.at(off.w_in), d, 4 * d, u.data(), true);
        for (std::size_t j = 0; j < 4 * d; ++j) {
            g[j] = gelu(u[j]);
        }
        std::copy(p.at(off.b_out), p.at(off.b_out) + d, mlp.begin());
        vec_mat(g.data(), p.at(off.w_out), 4 * d, d, mlp.data(), true);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = x[i] + branch[i] + mlp[i];
        }
    }
    layer_norm(x.data(), p.at(p.layout.lnf_gain), p.at(p.layout.lnf_bias), d, xhat.data(), h.data(), rstd);
    vec_mat(h.data(), p.at(p.layout.w_u), d, v, logits_.data());
    ++len_;
    return logits_;
}

Generation generate(const ModelParams& params, std::span<const int> prefix, int n) {
    const ModelConfig& cfg = params.config;
    if (n < 0) {
        throw UsageError("generation length must be >= 0");
    }
    if (prefix.empty()) {
        throw DataError("empty prefix");
    }
    if (prefix.size() + static_cast<std::size_t>(n) > static_cast<std::size_t>(cfg.n_ctx)) {
        throw DataError("length overflow: prefix + generated tokens exceed n_ctx");
    }
    check_tokens(cfg, prefix, static_cast<std::size_t>(cfg.n_ctx));
    const auto v = static_cast<std::size_t>(cfg.vocab);

    Generation out;
    out.tokens.assign(prefix.begin(), prefix.end());
    out.logits.reserve(static_cast<std::size_t>(n) * v);
    if (n == 0) {
        return out;
    }
    Decoder decoder(params);
    std::span<const float> row;
    for (int tok : prefix) {
        row = decoder.push(tok);
    }
    for (int i = 0; i < n; ++i) {
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        out.logits.insert(out.logits.end(), row.begin(), row.end());
        out.tokens.push_back(best);
        if (i + 1 < n) {
            row = decoder.push(best);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint conversion

store::TensorMap params_to_tensors(const ModelParams& params) {
    store::TensorMap tensors;
    for (const auto& s : params.layout.slots) {
        tensors.emplace(s.name, store::Tensor::f32(s.shape, std::span<const float>(params.data).subspan(s.offset, s.size)));
    }
    return tensors;
}

ModelParams params_from_checkpoint(const store::CheckpointFile& file, const ModelConfig& cfg) {
    ModelParams params(cfg);
    for (const auto& s : params.layout.slots) {
        const auto& meta = file.meta(s.name);
        if (meta.shape != s.shape) {
            throw DataError("checkpoint tensor '" + s.name + "' does not match the model config");
        }
        file.read_strided(s.name, 1, std::span<float>(params.data).subspan(s.offset, s.size));
    }
    return params;
}

ModelConfig load_model_config(const std::filesystem::path& series_dir) {
    const auto path = series_dir / kConfigFile;
    if (!std::filesystem::exists(path)) {
        throw DataError("no " + std::string(kConfigFile) + " in " + series_dir.string());
    }
    try {
        return parse_model_config(io::read_file(path));
    } catch (const UsageError& e) {
        throw DataError(e.what());
    }
}

TokenSequence bytes_to_tokens(std::string_view text) {
    TokenSequence out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(static_cast<int>(static_cast<unsigned char>(c)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const ModelConfig& cfg, std::span<const std::uint8_t> corpus, const TrainOptions& options,
                  const std::filesystem::path& out_dir) {
    cfg.validate();
    if (cfg.vocab != 256) {
        throw UsageError("byte-level training needs v = 256");
    }
    if (options.steps < 0 || options.checkpoint_every < 1 || options.batch < 1 || !(options.lr > 0.0)) {
        throw UsageError("invalid training options");
    }
    const std::size_t window = static_cast<std::size_t>(cfg.n_ctx) + 1;
    if (corpus.size() < window) {
        throw DataError("corpus too short: need at least n_ctx + 1 = " + std::to_string(window) + " bytes");
    }

    std::vector<std::int64_t> ckpt_steps{0};
    for (int s = 1; s <= options.steps; ++s) {
        if (s % options.checkpoint_every == 0 || s == options.steps) {
            ckpt_steps.push_back(s);
        }
    }
    store::prepare_series_dir(out_dir, ckpt_steps);
    io::write_file_atomic(out_dir / kConfigFile, model_config_json(cfg));

    ModelParams params = init_params(cfg);
    auto save = [&](std::int64_t step) {
        store::write_checkpoint(step, params_to_tensors(params), out_dir / store::checkpoint_filename(step));
    };
    save(0);

    const std::size_t P = params.data.size();
    std::vector<float> m(P, 0.0f);
    std::vector<float> vel(P, 0.0f);
    const std::size_t starts = corpus.size() - window + 1;
    const auto B = static_cast<std::size_t>(options.batch);

    TrainResult result;
    result.losses.reserve(static_cast<std::size_t>(options.steps));
    std::vector<LossAndGrad<float>> parts(B);
    std::vector<float> grad(P);
    for (int step = 1; step <= options.steps; ++step) {
        parallel_for(B, [&](std::size_t b) {
            const double u = rng::uniform(cfg.seed, rng::Stream::batch_sampling, static_cast<std::uint64_t>(step),
                                          static_cast<std::uint32_t>(b));
            const auto start = std::min(starts - 1, static_cast<std::size_t>(u * double(starts)));
            std::vector<int> tokens(window);
            for (std::size_t i = 0; i < window; ++i) {
                tokens[i] = corpus[start + i];
            }
            parts[b] = loss_and_grad(params, tokens);
        });
        std::fill(grad.begin(), grad.end(), 0.0f);
        double loss = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            loss += parts[b].loss;
            for (std::size_t i = 0; i < P; ++i) {
                grad[i] += parts[b].grad[i];
            }
        }
        result.losses.push_back(static_cast<float>(loss / double(B)));

        const float b1 = static_cast<float>(options.beta1);
        const float b2 = static_cast<float>(options.beta2);
        const auto c1 = static_cast<float>(1.0 - std::pow(options.beta1, step));
        const auto c2 = static_cast<float>(1.0 - std::pow(options.beta2, step));
        const auto lr = static_cast<float>(options.lr);
        const auto eps = static_cast<float>(options.eps);
        const float inv_b = 1.0f / float(B);
        for (std::size_t i = 0; i < P; ++i) {
            const float g = grad[i] * inv_b;
            m[i] = b1 * m[i] + (1.0f - b1) * g;
            vel[i] = b2 * vel[i] + (1.0f - b2) * g * g;
            params.data[i] -= lr * (m[i] / c1) / (std::sqrt(vel[i] / c2) + eps);
        }

        if (step % options.checkpoint_every == 0 || step == options.steps) {
            save(step);
        }
    }
    result.series = store::open_series(out_dir);
    return result;
}

} // namespace wdyn::lm
