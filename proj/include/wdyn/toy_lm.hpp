#pragma once

// A minimal decoder-only transformer with learned positional embeddings,
// untied embedding/unembedding, and blocks of the form
//     z^l = z^{l-1} + MHSA(LN1(z^{l-1})) + MLP(LN2(z^{l-1}))
// followed by a final LayerNorm and the unembedding W_U. Backpropagation is
// written out by hand. Everything is templated on the scalar type so gradient
// checks can run in double precision.

#include "wdyn/checkpoint_store.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wdyn::lm {

struct ModelConfig {
    int layers = 2;   // L
    int d_model = 32; // d
    int heads = 4;    // H
    int vocab = 256;  // v
    int n_ctx = 32;
    std::uint64_t seed = 0;

    void validate() const;
    int head_dim() const noexcept { return d_model / heads; }
    bool operator==(const ModelConfig&) const = default;
};

// config.json: {"L", "d", "H", "v", "n_ctx", "seed"}
ModelConfig parse_model_config(std::string_view json_text);
std::string model_config_json(const ModelConfig& cfg);

inline constexpr const char* kConfigFile = "config.json";

struct ParamSlot {
    std::string name;
    store::Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

// Offsets of every parameter tensor inside one flat buffer.
struct ParamLayout {
    struct Layer {
        std::size_t ln1_gain, ln1_bias;
        std::size_t w_q, w_k, w_v, w_o;
        std::size_t ln2_gain, ln2_bias;
        std::size_t w_in, b_in, w_out, b_out;
    };

    std::size_t w_e = 0;
    std::size_t w_p = 0;
    std::vector<Layer> layer;
    std::size_t lnf_gain = 0;
    std::size_t lnf_bias = 0;
    std::size_t w_u = 0;
    std::size_t total = 0;
    std::vector<ParamSlot> slots;

    explicit ParamLayout(const ModelConfig& cfg);
    const ParamSlot& slot(std::string_view name) const;
};

template <class Real>
struct BasicParams {
    ModelConfig config;
    ParamLayout layout;
    std::vector<Real> data;

    explicit BasicParams(const ModelConfig& cfg) : config(cfg), layout(cfg), data(layout.total, Real(0)) {}

    Real* at(std::size_t offset) noexcept { return data.data() + offset; }
    const Real* at(std::size_t offset) const noexcept { return data.data() + offset; }
    std::span<Real> tensor(std::string_view name) {
        const auto& s = layout.slot(name);
        return {data.data() + s.offset, s.size};
    }
    std::span<const Real> tensor(std::string_view name) const {
        const auto& s = layout.slot(name);
        return {data.data() + s.offset, s.size};
    }
};

using ModelParams = BasicParams<float>;
using TokenSequence = std::vector<int>;

// normal(0, 0.02) matrices, zero biases, unit LayerNorm gains.
ModelParams init_params(const ModelConfig& cfg);

template <class To, class From>
BasicParams<To> cast_params(const BasicParams<From>& p) {
    BasicParams<To> out(p.config);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        out.data[i] = static_cast<To>(p.data[i]);
    }
    return out;
}

// Logits for every position, row-major (len x v). Tokens must be non-empty,
// within the vocabulary, and at most n_ctx long.
template <class Real>
std::vector<Real> forward(const BasicParams<Real>& params, std::span<const int> tokens);

template <class Real>
struct LossAndGrad {
    Real loss = 0;
    std::vector<Real> grad; // same layout as params.data
};

// Mean next-token cross-entropy of tokens[1..n) given their prefixes. The model
// runs on tokens[0..n-1), so 2 <= n <= n_ctx + 1.
template <class Real>
LossAndGrad<Real> loss_and_grad(const BasicParams<Real>& params, std::span<const int> tokens);

template <class Real>
Real loss_only(const BasicParams<Real>& params, std::span<const int> tokens);

// Incremental decoder with a key/value cache; feeding tokens one at a time
// yields the same logits as forward() on the whole prefix.
class Decoder {
public:
    explicit Decoder(const ModelParams& params);

    // Appends a token and returns the logits for the next position.
    std::span<const float> push(int token);
    std::size_t length() const noexcept { return len_; }

private:
    const ModelParams& params_;
    std::size_t len_ = 0;
    std::vector<float> keys_;   // [layer][pos][d]
    std::vector<float> values_; // [layer][pos][d]
    std::vector<float> logits_;
};

struct Generation {
    TokenSequence tokens;       // prefix followed by n generated tokens
    std::vector<float> logits;  // n x v: the row each generated token was taken from
};

// Greedy decoding; ties go to the lowest token id. |prefix| + n <= n_ctx.
Generation generate(const ModelParams& params, std::span<const int> prefix, int n);

struct TrainOptions {
    int steps = 2000;
    int checkpoint_every = 100;
    int batch = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainResult {
    store::CheckpointSeries series;
    std::vector<float> losses; // mean batch loss per optimizer step
};

// Byte-level tokens (v = 256). Windows of n_ctx + 1 bytes are sampled from the
// seed, Adam updates the f32 parameters, and checkpoints are written at step 0,
// every checkpoint_every steps, and at the final step, with config.json.
TrainResult train(const ModelConfig& cfg, std::span<const std::uint8_t> corpus, const TrainOptions& options,
                  const std::filesystem::path& out_dir);

store::TensorMap params_to_tensors(const ModelParams& params);
ModelParams params_from_checkpoint(const store::CheckpointFile& file, const ModelConfig& cfg);
ModelConfig load_model_config(const std::filesystem::path& series_dir);

TokenSequence bytes_to_tokens(std::string_view text);

} // namespace wdyn::lm
