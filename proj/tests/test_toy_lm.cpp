#include "helpers.hpp"
#include "oracles.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"
#include "wdyn/toy_lm.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>

using namespace wdyn;
using wdyn::testing::TempDir;

namespace {

lm::ModelConfig config(int layers, int d, int heads, int vocab, int n_ctx) {
    lm::ModelConfig cfg;
    cfg.layers = layers;
    cfg.d_model = d;
    cfg.heads = heads;
    cfg.vocab = vocab;
    cfg.n_ctx = n_ctx;
    cfg.seed = 3;
    return cfg;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) {
    return {s.begin(), s.end()};
}

std::string repeat(const std::string& unit, std::size_t total) {
    std::string out;
    while (out.size() < total) {
        out += unit;
    }
    out.resize(total);
    return out;
}

} // namespace

TEST_SUITE("toy_lm") {

TEST_CASE("layout and initialisation") {
    const auto cfg = config(2, 8, 2, 16, 10);
    const lm::ParamLayout layout(cfg);
    const std::size_t d = 8, v = 16, n = 10;
    const std::size_t per_layer = 4 * d + 4 * d * d + d * 4 * d + 4 * d + 4 * d * d + d;
    CHECK(layout.total == v * d + n * d + 2 * per_layer + 2 * d + d * v);
    CHECK(layout.slot("W_U").shape == store::Shape{8, 16});
    CHECK(layout.slot("W_E").shape == store::Shape{16, 8});
    CHECK(layout.slot("layers.1.mlp.W_in").shape == store::Shape{8, 32});
    CHECK_THROWS_AS(layout.slot("nope"), DataError);

    const auto p = lm::init_params(cfg);
    for (float g : p.tensor("layers.0.ln1.gain")) {
        CHECK(g == 1.0f);
    }
    for (float b : p.tensor("layers.1.mlp.b_in")) {
        CHECK(b == 0.0f);
    }
    double ss = 0.0;
    const auto w = p.tensor("W_U");
    for (float x : w) {
        ss += double(x) * x;
    }
    CHECK(std::sqrt(ss / double(w.size())) == doctest::Approx(0.02).epsilon(0.2));
    // W_U and W_E are separate parameters
    CHECK(layout.slot("W_U").offset != layout.slot("W_E").offset);
}

TEST_CASE("config validation and json") {
    CHECK_THROWS_AS(config(1, 6, 4, 16, 8).validate(), UsageError);
    CHECK_THROWS_AS(config(1, 8, 2, 1, 8).validate(), UsageError);
    CHECK_THROWS_AS(config(1, 8, 2, 16, 1).validate(), UsageError);
    const auto cfg = config(2, 8, 2, 16, 10);
    CHECK(lm::parse_model_config(lm::model_config_json(cfg)) == cfg);
    const auto j = nlohmann::json::parse(lm::model_config_json(cfg));
    for (const char* key : {"L", "d", "H", "v", "n_ctx", "seed"}) {
        CHECK(j.contains(key));
    }
}

TEST_CASE("zero parameters give uniform logits") {
    const auto cfg = config(2, 8, 2, 16, 8);
    const lm::ModelParams p(cfg);
    const std::vector<int> tokens{1, 5, 7, 2};
    for (float x : lm::forward(p, tokens)) {
        CHECK(x == 0.0f);
    }
    CHECK(lm::loss_only(p, tokens) == doctest::Approx(std::log(16.0)).epsilon(1e-6));
    CHECK(lm::loss_and_grad(lm::cast_params<double>(p), tokens).loss == doctest::Approx(std::log(16.0)).epsilon(1e-12));
}

TEST_CASE("embedding-only model matches a hand computation") {
    // d = 2, v = 3: LayerNorm of a two-vector is +-1 scaled by |x0 - x1| / sqrt(...).
    const auto cfg = config(0, 2, 1, 3, 4);
    lm::BasicParams<double> p(cfg);
    p.tensor("W_E")[0] = 1.0, p.tensor("W_E")[1] = 0.0;
    p.tensor("W_E")[2] = 0.0, p.tensor("W_E")[3] = 2.0;
    p.tensor("W_E")[4] = -1.0, p.tensor("W_E")[5] = 1.0;
    p.tensor("W_P")[0] = 0.5, p.tensor("W_P")[1] = 0.5;
    p.tensor("W_P")[2] = 1.0, p.tensor("W_P")[3] = 0.0;
    auto g = p.tensor("ln_f.gain");
    g[0] = 2.0, g[1] = 0.5;
    auto b = p.tensor("ln_f.bias");
    b[0] = 0.1, b[1] = -0.1;
    const std::vector<double> wu{1, 2, 3, -1, 0, 1}; // rows of (2 x 3)
    std::copy(wu.begin(), wu.end(), p.tensor("W_U").begin());

    const std::vector<int> tokens{0, 1};
    const auto logits = lm::forward(p, tokens);
    // position 0: x = (1.5, 0.5); position 1: x = (1.0, 2.0)
    const double x[2][2] = {{1.5, 0.5}, {1.0, 2.0}};
    for (int t = 0; t < 2; ++t) {
        const double mean = (x[t][0] + x[t][1]) / 2.0;
        const double var = ((x[t][0] - mean) * (x[t][0] - mean) + (x[t][1] - mean) * (x[t][1] - mean)) / 2.0;
        double h[2];
        for (int i = 0; i < 2; ++i) {
            h[i] = (x[t][i] - mean) / std::sqrt(var + 1e-5) * (i == 0 ? 2.0 : 0.5) + (i == 0 ? 0.1 : -0.1);
        }
        for (int j = 0; j < 3; ++j) {
            CHECK(logits[std::size_t(t * 3 + j)] == doctest::Approx(h[0] * wu[std::size_t(j)] + h[1] * wu[std::size_t(3 + j)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax rows are normalised and finite") {
    const auto cfg = config(2, 16, 4, 32, 12);
    const auto p = lm::init_params(cfg);
    std::vector<int> tokens;
    for (int i = 0; i < 12; ++i) {
        tokens.push_back((i * 7) % 32);
    }
    const auto logits = lm::forward(p, tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        double mx = -1e300, z = 0.0;
        for (std::size_t j = 0; j < 32; ++j) {
            REQUIRE(std::isfinite(logits[t * 32 + j]));
            mx = std::max(mx, double(logits[t * 32 + j]));
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < 32; ++j) {
            z += std::exp(double(logits[t * 32 + j]) - mx);
        }
        for (std::size_t j = 0; j < 32; ++j) {
            sum += std::exp(double(logits[t * 32 + j]) - mx) / z;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("prefix logits ignore later tokens") {
    const auto cfg = config(2, 8, 2, 16, 10);
    const auto p = lm::cast_params<float>(wdyn::testing::perturbed_params(cfg, 0.5, 1));
    std::vector<int> a{3, 1, 4, 1, 5, 9, 2, 6};
    std::vector<int> b = a;
    b[5] = 0, b[6] = 15, b[7] = 7;
    const auto la = lm::forward(p, a);
    const auto lb = lm::forward(p, b);
    for (std::size_t i = 0; i < 5 * 16; ++i) {
        REQUIRE(la[i] == lb[i]);
    }
    bool changed = false;
    for (std::size_t i = 5 * 16; i < la.size(); ++i) {
        changed = changed || la[i] != lb[i];
    }
    CHECK(changed);
}

TEST_CASE("incremental decoding reproduces the full forward pass") {
    const auto cfg = config(2, 8, 2, 16, 10);
    const auto p = lm::cast_params<float>(wdyn::testing::perturbed_params(cfg, 0.5, 2));
    const std::vector<int> tokens{3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
    const auto full = lm::forward(p, tokens);
    lm::Decoder dec(p);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const auto row = dec.push(tokens[t]);
        for (std::size_t j = 0; j < 16; ++j) {
            REQUIRE(row[j] == doctest::Approx(full[t * 16 + j]).epsilon(1e-6).scale(1.0));
        }
    }
    CHECK(dec.length() == 10);
    CHECK_THROWS_AS(dec.push(0), DataError);
}

TEST_CASE("gradients match central differences") {
    const auto cfg = config(2, 4, 2, 5, 6);
    const auto p = wdyn::testing::perturbed_params(cfg, 0.4, 11);
    const std::vector<int> tokens{0, 3, 1, 4, 4, 2, 1};
    for (const auto& e : wdyn::testing::gradient_check(p, tokens, 1e-4)) {
        INFO(e.name);
        CHECK(e.rel_error <= 1e-5);
    }
}

TEST_CASE("loss is covariant under vocabulary relabelling") {
    const auto cfg = config(1, 8, 2, 6, 8);
    const auto p = wdyn::testing::perturbed_params(cfg, 0.3, 5);
    const std::vector<int> perm{4, 2, 0, 5, 1, 3};
    auto q = p;
    const std::size_t d = 8, v = 6;
    for (std::size_t a = 0; a < v; ++a) {
        const auto b = static_cast<std::size_t>(perm[a]);
        for (std::size_t i = 0; i < d; ++i) {
            q.tensor("W_E")[b * d + i] = p.tensor("W_E")[a * d + i];
            q.tensor("W_U")[i * v + b] = p.tensor("W_U")[i * v + a];
        }
    }
    const std::vector<int> tokens{0, 1, 2, 3, 4, 5, 0, 2};
    std::vector<int> relabelled;
    for (int t : tokens) {
        relabelled.push_back(perm[static_cast<std::size_t>(t)]);
    }
    CHECK(lm::loss_only(q, relabelled) == doctest::Approx(lm::loss_only(p, tokens)).epsilon(1e-12));
}

TEST_CASE("input validation") {
    const auto cfg = config(1, 8, 2, 16, 4);
    const auto p = lm::init_params(cfg);
    CHECK_THROWS_AS(lm::forward(p, std::vector<int>{}), DataError);
    CHECK_THROWS_AS(lm::forward(p, std::vector<int>{1, 16}), DataError);
    CHECK_THROWS_AS(lm::forward(p, std::vector<int>{1, -1}), DataError);
    CHECK_THROWS_AS(lm::forward(p, std::vector<int>{1, 2, 3, 4, 5}), DataError);
    CHECK_THROWS_AS(lm::loss_only(p, std::vector<int>{1}), DataError);
    CHECK_NOTHROW(lm::loss_only(p, std::vector<int>{1, 2, 3, 4, 5}));
}

TEST_CASE("greedy generation") {
    const auto cfg = config(1, 8, 2, 16, 8);
    SUBCASE("n = 0 leaves the prefix unchanged") {
        const auto g = lm::generate(lm::init_params(cfg), std::vector<int>{3, 4}, 0);
        CHECK(g.tokens == std::vector<int>{3, 4});
        CHECK(g.logits.empty());
    }
    SUBCASE("ties go to the lowest id") {
        const auto g = lm::generate(lm::ModelParams(cfg), std::vector<int>{9}, 5);
        CHECK(g.tokens == std::vector<int>{9, 0, 0, 0, 0, 0});
        CHECK(g.logits.size() == 5 * 16);
    }
    SUBCASE("emitted tokens are the argmax of the recorded rows") {
        const auto p = lm::cast_params<float>(wdyn::testing::perturbed_params(cfg, 0.5, 9));
        const auto g = lm::generate(p, std::vector<int>{1, 2}, 4);
        for (std::size_t i = 0; i < 4; ++i) {
            const auto row = std::span<const float>(g.logits).subspan(i * 16, 16);
            CHECK(g.tokens[2 + i] == std::max_element(row.begin(), row.end()) - row.begin());
        }
        const auto full = lm::forward(p, std::span<const int>(g.tokens).first(5));
        for (std::size_t j = 0; j < 16; ++j) {
            CHECK(g.logits[3 * 16 + j] == doctest::Approx(full[4 * 16 + j]).epsilon(1e-6).scale(1.0));
        }
    }
    SUBCASE("length overflow") {
        CHECK_THROWS_AS(lm::generate(lm::init_params(cfg), std::vector<int>{1, 2, 3}, 6), DataError);
    }
}

TEST_CASE("training") {
    TempDir dir;
    auto cfg = config(1, 16, 2, 256, 8);
    lm::TrainOptions opt;
    opt.steps = 0;
    SUBCASE("zero steps writes the initialisation") {
        const auto r = lm::train(cfg, bytes_of(repeat("ab", 64)), opt, dir.path());
        REQUIRE(r.series.entries.size() == 1);
        CHECK(r.series.entries[0].step == 0);
        const auto params = lm::params_from_checkpoint(store::CheckpointFile(r.series.entries[0].path), cfg);
        CHECK(params.data == lm::init_params(cfg).data);
        CHECK(lm::load_model_config(dir.path()) == cfg);
    }
    SUBCASE("corpus too short") {
        CHECK_THROWS_AS(lm::train(cfg, bytes_of("abc"), opt, dir.path()), DataError);
    }
    SUBCASE("checkpoint schedule and determinism across workers") {
        opt.steps = 25;
        opt.checkpoint_every = 10;
        opt.batch = 4;
        set_worker_count(1);
        const auto a = lm::train(cfg, bytes_of(repeat("hello world. ", 200)), opt, dir / "a");
        set_worker_count(4);
        const auto b = lm::train(cfg, bytes_of(repeat("hello world. ", 200)), opt, dir / "b");
        set_worker_count(1);
        CHECK(a.series.steps() == std::vector<std::int64_t>{0, 10, 20, 25});
        CHECK(a.losses == b.losses);
        for (std::size_t i = 0; i < a.series.entries.size(); ++i) {
            CHECK(io::read_file(a.series.entries[i].path) == io::read_file(b.series.entries[i].path));
        }
        CHECK(a.losses.back() < a.losses.front());
        CHECK(a.series.tensors.size() == lm::ParamLayout(cfg).slots.size());
    }
    SUBCASE("memorising alternating bytes") {
        opt.steps = 300;
        opt.checkpoint_every = 300;
        opt.batch = 4;
        opt.lr = 1e-2;
        const auto r = lm::train(cfg, bytes_of(repeat("ab", 400)), opt, dir.path());
        const auto params = lm::params_from_checkpoint(store::CheckpointFile(r.series.entries.back().path), cfg);
        const auto g = lm::generate(params, std::vector<int>{'a'}, 7);
        CHECK(g.tokens == std::vector<int>{'a', 'b', 'a', 'b', 'a', 'b', 'a', 'b'});
    }
    SUBCASE("training needs byte vocabulary") {
        CHECK_THROWS_AS(lm::train(config(1, 8, 2, 16, 8), bytes_of(repeat("ab", 64)), opt, dir.path()), UsageError);
    }
}

} // TEST_SUITE toy_lm
