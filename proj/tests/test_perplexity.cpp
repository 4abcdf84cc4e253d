#include "helpers.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/perplexity.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>

using namespace wdyn;
using wdyn::testing::TempDir;

namespace {

lm::ModelConfig config(int vocab, int n_ctx) {
    lm::ModelConfig cfg;
    cfg.layers = 1;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.vocab = vocab;
    cfg.n_ctx = n_ctx;
    return cfg;
}

// A one-checkpoint series holding the given parameters.
store::CheckpointSeries series_of(const std::filesystem::path& dir, const lm::ModelParams& p, std::int64_t step = 0) {
    std::filesystem::create_directories(dir);
    store::write_checkpoint(step, lm::params_to_tensors(p), dir / store::checkpoint_filename(step));
    io::write_file_atomic(dir / lm::kConfigFile, lm::model_config_json(p.config));
    return store::open_series(dir);
}

} // namespace

TEST_SUITE("perplexity") {

TEST_CASE("uniform logits give perplexity v") {
    const lm::ModelParams zero(config(4, 16));
    for (const std::vector<int>& seq : {std::vector<int>{0, 1}, {3, 3, 3, 3}, {2, 0, 1, 3, 0, 2, 1}}) {
        CHECK(ppl::ppl_sequence(zero, seq) == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(ppl::unmask_sentence(zero, seq) == doctest::Approx(4.0).epsilon(1e-12));
    }
    CHECK_THROWS_WITH_AS(ppl::ppl_sequence(zero, std::vector<int>{1}), doctest::Contains("need >= 2 tokens"),
                         DataError);
}

TEST_CASE("perplexity matches a direct softmax computation") {
    const auto p = lm::init_params(config(16, 16));
    const std::vector<int> seq{1, 7, 3, 3, 15, 0, 9};
    const auto logits = lm::forward(p, seq);
    double nll = 0.0;
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        double z = 0.0;
        for (std::size_t j = 0; j < 16; ++j) {
            z += std::exp(double(logits[t * 16 + j]));
        }
        nll -= std::log(std::exp(double(logits[t * 16 + std::size_t(seq[t + 1])])) / z);
    }
    CHECK(ppl::ppl_sequence(p, seq) == doctest::Approx(std::exp(nll / 6.0)).epsilon(1e-9));
    CHECK(ppl::ppl_sequence(p, seq) >= 1.0);
}

TEST_CASE("unmasking enumerates every proper prefix") {
    const auto p = lm::init_params(config(16, 16));
    const std::vector<int> sentence{4, 8, 15, 1, 6, 2};
    ppl::UnmaskingTrace trace;
    const double value = ppl::unmask_sentence(p, sentence, &trace);
    CHECK(trace.length == 6);
    REQUIRE(trace.prefixes.size() == 6);
    double sum = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& pre = trace.prefixes[i];
        CHECK(pre.k == int(i + 1));
        CHECK(pre.completion.size() == 6);
        CHECK(std::equal(sentence.begin(), sentence.begin() + pre.k, pre.completion.begin()));
        REQUIRE(pre.log_probs.size() == 6 - i - 1);
        double nll = 0.0;
        for (float lp : pre.log_probs) {
            CHECK(lp <= 0.0f);
            nll -= lp;
        }
        sum += std::exp(nll / double(pre.log_probs.size()));
    }
    CHECK(trace.prefixes[5].k == 6);
    CHECK(trace.prefixes[5].completion == sentence);
    CHECK(trace.prefixes[5].log_probs.empty());
    CHECK(value == doctest::Approx(sum / 5.0).epsilon(1e-5));

    CHECK_THROWS_AS(ppl::unmask_sentence(lm::init_params(config(16, 4)), sentence), DataError);
}

TEST_CASE("dataset curves") {
    TempDir dir;
    const auto series = series_of(dir.path(), lm::ModelParams(config(256, 16)));
    const auto sentences = ppl::split_sentences("hello there\nsecond line\nab\n", 16);
    REQUIRE(sentences.size() == 3);

    const auto fwd = ppl::ppl_forward_dataset(series, sentences, ppl::kDefaultLimit);
    CHECK(fwd.protocol == ppl::Protocol::forward);
    CHECK(fwd.n_sentences == 3);
    CHECK(fwd.steps == std::vector<std::int64_t>{0});
    CHECK(fwd.ppl_mean[0] == doctest::Approx(256.0).epsilon(1e-5));
    CHECK(fwd.ppl_median[0] == doctest::Approx(256.0).epsilon(1e-5));
    CHECK(fwd.log_ppl_mean[0] == doctest::Approx(std::log(256.0)).epsilon(1e-5));
    CHECK(ppl::ppl_forward_dataset(series, sentences, 2).n_sentences == 2);

    const auto un = ppl::causal_unmask_eval(series, sentences, 2);
    CHECK(un.curve.protocol == ppl::Protocol::causal_unmask);
    CHECK(un.curve.ppl_mean[0] == doctest::Approx(256.0).epsilon(1e-5));
    REQUIRE(un.traces.size() == 2);
    CHECK(un.traces[1].sentence == 1);
    CHECK(un.traces[1].length == 11);

    CHECK_THROWS_AS(ppl::ppl_forward_dataset(series, {}, 10), DataError);
    CHECK_THROWS_AS(ppl::ppl_forward_dataset(series, sentences, 0), UsageError);
    std::filesystem::remove(dir / lm::kConfigFile);
    CHECK_THROWS_AS(ppl::ppl_forward_dataset(series, sentences, 3), DataError);
}

TEST_CASE("memorised training string") {
    TempDir dir;
    auto cfg = config(256, 8);
    cfg.d_model = 16;
    lm::TrainOptions opt;
    opt.steps = 400;
    opt.checkpoint_every = 400;
    opt.batch = 4;
    opt.lr = 1e-2;
    std::string corpus;
    while (corpus.size() < 600) {
        corpus += "abcd";
    }
    const auto r = lm::train(cfg, std::vector<std::uint8_t>(corpus.begin(), corpus.end()), opt, dir.path());
    const auto p = lm::params_from_checkpoint(store::CheckpointFile(r.series.entries.back().path), cfg);
    const auto text = lm::bytes_to_tokens("abcdabcd");
    CHECK(ppl::ppl_sequence(p, text) <= 1.001);
    ppl::UnmaskingTrace trace;
    CHECK(ppl::unmask_sentence(p, text, &trace) <= 1.001);
    for (std::size_t i = 0; i + 1 < trace.prefixes.size(); ++i) {
        CHECK(trace.prefixes[i].completion == text);
    }
}

TEST_CASE("sentence splitting") {
    const auto s = ppl::split_sentences("abc\r\n\nx\nlonger line here", 6);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == lm::bytes_to_tokens("abc"));
    CHECK(s[1] == lm::bytes_to_tokens("longer"));
    CHECK(ppl::split_sentences("", 10).empty());
}

TEST_CASE("bundled evaluation sentences") {
    const auto text = io::read_file(std::filesystem::path(WDYN_DATA_DIR) / "sentences.txt");
    const auto sentences = ppl::split_sentences(text, 32);
    CHECK(sentences.size() == 40);
    const lm::ModelParams zero(config(256, 32));
    for (const auto& s : sentences) {
        REQUIRE(s.size() <= 32);
        CHECK(ppl::ppl_sequence(zero, s) == doctest::Approx(256.0).epsilon(1e-9));
    }
}

TEST_CASE("csv and jsonl output") {
    ppl::PerplexityCurve c;
    c.protocol = ppl::Protocol::causal_unmask;
    c.steps = {0, 100};
    c.ppl_mean = {4.0f, 2.0f};
    c.ppl_median = {4.0f, 2.0f};
    c.log_ppl_mean = {1.5f, 0.5f};
    c.n_sentences = 7;
    const auto csv = ppl::ppl_csv({c});
    CHECK(csv == "step,protocol,ppl_mean,ppl_median,log_ppl_mean,n_sentences\n"
                 "0,causal-unmask,4,4,1.5,7\n100,causal-unmask,2,2,0.5,7\n");

    ppl::UnmaskingTrace t;
    t.step = 100;
    t.sentence = 3;
    t.length = 2;
    t.prefixes.push_back({1, {5, 6}, {-0.5f}});
    t.prefixes.push_back({2, {5, 7}, {}});
    const auto lines = ppl::traces_jsonl({t, t});
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);
    const auto j = nlohmann::json::parse(lines.substr(0, lines.find('\n')));
    CHECK(j["step"] == 100);
    CHECK(j["t_s"] == 2);
    CHECK(j["prefixes"][0]["log_probs"][0] == -0.5);
    CHECK(j["prefixes"][1]["completion"] == std::vector<int>{5, 7});
}

} // TEST_SUITE perplexity
