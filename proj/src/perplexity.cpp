#include "wdyn/perplexity.hpp"

#include "wdyn/error.hpp"
#include "wdyn/io_util.hpp"
#include "wdyn/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wdyn::ppl {

std::string_view protocol_name(Protocol p) noexcept {
    return p == Protocol::forward ? "forward" : "causal-unmask";
}

namespace {

double log_softmax_at(std::span<const float> row, std::size_t index) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (float x : row) {
        z += std::exp(double(x) - mx);
    }
    return double(row[index]) - mx - std::log(z);
}

double median(std::vector<double> values) {
    const std::size_t n = values.size();
    std::sort(values.begin(), values.end());
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::size_t effective_limit(const std::vector<lm::TokenSequence>& sentences, std::size_t limit) {
    if (sentences.empty()) {
        throw DataError("empty sentence set");
    }
    if (limit == 0) {
        throw UsageError("sentence limit must be >= 1");
    }
    return std::min(limit, sentences.size());
}

template <class PerSentence>
PerplexityCurve evaluate(const store::CheckpointSeries& series, std::size_t n, Protocol protocol,
                         PerSentence&& per_sentence) {
    const lm::ModelConfig cfg = lm::load_model_config(series.dir);
    PerplexityCurve curve;
    curve.protocol = protocol;
    curve.n_sentences = static_cast<int>(n);
    for (std::size_t c = 0; c < series.entries.size(); ++c) {
        const store::CheckpointFile file(series.entries[c].path);
        const lm::ModelParams params = lm::params_from_checkpoint(file, cfg);
        std::vector<double> ppls(n);
        parallel_for(n, [&](std::size_t s) { ppls[s] = per_sentence(params, c, s); });
        std::vector<double> logs(n);
        std::transform(ppls.begin(), ppls.end(), logs.begin(), [](double p) { return std::log(p); });
        curve.steps.push_back(series.entries[c].step);
        curve.ppl_mean.push_back(static_cast<float>(pairwise_sum(ppls) / double(n)));
        curve.ppl_median.push_back(static_cast<float>(median(ppls)));
        curve.log_ppl_mean.push_back(static_cast<float>(pairwise_sum(logs) / double(n)));
    }
    return curve;
}

} // namespace

double ppl_sequence(const lm::ModelParams& params, std::span<const int> tokens) {
    if (tokens.size() < 2) {
        throw DataError("need >= 2 tokens");
    }
    const auto v = static_cast<std::size_t>(params.config.vocab);
    const auto logits = lm::forward(params, tokens.first(tokens.size() - 1));
    const std::size_t n = tokens.size() - 1;
    std::vector<double> nll(n);
    for (std::size_t t = 0; t < n; ++t) {
        const std::span<const float> row(logits.data() + t * v, v);
        nll[t] = -log_softmax_at(row, static_cast<std::size_t>(tokens[t + 1]));
    }
    return std::exp(pairwise_sum(nll) / double(n));
}

double unmask_sentence(const lm::ModelParams& params, std::span<const int> sentence, UnmaskingTrace* trace) {
    const std::size_t ts = sentence.size();
    if (ts < 2) {
        throw DataError("need >= 2 tokens");
    }
    if (ts > static_cast<std::size_t>(params.config.n_ctx)) {
        throw DataError("sentence of " + std::to_string(ts) + " tokens exceeds n_ctx = " +
                        std::to_string(params.config.n_ctx));
    }
    const auto v = static_cast<std::size_t>(params.config.vocab);
    if (trace != nullptr) {
        trace->length = static_cast<int>(ts);
        trace->prefixes.clear();
    }
    std::vector<double> per_k(ts - 1);
    for (std::size_t k = 1; k < ts; ++k) {
        const int n_gen = static_cast<int>(ts - k);
        const lm::Generation gen = lm::generate(params, sentence.first(k), n_gen);
        std::vector<double> nll(static_cast<std::size_t>(n_gen));
        std::vector<float> log_probs(static_cast<std::size_t>(n_gen));
        for (std::size_t i = 0; i < nll.size(); ++i) {
            const std::span<const float> row(gen.logits.data() + i * v, v);
            const double lp = log_softmax_at(row, static_cast<std::size_t>(gen.tokens[k + i]));
            nll[i] = -lp;
            log_probs[i] = static_cast<float>(lp);
        }
        per_k[k - 1] = std::exp(pairwise_sum(nll) / double(n_gen));
        if (trace != nullptr) {
            trace->prefixes.push_back({static_cast<int>(k), gen.tokens, std::move(log_probs)});
        }
    }
    if (trace != nullptr) {
        trace->prefixes.push_back({static_cast<int>(ts), lm::TokenSequence(sentence.begin(), sentence.end()), {}});
    }
    return pairwise_sum(per_k) / double(per_k.size());
}

PerplexityCurve ppl_forward_dataset(const store::CheckpointSeries& series,
                                    const std::vector<lm::TokenSequence>& sentences, std::size_t limit) {
    const std::size_t n = effective_limit(sentences, limit);
    return evaluate(series, n, Protocol::forward, [&](const lm::ModelParams& params, std::size_t, std::size_t s) {
        return ppl_sequence(params, sentences[s]);
    });
}

UnmaskingResult causal_unmask_eval(const store::CheckpointSeries& series,
                                   const std::vector<lm::TokenSequence>& sentences, std::size_t limit) {
    const std::size_t n = effective_limit(sentences, limit);
    UnmaskingResult result;
    result.traces.resize(series.entries.size() * n);
    result.curve = evaluate(series, n, Protocol::causal_unmask,
                            [&](const lm::ModelParams& params, std::size_t c, std::size_t s) {
                                UnmaskingTrace& trace = result.traces[c * n + s];
                                trace.step = series.entries[c].step;
                                trace.sentence = s;
                                return unmask_sentence(params, sentences[s], &trace);
                            });
    return result;
}

std::vector<lm::TokenSequence> split_sentences(std::string_view text, std::size_t max_len) {
    std::vector<lm::TokenSequence> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        line = line.substr(0, max_len);
        if (line.size() >= 2) {
            out.push_back(lm::bytes_to_tokens(line));
        }
        pos = end + 1;
    }
    return out;
}

std::string ppl_csv(const std::vector<PerplexityCurve>& curves) {
    std::ostringstream out;
    out << "step,protocol,ppl_mean,ppl_median,log_ppl_mean,n_sentences\n";
    for (const auto& c : curves) {
        for (std::size_t t = 0; t < c.steps.size(); ++t) {
            out << c.steps[t] << ',' << protocol_name(c.protocol) << ',' << io::format_number(c.ppl_mean[t]) << ','
                << io::format_number(c.ppl_median[t]) << ',' << io::format_number(c.log_ppl_mean[t]) << ','
                << c.n_sentences << '\n';
        }
    }
    return out.str();
}

std::string traces_jsonl(const std::vector<UnmaskingTrace>& traces) {
    std::string out;
    for (const auto& t : traces) {
        nlohmann::ordered_json j;
        j["step"] = t.step;
        j["sentence"] = t.sentence;
        j["t_s"] = t.length;
        auto& prefixes = j["prefixes"] = nlohmann::ordered_json::array();
        for (const auto& p : t.prefixes) {
            nlohmann::ordered_json e;
            e["k"] = p.k;
            e["completion"] = p.completion;
            std::vector<double> lps;
            for (float lp : p.log_probs) {
                lps.push_back(io::widen(lp));
            }
            e["log_probs"] = lps;
            prefixes.push_back(std::move(e));
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

} // namespace wdyn::ppl
