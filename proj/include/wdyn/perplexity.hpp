#pragma once

// Perplexity of byte-level toy models across a checkpoint series, under two
// protocols: scoring whole sentences (forward) and scoring greedy completions
// of every proper prefix of each sentence (causal unmasking).

#include "wdyn/checkpoint_store.hpp"
#include "wdyn/toy_lm.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace wdyn::ppl {

enum class Protocol { forward, causal_unmask };

std::string_view protocol_name(Protocol p) noexcept;

struct PerplexityCurve {
    Protocol protocol = Protocol::forward;
    std::vector<std::int64_t> steps;
    std::vector<float> ppl_mean;
    std::vector<float> ppl_median;
    std::vector<float> log_ppl_mean;
    int n_sentences = 0;
};

struct UnmaskingPrefix {
    int k = 0;                       // prefix length
    lm::TokenSequence completion;    // prefix + generated tokens, length t_s
    std::vector<float> log_probs;    // one per generated token (t_s - k)
};

struct UnmaskingTrace {
    std::int64_t step = 0;
    std::size_t sentence = 0;
    int length = 0; // t_s
    std::vector<UnmaskingPrefix> prefixes; // k = 1..t_s; k = t_s is the sentence itself
};

struct UnmaskingResult {
    PerplexityCurve curve;
    std::vector<UnmaskingTrace> traces; // checkpoint-major, then sentence order
};

// exp of the mean next-token negative log-likelihood over positions 2..T.
double ppl_sequence(const lm::ModelParams& params, std::span<const int> tokens);

// Mean over k = 1..t_s-1 of the perplexity of the tokens greedily generated
// to complete the k-prefix back to length t_s, each scored by its own
// probability at emission time.
double unmask_sentence(const lm::ModelParams& params, std::span<const int> sentence,
                       UnmaskingTrace* trace = nullptr);

// Both evaluate the first `limit` sentences at every checkpoint; the model
// shape comes from config.json in the series directory.
PerplexityCurve ppl_forward_dataset(const store::CheckpointSeries& series,
                                    const std::vector<lm::TokenSequence>& sentences, std::size_t limit);
UnmaskingResult causal_unmask_eval(const store::CheckpointSeries& series,
                                   const std::vector<lm::TokenSequence>& sentences, std::size_t limit);

// Non-empty lines as byte tokens, cut to max_len; lines shorter than two
// bytes are dropped since they carry no next-token prediction.
std::vector<lm::TokenSequence> split_sentences(std::string_view text, std::size_t max_len);

inline constexpr std::size_t kDefaultLimit = 500;

std::string ppl_csv(const std::vector<PerplexityCurve>& curves);
std::string traces_jsonl(const std::vector<UnmaskingTrace>& traces);

} // namespace wdyn::ppl
