#include "sta/errors.hpp"
#include "sta/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace sta {

namespace {

double log_sum_exp(std::span<const double> logits, const std::vector<TokenId>& ids) {
    double peak = -std::numeric_limits<double>::infinity();
    for (TokenId t : ids) {
        peak = std::max(peak, logits[static_cast<std::size_t>(t)]);
    }
    double sum = 0.0;
    for (TokenId t : ids) {
        sum += std::exp(logits[static_cast<std::size_t>(t)] - peak);
    }
    return peak + std::log(sum);
}

}  // namespace

void BehaviorLexicon::validate(std::size_t vocab_size) const {
    if (positive_tokens.empty() || negative_tokens.empty()) {
        throw ValidationError("behavior lexicon needs nonempty positive and negative token sets");
    }
    const std::set<TokenId> pos(positive_tokens.begin(), positive_tokens.end());
    for (TokenId t : negative_tokens) {
        if (pos.count(t) != 0) {
            throw ValidationError("behavior lexicon: token " + std::to_string(t) + " is both positive and negative");
        }
    }
    for (const auto* set : {&positive_tokens, &negative_tokens}) {
        for (TokenId t : *set) {
            if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
                throw ConfigError("behavior lexicon token " + std::to_string(t) + " is outside the model vocabulary of " +
                                  std::to_string(vocab_size));
            }
        }
    }
}

double behavior_score_from_logits(std::span<const double> logits, const BehaviorLexicon& lexicon) {
    lexicon.validate(logits.size());
    const double lp = log_sum_exp(logits, lexicon.positive_tokens);
    const double ln = log_sum_exp(logits, lexicon.negative_tokens);
    return 1.0 / (1.0 + std::exp(ln - lp));
}

double behavior_score(const Model& model, const std::vector<TokenSeq>& prompts, const std::optional<SteerHook>& hook,
                      const BehaviorLexicon& lexicon) {
    lexicon.validate(model.config.vocab_size);
    if (prompts.empty()) {
        throw InputError("behavior_score needs at least one prompt");
    }
    double total = 0.0;
    for (const auto& p : prompts) {
        total += behavior_score_from_logits(last_logits(model, p, hook).data(), lexicon);
    }
    return total / static_cast<double>(prompts.size());
}

double fluency_ngram(const TokenSeq& sequence, std::size_t n) {
    if (n == 0) {
        throw ParameterError("fluency_ngram: n must be at least 1");
    }
    if (sequence.size() < n) {
        throw InputError("fluency_ngram: sequence of length " + std::to_string(sequence.size()) +
                         " has no " + std::to_string(n) + "-grams");
    }
    std::set<std::vector<TokenId>> seen;
    const std::size_t total = sequence.size() - n + 1;
    for (std::size_t i = 0; i < total; ++i) {
        seen.emplace(sequence.begin() + static_cast<std::ptrdiff_t>(i),
                     sequence.begin() + static_cast<std::ptrdiff_t>(i + n));
    }
    return static_cast<double>(seen.size()) / static_cast<double>(total);
}

std::vector<TokenProb> topk_from_logits(std::span<const double> logits, std::size_t k) {
    if (k == 0 || k > logits.size()) {
        throw ParameterError("top-k: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(logits.size()) +
                             "]");
    }
    std::vector<double> probs(logits.begin(), logits.end());
    kernels::softmax_inplace(probs);
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    std::vector<TokenProb> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back({static_cast<TokenId>(order[i]), probs[order[i]]});
    }
    return out;
}

std::vector<TokenProb> topk_distribution(const Model& model, const TokenSeq& prompt,
                                         const std::optional<SteerHook>& hook, std::size_t k) {
    return topk_from_logits(last_logits(model, prompt, hook).data(), k);
}

double total_probability(const std::vector<TokenProb>& tokens) {
    double sum = 0.0;
    for (const auto& t : tokens) {
        sum += t.probability;
    }
    return sum;
}

AttentionShift attention_shift(const Model& model, const TokenSeq& tokens, std::size_t begin, std::size_t end,
                               const SteerHook& hook) {
    return {attention_to_span(forward(model, tokens), begin, end),
            attention_to_span(forward_steered(model, tokens, hook), begin, end)};
}

}  // namespace sta
