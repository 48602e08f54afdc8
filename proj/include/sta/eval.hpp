#pragma once

#include "sta/steering.hpp"
#include "sta/toymodel.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sta {

struct BehaviorLexicon {
    std::vector<TokenId> positive_tokens;
    std::vector<TokenId> negative_tokens;

    // ValidationError for empty or overlapping sets, ConfigError for ids
    // outside [0, vocab_size).
    void validate(std::size_t vocab_size) const;
};

// Positive-lexicon mass of one next-token distribution, renormalized over the
// union of both lexicons. Computed in log space so extreme logits stay exact.
double behavior_score_from_logits(std::span<const double> logits, const BehaviorLexicon& lexicon);

// Mean of behavior_score_from_logits over the final position of each prompt.
double behavior_score(const Model& model, const std::vector<TokenSeq>& prompts, const std::optional<SteerHook>& hook,
                      const BehaviorLexicon& lexicon);

// Distinct n-grams / total n-grams.
double fluency_ngram(const TokenSeq& sequence, std::size_t n);

struct TokenProb {
    TokenId token = 0;
    double probability = 0.0;
    friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

// Top k of softmax(logits), descending, ties to the lower id.
std::vector<TokenProb> topk_from_logits(std::span<const double> logits, std::size_t k);
std::vector<TokenProb> topk_distribution(const Model& model, const TokenSeq& prompt,
                                         const std::optional<SteerHook>& hook, std::size_t k);
double total_probability(const std::vector<TokenProb>& tokens);

struct SweepConfig {
    double temperature = 0.8;
    std::size_t n_seeds = 5;
    std::uint64_t seed = 0;
    std::size_t max_new = 24;
    std::size_t top_k = 5;
    std::size_t ngram = 2;
    TokenSeq probe_prompt;  // fixed prompt for the top-k distribution; empty skips it
};

// One (lambda, generation seed) cell.
struct SweepCell {
    std::uint64_t seed = 0;
    double fluency = 0.0;          // mean distinct-n over continuations with at least n tokens
    std::size_t fluency_count = 0;  // continuations that entered the fluency mean
    double mean_length = 0.0;      // generated tokens before EOS
};

struct SweepRow {
    double lambda = 0.0;
    std::optional<double> behavior_score;
    double fluency = 0.0;  // mean over cells
    double fluency_min = 0.0;
    double fluency_max = 0.0;
    double mean_length = 0.0;
    double length_min = 0.0;
    double length_max = 0.0;
    std::vector<TokenProb> top_tokens;
    std::vector<SweepCell> cells;
};

struct SweepReport {
    std::string kind;  // "boundary" or "length"
    std::vector<SweepRow> rows;
};

// Steers with lambda * vector at vector.layer for each lambda. A lambda of 0
// runs without a hook.
SweepReport boundary_sweep(const Model& model, const SteeringVector& vector, const std::vector<double>& lambdas,
                           const std::vector<TokenSeq>& eval_prompts, const BehaviorLexicon& lexicon,
                           const SweepConfig& config);

// Single-pair CAA from (question ++ positive) vs (question ++ negative), the
// long answer being the positive one, then mean generated length per lambda.
SweepReport length_steering_eval(const Model& model, const BehaviorItem& contrast_pair, std::size_t layer,
                                 const std::vector<double>& lambdas, const std::vector<TokenSeq>& probe_prompts,
                                 const SweepConfig& config);

enum class PromptPosition { input_prefix, input_suffix, output_prefix };
std::string_view to_string(PromptPosition position);

struct PositionScore {
    PromptPosition position = PromptPosition::input_prefix;
    double behavior_score = 0.0;
};

// Eval prompts are BOS ++ question ++ SPACE. The prompt is placed after BOS,
// before the SPACE separator, or after it.
TokenSeq place_prompt(const TokenSeq& eval_prompt, const TokenSeq& prompt, PromptPosition position);
std::vector<PositionScore> prompt_position_ablation(const Model& model, const TokenSeq& prompt,
                                                    const std::vector<TokenSeq>& eval_prompts,
                                                    const BehaviorLexicon& lexicon);

struct AttentionShift {
    std::vector<double> vanilla;  // per layer
    std::vector<double> steered;
};
// Attention mass on tokens [begin, end) with and without the hook.
AttentionShift attention_shift(const Model& model, const TokenSeq& tokens, std::size_t begin, std::size_t end,
                               const SteerHook& hook);

inline constexpr int kSweepCsvVersion = 1;

// One row per (lambda, seed) cell plus one aggregate row per lambda.
void write_sweep_csv(std::ostream& out, const SweepReport& report);
std::string sweep_json(const SweepReport& report);
void write_ablation_csv(std::ostream& out, const std::vector<PositionScore>& scores, double vanilla);

}  // namespace sta
