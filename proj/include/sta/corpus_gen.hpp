#pragma once

#include "sta/eval.hpp"
#include "sta/steering.hpp"

#include <cstdint>
#include <vector>

namespace sta {

// Synthetic two-behavior language. Token roles:
//   question tokens   filler questions
//   lexicon A / B     positive / negative answers, each following a successor chain
//   prompt tokens     a fixed "system prompt" that makes answers come from lexicon A
//   short / long      two reasoning styles after the THINK marker, with different stop rates
struct GrammarSpec {
    std::size_t vocab_size = 64;
    std::vector<TokenId> question_tokens;
    std::vector<TokenId> positive_lexicon;
    std::vector<TokenId> negative_lexicon;
    TokenSeq system_prompt;
    std::vector<TokenId> short_thought;
    std::vector<TokenId> long_thought;
    TokenId think_marker = 60;

    std::size_t question_min = 1;
    std::size_t question_max = 4;
    double successor_prob = 0.9;  // chance the next answer token is the successor of the previous one

    // Length laws: at least `min` tokens, then stop with probability `stop`
    // before each further token, never more than `max`.
    struct LengthLaw {
        std::size_t min = 1;
        std::size_t max = 1;
        double stop = 1.0;
    };
    LengthLaw answer_length{4, 4, 1.0};
    LengthLaw short_length{3, 3, 1.0};
    LengthLaw long_length{4, 32, 0.06};

    double prompted_fraction = 0.25;   // LM sequences carrying the system prompt
    double reasoning_fraction = 0.25;  // LM sequences with THINK
    std::size_t lm_sequences = 2000;
    std::size_t behavior_items = 64;
    std::size_t behavior_answer_len = 4;
    std::size_t eval_prompts = 16;
    std::size_t length_long = 12;
    std::size_t length_short = 3;

    // The reference vocabulary layout.
    static GrammarSpec reference();
    // ValidationError for overlapping roles, ids outside the vocabulary,
    // zero requested items, or inconsistent lengths.
    void validate() const;
};

struct GeneratedCorpus {
    std::vector<TokenSeq> lm_sequences;  // BOS ... EOS
    BehaviorCorpus behavior;             // questions are BOS q SPACE
    BehaviorLexicon lexicon;
    std::vector<TokenSeq> eval_prompts;    // BOS q SPACE
    std::vector<TokenSeq> length_prompts;  // BOS THINK q SPACE
    BehaviorItem length_pair;              // one THINK question, long answer positive
    TokenSeq system_prompt;
    TokenSeq probe_prompt;  // BOS q SPACE a a' mid-answer context
};

GeneratedCorpus generate_corpus(const GrammarSpec& spec, std::uint64_t seed);

// The evaluation inputs that travel with a generated corpus.
struct PromptSet {
    std::vector<TokenSeq> eval_prompts;
    std::vector<TokenSeq> length_prompts;
    BehaviorItem length_pair;
    TokenSeq system_prompt;
    TokenSeq probe_prompt;
};
PromptSet prompts_of(const GeneratedCorpus& corpus);

}  // namespace sta
