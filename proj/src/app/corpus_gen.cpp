#include "sta/corpus_gen.hpp"
#include "sta/errors.hpp"

#include <map>
#include <random>

namespace sta {

namespace {

std::vector<TokenId> range(TokenId first, TokenId last) {
    std::vector<TokenId> out;
    for (TokenId t = first; t <= last; ++t) {
        out.push_back(t);
    }
    return out;
}

// Portable draws straight from the engine, so corpora are identical across
// standard libraries.
class Draw {
public:
    explicit Draw(std::uint64_t seed) : rng_(seed) {}
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    std::size_t between(std::size_t lo, std::size_t hi) { return lo + index(hi - lo + 1); }

private:
    std::mt19937_64 rng_;
};

TokenSeq chain(const std::vector<TokenId>& lexicon, double successor_prob, double stop, std::size_t min_len,
               std::size_t max_len, Draw& draw) {
    // min_len == max_len gives a fixed length regardless of `stop`.
    std::size_t idx = draw.index(lexicon.size());
    TokenSeq out{lexicon[idx]};
    while (out.size() < max_len) {
        if (out.size() >= min_len && draw.unit() < stop) {
            break;
        }
        idx = draw.unit() < successor_prob ? (idx + 1) % lexicon.size() : draw.index(lexicon.size());
        out.push_back(lexicon[idx]);
    }
    return out;
}

TokenSeq draw_answer(const std::vector<TokenId>& lexicon, double successor_prob, const GrammarSpec::LengthLaw& law,
                     Draw& draw) {
    return chain(lexicon, successor_prob, law.stop, law.min, law.max, draw);
}

TokenSeq question(const GrammarSpec& spec, std::size_t min_len, Draw& draw) {
    const std::size_t n = draw.between(min_len, spec.question_max);
    TokenSeq q;
    for (std::size_t i = 0; i < n; ++i) {
        q.push_back(spec.question_tokens[draw.index(spec.question_tokens.size())]);
    }
    return q;
}

TokenSeq concat(std::initializer_list<TokenSeq> parts) {
    TokenSeq out;
    for (const auto& p : parts) {
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

}  // namespace

GrammarSpec GrammarSpec::reference() {
    GrammarSpec g;
    g.question_tokens = range(4, 19);
    g.positive_lexicon = range(20, 27);
    g.negative_lexicon = range(28, 35);
    g.system_prompt = range(36, 39);
    g.short_thought = range(44, 51);
    g.long_thought = range(52, 59);
    g.think_marker = 60;
    return g;
}

void GrammarSpec::validate() const {
    std::map<TokenId, std::string> owner{
        {tokens::pad, "pad"}, {tokens::bos, "bos"}, {tokens::eos, "eos"}, {tokens::space, "space"}};
    auto claim = [&](const std::vector<TokenId>& ids, const std::string& role, bool unique_within) {
        if (ids.empty()) {
            throw ValidationError("grammar: " + role + " is empty");
        }
        std::map<TokenId, bool> seen;
        for (TokenId t : ids) {
            if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
                throw ValidationError("grammar: " + role + " token " + std::to_string(t) +
                                      " is outside the vocabulary of " + std::to_string(vocab_size));
            }
            if (seen[t]) {
                if (unique_within) {
                    throw ValidationError("grammar: token " + std::to_string(t) + " repeats within " + role);
                }
                continue;
            }
            seen[t] = true;
            auto [it, fresh] = owner.emplace(t, role);
            if (!fresh) {
                throw ValidationError("grammar: token " + std::to_string(t) + " is in both " + it->second + " and " +
                                      role);
            }
        }
    };
    claim(question_tokens, "question tokens", true);
    claim(positive_lexicon, "positive lexicon", true);
    claim(negative_lexicon, "negative lexicon", true);
    claim(system_prompt, "system prompt", false);
    claim(short_thought, "short thought tokens", true);
    claim(long_thought, "long thought tokens", true);
    claim({think_marker}, "think marker", true);

    auto probability = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ValidationError(std::string("grammar: ") + name + " must lie in [0, 1]");
        }
    };
    probability(successor_prob, "successor_prob");
    for (const auto& [law, name] : {std::pair{answer_length, "answer_length"}, std::pair{short_length, "short_length"},
                                    std::pair{long_length, "long_length"}}) {
        probability(law.stop, name);
        if (law.min == 0 || law.min > law.max) {
            throw ValidationError(std::string("grammar: ") + name + " needs 1 <= min <= max");
        }
    }
    probability(prompted_fraction, "prompted_fraction");
    probability(reasoning_fraction, "reasoning_fraction");
    if (prompted_fraction + reasoning_fraction > 1.0) {
        throw ValidationError("grammar: prompted_fraction + reasoning_fraction exceeds 1");
    }
    if (behavior_items == 0) {
        throw ValidationError("grammar: behavior_items must be at least 1");
    }
    if (lm_sequences == 0) {
        throw ValidationError("grammar: lm_sequences must be at least 1");
    }
    if (eval_prompts == 0) {
        throw ValidationError("grammar: eval_prompts must be at least 1");
    }
    if (question_min == 0 || question_min > question_max) {
        throw ValidationError("grammar: need 1 <= question_min <= question_max");
    }
    if (behavior_answer_len == 0 || length_short == 0 || length_long <= length_short) {
        throw ValidationError("grammar: need behavior_answer_len >= 1 and length_long > length_short >= 1");
    }
}

GeneratedCorpus generate_corpus(const GrammarSpec& spec, std::uint64_t seed) {
    spec.validate();
    GeneratedCorpus out;
    const TokenSeq bos{tokens::bos};
    const TokenSeq eos{tokens::eos};
    const TokenSeq sep{tokens::space};
    const TokenSeq think{spec.think_marker};
    const double p = spec.successor_prob;

    Draw lm(derive_seed(seed, "corpus-lm"));
    for (std::size_t i = 0; i < spec.lm_sequences; ++i) {
        const double kind = lm.unit();
        // Training questions may be empty so BOS SPACE and BOS P SPACE are seen contexts.
        const TokenSeq q = question(spec, 0, lm);
        if (kind < spec.prompted_fraction) {
            const TokenSeq a = draw_answer(spec.positive_lexicon, p, spec.answer_length, lm);
            out.lm_sequences.push_back(concat({bos, spec.system_prompt, q, sep, a, eos}));
        } else if (kind < spec.prompted_fraction + spec.reasoning_fraction) {
            const bool is_long = lm.unit() < 0.5;
            const TokenSeq t = is_long ? draw_answer(spec.long_thought, p, spec.long_length, lm)
                                       : draw_answer(spec.short_thought, p, spec.short_length, lm);
            out.lm_sequences.push_back(concat({bos, think, q, sep, t, eos}));
        } else {
            const auto& lexicon = lm.unit() < 0.5 ? spec.positive_lexicon : spec.negative_lexicon;
            const TokenSeq a = draw_answer(lexicon, p, spec.answer_length, lm);
            out.lm_sequences.push_back(concat({bos, q, sep, a, eos}));
        }
    }

    Draw bd(derive_seed(seed, "corpus-behavior"));
    out.behavior.behavior_name = "lexicon-a";
    const std::size_t len = spec.behavior_answer_len;
    for (std::size_t i = 0; i < spec.behavior_items; ++i) {
        BehaviorItem item;
        item.question = concat({bos, question(spec, spec.question_min, bd), sep});
        item.positive = chain(spec.positive_lexicon, p, 0.0, len, len, bd);
        item.negative = chain(spec.negative_lexicon, p, 0.0, len, len, bd);
        out.behavior.items.push_back(std::move(item));
    }
    out.lexicon = {spec.positive_lexicon, spec.negative_lexicon};

    Draw ed(derive_seed(seed, "corpus-eval"));
    for (std::size_t i = 0; i < spec.eval_prompts; ++i) {
        out.eval_prompts.push_back(concat({bos, question(spec, spec.question_min, ed), sep}));
    }
    for (std::size_t i = 0; i < spec.eval_prompts; ++i) {
        out.length_prompts.push_back(concat({bos, think, question(spec, spec.question_min, ed), sep}));
    }
    out.length_pair.question = concat({bos, think, question(spec, spec.question_min, ed), sep});
    out.length_pair.positive = chain(spec.long_thought, p, 0.0, spec.length_long, spec.length_long, ed);
    out.length_pair.negative = chain(spec.short_thought, p, 0.0, spec.length_short, spec.length_short, ed);
    out.system_prompt = spec.system_prompt;
    const std::size_t a0 = ed.index(spec.positive_lexicon.size());
    out.probe_prompt = concat({bos, question(spec, spec.question_min, ed), sep,
                               {spec.positive_lexicon[a0], spec.positive_lexicon[(a0 + 1) % spec.positive_lexicon.size()]}});
    return out;
}

PromptSet prompts_of(const GeneratedCorpus& c) {
    return {c.eval_prompts, c.length_prompts, c.length_pair, c.system_prompt, c.probe_prompt};
}

}  // namespace sta
