#include "doctest.h"

#include "sta/corpus_gen.hpp"
#include "sta/errors.hpp"

#include <algorithm>
#include <set>

using namespace sta;

namespace {

bool all_in(const TokenSeq& s, const std::vector<TokenId>& set) {
    return std::all_of(s.begin(), s.end(), [&](TokenId t) { return std::find(set.begin(), set.end(), t) != set.end(); });
}

GrammarSpec small_spec() {
    GrammarSpec g = GrammarSpec::reference();
    g.lm_sequences = 50;
    g.behavior_items = 10;
    g.eval_prompts = 4;
    return g;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("generation is deterministic per seed") {
    const GeneratedCorpus a = generate_corpus(small_spec(), 9);
    const GeneratedCorpus b = generate_corpus(small_spec(), 9);
    CHECK(a.lm_sequences == b.lm_sequences);
    CHECK(a.behavior.digest() == b.behavior.digest());
    CHECK(a.eval_prompts == b.eval_prompts);
    const GeneratedCorpus c = generate_corpus(small_spec(), 10);
    CHECK(a.lm_sequences != c.lm_sequences);
}

TEST_CASE("reference grammar validates and rejects broken specs") {
    CHECK_NOTHROW(GrammarSpec::reference().validate());

    GrammarSpec overlap = GrammarSpec::reference();
    overlap.negative_lexicon.push_back(overlap.positive_lexicon.front());
    CHECK_THROWS_AS(overlap.validate(), ValidationError);
    CHECK_THROWS_AS(generate_corpus(overlap, 0), ValidationError);

    GrammarSpec empty = GrammarSpec::reference();
    empty.behavior_items = 0;
    CHECK_THROWS_AS(generate_corpus(empty, 0), ValidationError);

    GrammarSpec outside = GrammarSpec::reference();
    outside.positive_lexicon.push_back(64);
    CHECK_THROWS_AS(outside.validate(), ValidationError);

    GrammarSpec prob = GrammarSpec::reference();
    prob.successor_prob = 1.5;
    CHECK_THROWS_AS(prob.validate(), ValidationError);

    GrammarSpec lengths = GrammarSpec::reference();
    lengths.length_long = lengths.length_short;
    CHECK_THROWS_AS(lengths.validate(), ValidationError);
}

TEST_CASE("behavior triples follow the grammar") {
    const GrammarSpec g = small_spec();
    const GeneratedCorpus c = generate_corpus(g, 1);
    REQUIRE(c.behavior.items.size() == g.behavior_items);
    for (const auto& it : c.behavior.items) {
        REQUIRE(it.question.size() >= 3);
        CHECK(it.question.front() == tokens::bos);
        CHECK(it.question.back() == tokens::space);
        CHECK(all_in(TokenSeq(it.question.begin() + 1, it.question.end() - 1), g.question_tokens));
        CHECK(it.positive.size() == g.behavior_answer_len);
        CHECK(it.negative.size() == g.behavior_answer_len);
        CHECK(all_in(it.positive, g.positive_lexicon));
        CHECK(all_in(it.negative, g.negative_lexicon));
    }
    CHECK(c.lexicon.positive_tokens == g.positive_lexicon);
    CHECK(c.lexicon.negative_tokens == g.negative_lexicon);
    CHECK_NOTHROW(c.behavior.validate(64));
}

TEST_CASE("LM sequences are bracketed and fit the model") {
    const GeneratedCorpus c = generate_corpus(small_spec(), 2);
    CHECK(c.lm_sequences.size() == 50);
    for (const auto& s : c.lm_sequences) {
        CHECK(s.front() == tokens::bos);
        CHECK(s.back() == tokens::eos);
        CHECK(s.size() <= 64);
        for (TokenId t : s) {
            CHECK(t >= 0);
            CHECK(t < 64);
        }
    }
}

TEST_CASE("evaluation prompts and the length pair") {
    const GrammarSpec g = small_spec();
    const GeneratedCorpus c = generate_corpus(g, 3);
    CHECK(c.eval_prompts.size() == g.eval_prompts);
    for (const auto& p : c.eval_prompts) {
        CHECK(p.front() == tokens::bos);
        CHECK(p.back() == tokens::space);
    }
    CHECK(c.length_pair.positive.size() == g.length_long);
    CHECK(c.length_pair.negative.size() == g.length_short);
    CHECK(c.length_pair.positive != c.length_pair.negative);
    CHECK(c.system_prompt == g.system_prompt);
    for (const auto& p : c.length_prompts) {
        CHECK(std::find(p.begin(), p.end(), g.think_marker) != p.end());
    }
    const PromptSet ps = prompts_of(c);
    CHECK(ps.eval_prompts == c.eval_prompts);
    CHECK(ps.probe_prompt == c.probe_prompt);
}

TEST_CASE("corpus mixes prompted, reasoning and plain sequences") {
    const GeneratedCorpus c = generate_corpus(GrammarSpec::reference(), 4);
    const GrammarSpec g = GrammarSpec::reference();
    std::size_t prompted = 0, reasoning = 0;
    for (const auto& s : c.lm_sequences) {
        prompted += std::search(s.begin(), s.end(), g.system_prompt.begin(), g.system_prompt.end()) != s.end();
        reasoning += std::find(s.begin(), s.end(), g.think_marker) != s.end();
    }
    const double n = static_cast<double>(c.lm_sequences.size());
    CHECK(prompted / n == doctest::Approx(0.25).epsilon(0.25));
    CHECK(reasoning / n == doctest::Approx(0.25).epsilon(0.25));
}

}  // TEST_SUITE
