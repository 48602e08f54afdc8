#include "sta/errors.hpp"
#include "sta/steering.hpp"

#include <cstdio>

namespace sta {

namespace {

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv_tokens(std::uint64_t h, const TokenSeq& tokens) {
    h = fnv_mix(h, tokens.size());
    for (TokenId t : tokens) {
        h = fnv_mix(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)));
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

// Mean over answer positions of `rows` (one row per answer token).
Tensor answer_mean(const Tensor& states, std::size_t begin, std::size_t end) {
    const std::size_t d = states.cols();
    Tensor out({d});
    for (std::size_t t = begin; t < end; ++t) {
        const auto row = states.row(t);
        for (std::size_t i = 0; i < d; ++i) {
            out[i] += row[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (double& v : out.data()) {
        v *= inv;
    }
    return out;
}

TokenSeq join(const TokenSeq& a, const TokenSeq& b) {
    TokenSeq out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace

std::string digest_tokens(const TokenSeq& tokens) {
    return hex64(fnv_tokens(kFnvBasis, tokens));
}

void BehaviorCorpus::validate(std::size_t max_seq) const {
    if (items.empty()) {
        throw InputError("behavior corpus '" + behavior_name + "' is empty");
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        if (it.positive.empty() || it.negative.empty()) {
            throw InputError("behavior corpus item " + std::to_string(i) + " has an empty answer");
        }
        if (it.question.size() + std::max(it.positive.size(), it.negative.size()) > max_seq) {
            throw InputError("behavior corpus item " + std::to_string(i) + " exceeds max_seq " +
                             std::to_string(max_seq));
        }
    }
}

std::string BehaviorCorpus::digest() const {
    std::uint64_t h = kFnvBasis;
    for (const auto& it : items) {
        h = fnv_tokens(h, it.question);
        h = fnv_tokens(h, it.positive);
        h = fnv_tokens(h, it.negative);
    }
    return hex64(h);
}

std::string_view to_string(VectorMethod method) {
    switch (method) {
        case VectorMethod::caa: return "caa";
        case VectorMethod::sta: return "sta";
        case VectorMethod::sae_axbench: return "axbench";
        case VectorMethod::prompt_caa: return "prompt-caa";
        case VectorMethod::prompt_sta: return "prompt-sta";
    }
    return "unknown";
}

VectorMethod parse_vector_method(std::string_view name) {
    for (auto m : {VectorMethod::caa, VectorMethod::sta, VectorMethod::sae_axbench, VectorMethod::prompt_caa,
                   VectorMethod::prompt_sta}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ParameterError("unknown vector method '" + std::string(name) +
                         "' (expected caa, sta, axbench, prompt-caa, prompt-sta)");
}

std::string_view to_string(SelectionMode mode) {
    switch (mode) {
        case SelectionMode::full: return "full";
        case SelectionMode::wo_amplitude: return "wo_amplitude";
        case SelectionMode::wo_frequency: return "wo_frequency";
    }
    return "unknown";
}

SelectionMode parse_selection_mode(std::string_view name) {
    for (auto m : {SelectionMode::full, SelectionMode::wo_amplitude, SelectionMode::wo_frequency}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ParameterError("unknown selection mode '" + std::string(name) +
                         "' (expected full, wo_amplitude, wo_frequency)");
}

AnswerMeans answer_hidden_means(const Model& model, const BehaviorCorpus& corpus, std::size_t layer) {
    corpus.validate(model.config.max_seq);
    AnswerMeans means;
    for (const auto& it : corpus.items) {
        const Tensor hp = hidden_states(model, join(it.question, it.positive), layer);
        const Tensor hn = hidden_states(model, join(it.question, it.negative), layer);
        means.positive.push_back(answer_mean(hp, it.question.size(), hp.rows()));
        means.negative.push_back(answer_mean(hn, it.question.size(), hn.rows()));
    }
    return means;
}

AnswerMeans answer_activation_means(const Model& model, const SaeParams& sae, const BehaviorCorpus& corpus,
                                    std::size_t layer) {
    if (sae.input_dim() != model.config.d_model) {
        throw ConfigError("SAE input_dim " + std::to_string(sae.input_dim()) + " does not match model d_model " +
                          std::to_string(model.config.d_model));
    }
    corpus.validate(model.config.max_seq);
    AnswerMeans means;
    for (const auto& it : corpus.items) {
        const Tensor ap = encode(sae, hidden_states(model, join(it.question, it.positive), layer));
        const Tensor an = encode(sae, hidden_states(model, join(it.question, it.negative), layer));
        means.positive.push_back(answer_mean(ap, it.question.size(), ap.rows()));
        means.negative.push_back(answer_mean(an, it.question.size(), an.rows()));
    }
    return means;
}

}  // namespace sta
