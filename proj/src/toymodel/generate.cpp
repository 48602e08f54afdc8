#include "forwarder.hpp"
#include "sta/errors.hpp"

#include <random>

namespace sta {

namespace {

TokenId pick_token(std::span<const double> logits, double temperature, std::mt19937_64& rng) {
    if (temperature == 0.0) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i) {
            if (logits[i] > logits[best]) {
                best = i;
            }
        }
        return static_cast<TokenId>(best);
    }
    std::vector<double> probs(logits.begin(), logits.end());
    kernels::softmax_inplace(probs, temperature);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) {
            return static_cast<TokenId>(i);
        }
    }
    return static_cast<TokenId>(probs.size() - 1);
}

}  // namespace

TokenSeq generate(const Model& model, const TokenSeq& prompt, const GenerateConfig& config,
                  const std::optional<SteerHook>& hook) {
    validate_tokens(model, prompt);
    if (config.max_new == 0) {
        throw ParameterError("generate: max_new must be >= 1");
    }
    if (config.temperature < 0.0) {
        throw ParameterError("generate: temperature must be >= 0");
    }
    const std::size_t capacity = std::min(model.config.max_seq, prompt.size() + config.max_new);
    detail::Forwarder fw(model, hook ? &*hook : nullptr, capacity);
    for (TokenId t : prompt) {
        fw.append(t);
    }
    std::mt19937_64 rng(config.seed);
    TokenSeq out;
    while (out.size() < config.max_new) {
        const TokenId next = pick_token(fw.logits(fw.length() - 1), config.temperature, rng);
        if (next == tokens::eos) {
            break;
        }
        out.push_back(next);
        if (fw.length() >= capacity) {
            break;
        }
        fw.append(next);
    }
    return out;
}

}  // namespace sta
