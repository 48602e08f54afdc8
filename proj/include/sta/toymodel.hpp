#pragma once

#include "sta/numerics.hpp"
#include "sta/training_report.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sta {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

namespace tokens {
inline constexpr TokenId pad = 0;
inline constexpr TokenId bos = 1;
inline constexpr TokenId eos = 2;
inline constexpr TokenId space = 3;
inline constexpr TokenId first_free = 4;
}  // namespace tokens

struct ToyModelConfig {
    std::size_t vocab_size = 64;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t max_seq = 64;
    std::uint64_t seed = 0;

    std::size_t d_ff() const noexcept { return 4 * d_model; }
    std::size_t head_dim() const noexcept { return d_model / n_heads; }
    void validate() const;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor w_query, w_key, w_value, w_out;  // [D x D]
    Tensor ln2_gain, ln2_bias;
    Tensor w_up, b_up;      // [D x F], [F]
    Tensor w_down, b_down;  // [F x D], [D]
};

// Pre-LN decoder-only transformer with learned positions and a tied unembedding.
struct Model {
    ToyModelConfig config;
    Tensor token_embedding;     // [V x D]
    Tensor position_embedding;  // [S x D]
    std::vector<LayerParams> layers;
    Tensor final_gain, final_bias;

    // Visits every parameter tensor in a fixed order with a stable name.
    void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const;
    std::size_t parameter_count() const;
};

Model init_model(const ToyModelConfig& config);
// Same shapes as `model`, every entry zero (used as a gradient buffer).
Model zeros_like(const Model& model);
std::uint64_t weight_checksum(const Model& model);

struct ForwardTrace {
    std::vector<Tensor> hidden;                  // per layer, [L x D], post-block residual
    std::vector<std::vector<Tensor>> attention;  // per layer, per head, [L x L]
    Tensor logits;                               // [L x V]
};

struct SteerHook {
    std::size_t layer = 0;
    Tensor vector;
    double multiplier = 1.0;
};

ForwardTrace forward(const Model& model, const TokenSeq& tokens);
// Adds multiplier * vector to every position's residual state right after block `hook.layer`.
ForwardTrace forward_steered(const Model& model, const TokenSeq& tokens, const SteerHook& hook);
ForwardTrace forward_with(const Model& model, const TokenSeq& tokens, const std::optional<SteerHook>& hook);

// Final-position logits only; cheaper than building a full trace.
Tensor last_logits(const Model& model, const TokenSeq& tokens, const std::optional<SteerHook>& hook = std::nullopt);

// Residual-stream states at `layer` for every position, [L x D].
Tensor hidden_states(const Model& model, const TokenSeq& tokens, std::size_t layer);

struct ToyTrainConfig {
    std::size_t steps = 400;
    double lr = 3e-3;
    std::size_t batch_size = 8;
    std::size_t eval_every = 50;
    std::size_t eval_subset = 64;
    double grad_clip = 1.0;  // global-norm clip, 0 disables
};

// Teacher-forced mean cross-entropy over all next-token targets of `sequences`.
double sequence_loss(const Model& model, const std::vector<TokenSeq>& sequences);

// Loss and gradient of `sequence_loss` (exposed for gradient checks).
double loss_and_gradient(const Model& model, const std::vector<TokenSeq>& sequences, Model& grad);

TrainingReport train_toy(Model& model, const std::vector<TokenSeq>& corpus, const ToyTrainConfig& config);

// Mean over heads and over query positions after the span of the attention
// mass assigned to positions in [begin, end). One value per layer.
std::vector<double> attention_to_span(const ForwardTrace& trace, std::size_t begin, std::size_t end);

struct GenerateConfig {
    std::size_t max_new = 32;
    double temperature = 0.0;  // 0 means greedy
    std::uint64_t seed = 0;
};

// Returns the continuation only, without the terminating EOS.
TokenSeq generate(const Model& model, const TokenSeq& prompt, const GenerateConfig& config,
                  const std::optional<SteerHook>& hook = std::nullopt);

void validate_tokens(const Model& model, const TokenSeq& tokens);

}  // namespace sta
