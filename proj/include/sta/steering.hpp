#pragma once

#include "sta/sae.hpp"
#include "sta/toymodel.hpp"

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sta {

// One contrast triple: the model input is question ++ answer, and statistics
// are read from the answer positions only.
struct BehaviorItem {
    TokenSeq question;
    TokenSeq positive;
    TokenSeq negative;
};

struct BehaviorCorpus {
    std::string behavior_name;
    std::vector<BehaviorItem> items;

    // Throws InputError for an empty corpus, empty answers, or sequences
    // that would not fit in `max_seq` once joined with their question.
    void validate(std::size_t max_seq) const;
    std::string digest() const;
};

struct AtomStats {
    Tensor delta_a;  // mean over items of (mean positive activation - mean negative activation)
    Tensor f_pos;    // fraction of items whose mean positive activation is nonzero
    Tensor f_neg;
    Tensor delta_f;  // f_pos - f_neg
    std::size_t n_examples = 0;
    std::size_t layer = 0;
};

struct SelectionThresholds {
    double alpha = 0.0;
    double beta = 0.0;
    std::optional<double> top_fraction;

    // Admits every atom; the SAE_AXBENCH configuration.
    static SelectionThresholds pass_all() {
        return {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), std::nullopt};
    }
};

enum class SelectionMode { full, wo_amplitude, wo_frequency };
enum class VectorMethod { caa, sta, sae_axbench, prompt_caa, prompt_sta };

std::string_view to_string(VectorMethod method);
VectorMethod parse_vector_method(std::string_view name);
std::string_view to_string(SelectionMode mode);
SelectionMode parse_selection_mode(std::string_view name);

struct SteeringVector {
    Tensor values;  // [D]
    VectorMethod method = VectorMethod::caa;
    std::size_t layer = 0;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> top_fraction;
    bool include_decoder_bias = false;
    std::size_t active_atoms = 0;  // SAE-based methods only
    bool degenerate = false;       // positive and negative inputs coincided
    std::string aggregation = "mean-over-answer-tokens";
    std::string source_hash;
    double norm = 0.0;

    std::size_t dim() const noexcept { return values.size(); }
    // Recomputes `norm` from `values`.
    void refresh_norm();
};

// Per-item mean residual states over the answer tokens at `layer`.
struct AnswerMeans {
    std::vector<Tensor> positive;  // each [D]
    std::vector<Tensor> negative;
};
AnswerMeans answer_hidden_means(const Model& model, const BehaviorCorpus& corpus, std::size_t layer);
// Per-item mean SAE activations over the answer tokens at `layer`.
AnswerMeans answer_activation_means(const Model& model, const SaeParams& sae, const BehaviorCorpus& corpus,
                                    std::size_t layer);

// Amplitude and frequency contrasts from per-item mean activations.
AtomStats atom_stats_from_means(const AnswerMeans& means, std::size_t layer);
AtomStats collect_atom_stats(const Model& model, const SaeParams& sae, const BehaviorCorpus& corpus,
                             std::size_t layer);

SelectionThresholds thresholds_from_fraction(const AtomStats& stats, double top_fraction);

// a_target[j] = delta_a[j] when the mode's conditions hold, else 0.
Tensor select_target_atoms(const AtomStats& stats, const SelectionThresholds& thresholds, SelectionMode mode);

// a_target W_dec (+ b_dec when include_decoder_bias).
SteeringVector sta_vector(const Tensor& a_target, const SaeParams& sae, bool include_decoder_bias,
                          VectorMethod method = VectorMethod::sta);
// STA with every atom admitted.
SteeringVector axbench_vector(const AtomStats& stats, const SaeParams& sae, bool include_decoder_bias);

SteeringVector caa_from_means(const AnswerMeans& means, std::size_t layer);
SteeringVector caa_vector(const Model& model, const BehaviorCorpus& corpus, std::size_t layer);

// Rescales v to the reference norm, keeping v's direction.
SteeringVector match_magnitude(const SteeringVector& v, const SteeringVector& reference);

struct PromptVectorOptions {
    VectorMethod method = VectorMethod::prompt_caa;  // prompt_caa or prompt_sta
    std::size_t layer = 0;
    double top_fraction = 0.35;
    bool include_decoder_bias = true;
    SelectionMode mode = SelectionMode::full;
};

// Contrasts BOS ++ prompt ++ SPACE against BOS ++ SPACE at the final SPACE
// position. `prompt` excludes BOS.
SteeringVector prompt_to_vector(const Model& model, const TokenSeq& prompt, const PromptVectorOptions& options,
                                const SaeParams* sae = nullptr);

std::string digest_tokens(const TokenSeq& tokens);

}  // namespace sta
