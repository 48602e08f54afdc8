#include "sta/errors.hpp"
#include "sta/eval.hpp"

#include <algorithm>
#include <limits>

namespace sta {

namespace {

void check_vector(const Model& model, const SteeringVector& vector) {
    if (vector.dim() != model.config.d_model) {
        throw ConfigError("steering vector has dimension " + std::to_string(vector.dim()) + " but the model has d_model " +
                          std::to_string(model.config.d_model));
    }
    if (vector.layer >= model.config.n_layers) {
        throw ConfigError("steering vector targets layer " + std::to_string(vector.layer) + " but the model has " +
                          std::to_string(model.config.n_layers) + " layers");
    }
}

std::optional<SteerHook> hook_for(const SteeringVector& vector, double lambda) {
    if (lambda == 0.0) {
        return std::nullopt;
    }
    return SteerHook{vector.layer, vector.values, lambda};
}

SweepCell run_cell(const Model& model, const std::vector<TokenSeq>& prompts, const std::optional<SteerHook>& hook,
                   const SweepConfig& config, std::uint64_t cell_seed) {
    SweepCell cell;
    cell.seed = cell_seed;
    double fluency_sum = 0.0;
    double length_sum = 0.0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const GenerateConfig gen{config.max_new, config.temperature,
                                 derive_seed(cell_seed, "prompt-" + std::to_string(i))};
        const TokenSeq out = generate(model, prompts[i], gen, hook);
        length_sum += static_cast<double>(out.size());
        if (out.size() >= config.ngram) {
            fluency_sum += fluency_ngram(out, config.ngram);
            ++cell.fluency_count;
        }
    }
    cell.mean_length = length_sum / static_cast<double>(prompts.size());
    cell.fluency = cell.fluency_count == 0 ? 0.0 : fluency_sum / static_cast<double>(cell.fluency_count);
    return cell;
}

SweepRow run_row(const Model& model, const std::vector<TokenSeq>& prompts, const std::optional<SteerHook>& hook,
                 double lambda, const SweepConfig& config) {
    SweepRow row;
    row.lambda = lambda;
    for (std::size_t s = 0; s < config.n_seeds; ++s) {
        // Cell seeds do not depend on lambda, so every row samples with the same streams.
        row.cells.push_back(run_cell(model, prompts, hook, config, derive_seed(config.seed, "sweep-" + std::to_string(s))));
    }
    double fsum = 0.0;
    double lsum = 0.0;
    row.fluency_min = row.length_min = std::numeric_limits<double>::infinity();
    row.fluency_max = row.length_max = -std::numeric_limits<double>::infinity();
    for (const auto& c : row.cells) {
        fsum += c.fluency;
        lsum += c.mean_length;
        row.fluency_min = std::min(row.fluency_min, c.fluency);
        row.fluency_max = std::max(row.fluency_max, c.fluency);
        row.length_min = std::min(row.length_min, c.mean_length);
        row.length_max = std::max(row.length_max, c.mean_length);
    }
    row.fluency = fsum / static_cast<double>(row.cells.size());
    row.mean_length = lsum / static_cast<double>(row.cells.size());
    if (!config.probe_prompt.empty()) {
        row.top_tokens = topk_distribution(model, config.probe_prompt, hook, config.top_k);
    }
    return row;
}

void check_sweep(const SweepConfig& config, const std::vector<TokenSeq>& prompts, const std::vector<double>& lambdas) {
    if (config.n_seeds == 0) {
        throw ParameterError("sweep needs at least one generation seed");
    }
    if (config.max_new == 0) {
        throw ParameterError("sweep max_new must be at least 1");
    }
    if (config.ngram == 0) {
        throw ParameterError("sweep n-gram order must be at least 1");
    }
    if (config.temperature < 0.0) {
        throw ParameterError("sweep temperature must be nonnegative");
    }
    if (prompts.empty()) {
        throw InputError("sweep needs at least one prompt");
    }
    if (lambdas.empty()) {
        throw ParameterError("sweep needs at least one lambda");
    }
}

}  // namespace

SweepReport boundary_sweep(const Model& model, const SteeringVector& vector, const std::vector<double>& lambdas,
                           const std::vector<TokenSeq>& eval_prompts, const BehaviorLexicon& lexicon,
                           const SweepConfig& config) {
    check_vector(model, vector);
    check_sweep(config, eval_prompts, lambdas);
    lexicon.validate(model.config.vocab_size);
    SweepReport report;
    report.kind = "boundary";
    for (double lambda : lambdas) {
        const auto hook = hook_for(vector, lambda);
        SweepRow row = run_row(model, eval_prompts, hook, lambda, config);
        row.behavior_score = behavior_score(model, eval_prompts, hook, lexicon);
        report.rows.push_back(std::move(row));
    }
    return report;
}

SweepReport length_steering_eval(const Model& model, const BehaviorItem& contrast_pair, std::size_t layer,
                                 const std::vector<double>& lambdas, const std::vector<TokenSeq>& probe_prompts,
                                 const SweepConfig& config) {
    if (contrast_pair.positive == contrast_pair.negative) {
        throw DegenerateError("length steering: the long and short sequences are identical");
    }
    check_sweep(config, probe_prompts, lambdas);
    BehaviorCorpus pair{"length", {contrast_pair}};
    const SteeringVector vector = caa_vector(model, pair, layer);
    if (vector.norm == 0.0) {
        throw DegenerateError("length steering: the contrast pair yields a zero vector");
    }
    SweepReport report;
    report.kind = "length";
    for (double lambda : lambdas) {
        report.rows.push_back(run_row(model, probe_prompts, hook_for(vector, lambda), lambda, config));
    }
    return report;
}

std::string_view to_string(PromptPosition position) {
    switch (position) {
        case PromptPosition::input_prefix: return "input_prefix";
        case PromptPosition::input_suffix: return "input_suffix";
        case PromptPosition::output_prefix: return "output_prefix";
    }
    return "unknown";
}

TokenSeq place_prompt(const TokenSeq& eval_prompt, const TokenSeq& prompt, PromptPosition position) {
    const bool has_bos = !eval_prompt.empty() && eval_prompt.front() == tokens::bos;
    const bool has_sep = eval_prompt.size() > (has_bos ? 1U : 0U) && eval_prompt.back() == tokens::space;
    std::size_t at = eval_prompt.size();
    switch (position) {
        case PromptPosition::input_prefix: at = has_bos ? 1 : 0; break;
        case PromptPosition::input_suffix: at = has_sep ? eval_prompt.size() - 1 : eval_prompt.size(); break;
        case PromptPosition::output_prefix: at = eval_prompt.size(); break;
    }
    TokenSeq out(eval_prompt.begin(), eval_prompt.begin() + static_cast<std::ptrdiff_t>(at));
    out.insert(out.end(), prompt.begin(), prompt.end());
    out.insert(out.end(), eval_prompt.begin() + static_cast<std::ptrdiff_t>(at), eval_prompt.end());
    return out;
}

std::vector<PositionScore> prompt_position_ablation(const Model& model, const TokenSeq& prompt,
                                                    const std::vector<TokenSeq>& eval_prompts,
                                                    const BehaviorLexicon& lexicon) {
    if (eval_prompts.empty()) {
        throw InputError("prompt ablation needs at least one eval prompt");
    }
    std::vector<PositionScore> out;
    for (auto position : {PromptPosition::input_prefix, PromptPosition::input_suffix, PromptPosition::output_prefix}) {
        std::vector<TokenSeq> placed;
        for (const auto& p : eval_prompts) {
            placed.push_back(place_prompt(p, prompt, position));
            if (placed.back().size() > model.config.max_seq) {
                throw InputError("prompt ablation: " + std::string(to_string(position)) + " arrangement has " +
                                 std::to_string(placed.back().size()) + " tokens, over max_seq " +
                                 std::to_string(model.config.max_seq));
            }
        }
        out.push_back({position, behavior_score(model, placed, std::nullopt, lexicon)});
    }
    return out;
}

}  // namespace sta
