#include "sta/errors.hpp"
#include "sta/reference.hpp"

#include <algorithm>

namespace sta {

void ReferenceConfig::validate() const {
    grammar.validate();
    model.validate();
    sae.validate();
    if (grammar.vocab_size != model.vocab_size) {
        throw ConfigError("grammar vocabulary " + std::to_string(grammar.vocab_size) + " differs from model vocabulary " +
                          std::to_string(model.vocab_size));
    }
    if (layer >= model.n_layers) {
        throw ConfigError("steering layer " + std::to_string(layer) + " is outside the model's " +
                          std::to_string(model.n_layers) + " layers");
    }
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
        throw ParameterError("top_fraction must lie in (0, 1]");
    }
    if (activation_sequences == 0) {
        throw ParameterError("activation_sequences must be at least 1");
    }
    if (lambdas.empty() || length_lambdas.empty()) {
        throw ParameterError("lambda lists must be nonempty");
    }
}

StageSeeds StageSeeds::from_root(std::uint64_t root) {
    return {derive_seed(root, "corpus"), derive_seed(root, "model"), derive_seed(root, "sae"),
            derive_seed(root, "sweep")};
}

Tensor dump_activations(const Model& model, const std::vector<TokenSeq>& sequences, std::size_t layer,
                        std::size_t max_sequences) {
    const std::size_t count = std::min(max_sequences, sequences.size());
    if (count == 0) {
        throw InputError("dump_activations: no sequences");
    }
    std::vector<double> rows;
    std::size_t n = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const Tensor h = hidden_states(model, sequences[i], layer);
        rows.insert(rows.end(), h.values().begin(), h.values().end());
        n += h.rows();
    }
    return Tensor({n, model.config.d_model}, std::move(rows));
}

VectorSet build_vectors(const Model& model, const SaeParams& sae, const BehaviorCorpus& behavior,
                        const PromptSet& prompts, const ReferenceConfig& config) {
    VectorSet v;
    v.stats = collect_atom_stats(model, sae, behavior, config.layer);
    v.caa = caa_vector(model, behavior, config.layer);

    const SelectionThresholds th = thresholds_from_fraction(v.stats, config.top_fraction);
    v.sta = sta_vector(select_target_atoms(v.stats, th, SelectionMode::full), sae, config.include_decoder_bias);
    v.sta.layer = config.layer;
    v.sta.alpha = th.alpha;
    v.sta.beta = th.beta;
    v.sta.top_fraction = th.top_fraction;
    v.sta.source_hash = behavior.digest();

    v.axbench = axbench_vector(v.stats, sae, config.include_decoder_bias);
    v.axbench.source_hash = v.sta.source_hash;

    PromptVectorOptions opts;
    opts.layer = config.layer;
    opts.top_fraction = config.top_fraction;
    opts.include_decoder_bias = config.include_decoder_bias;
    opts.method = VectorMethod::prompt_caa;
    v.prompt_caa = prompt_to_vector(model, prompts.system_prompt, opts);
    opts.method = VectorMethod::prompt_sta;
    v.prompt_sta = prompt_to_vector(model, prompts.system_prompt, opts, &sae);

    switch (config.steer_method) {
        case VectorMethod::caa: v.steer = v.caa; break;
        case VectorMethod::sta: v.steer = v.sta; break;
        case VectorMethod::sae_axbench: v.steer = v.axbench; break;
        case VectorMethod::prompt_caa: v.steer = v.prompt_caa; break;
        case VectorMethod::prompt_sta: v.steer = v.prompt_sta; break;
    }
    if (config.match_to_caa && config.steer_method != VectorMethod::caa) {
        v.steer = match_magnitude(v.steer, v.caa);
    }
    return v;
}

Analyses run_analyses(const Model& model, const SteeringVector& steer, const SteeringVector& caa,
                      const SteeringVector& prompt_caa, const PromptSet& prompts, const BehaviorLexicon& lexicon,
                      const ReferenceConfig& config, std::uint64_t sweep_seed) {
    Analyses a;
    SweepConfig sweep = config.sweep;
    sweep.seed = sweep_seed;
    sweep.probe_prompt = prompts.probe_prompt;
    a.boundary = boundary_sweep(model, steer, config.lambdas, prompts.eval_prompts, lexicon, sweep);

    SweepConfig length = config.sweep;
    length.seed = derive_seed(sweep_seed, "length");
    length.max_new = config.length_max_new;
    length.probe_prompt.clear();
    a.length = length_steering_eval(model, prompts.length_pair, config.layer, config.length_lambdas,
                                    prompts.length_prompts, length);

    a.ablation = prompt_position_ablation(model, prompts.system_prompt, prompts.eval_prompts, lexicon);
    a.vanilla_score = behavior_score(model, prompts.eval_prompts, std::nullopt, lexicon);
    a.prompt_cosine = cosine_similarity(prompt_caa.values, caa.values);
    return a;
}

ReferenceRun run_reference(const ReferenceConfig& config, std::uint64_t root_seed) {
    config.validate();
    const StageSeeds seeds = StageSeeds::from_root(root_seed);
    ReferenceRun run;
    run.corpus = generate_corpus(config.grammar, seeds.corpus);

    ToyModelConfig mc = config.model;
    mc.seed = seeds.model;
    run.model = init_model(mc);
    run.toy_report = train_toy(run.model, run.corpus.lm_sequences, config.toy_train);

    const Tensor acts = dump_activations(run.model, run.corpus.lm_sequences, config.layer, config.activation_sequences);
    SaeTrainConfig sc = config.sae;
    sc.seed = seeds.sae;
    std::tie(run.sae, run.sae_report) = train_sae(acts, sc);

    const PromptSet prompts = prompts_of(run.corpus);
    run.vectors = build_vectors(run.model, run.sae, run.corpus.behavior, prompts, config);
    run.analyses = run_analyses(run.model, run.vectors.steer, run.vectors.caa, run.vectors.prompt_caa, prompts,
                                run.corpus.lexicon, config, seeds.sweep);
    return run;
}

const SweepRow& row_for(const SweepReport& report, double lambda) {
    for (const auto& row : report.rows) {
        if (row.lambda == lambda) {
            return row;
        }
    }
    throw ParameterError("sweep report has no row for lambda " + std::to_string(lambda));
}

}  // namespace sta
