#pragma once

#include "sta/corpus_gen.hpp"
#include "sta/eval.hpp"
#include "sta/sae.hpp"
#include "sta/steering.hpp"
#include "sta/toymodel.hpp"

#include <cstdint>
#include <vector>

namespace sta {

// Every knob of the end-to-end toy experiment. Defaults are the reference setup.
struct ReferenceConfig {
    GrammarSpec grammar = GrammarSpec::reference();
    ToyModelConfig model;
    ToyTrainConfig toy_train;
    SaeTrainConfig sae;
    std::size_t layer = 0;
    double top_fraction = 0.35;
    bool include_decoder_bias = true;
    VectorMethod steer_method = VectorMethod::sta;
    bool match_to_caa = true;
    std::size_t activation_sequences = 1024;  // LM sequences whose states train the SAE
    SweepConfig sweep;
    std::vector<double> lambdas{-10.0, -8.0, -2.0, -1.0, 0.0, 1.0, 2.0, 10.0};
    std::vector<double> length_lambdas{-2.0, 0.0, 2.0};
    std::size_t length_max_new = 40;

    void validate() const;
};

// Stage seeds, all split from one root.
struct StageSeeds {
    std::uint64_t corpus, model, sae, sweep;
    static StageSeeds from_root(std::uint64_t root);
};

// Residual states at `layer` for every position of the first `max_sequences`
// sequences, stacked into [N x D].
Tensor dump_activations(const Model& model, const std::vector<TokenSeq>& sequences, std::size_t layer,
                        std::size_t max_sequences);

struct VectorSet {
    AtomStats stats;
    SteeringVector caa;
    SteeringVector sta;  // top-fraction selection
    SteeringVector axbench;
    SteeringVector prompt_caa;
    SteeringVector prompt_sta;
    SteeringVector steer;  // the sweep vector: `steer_method`, SAE-based ones rescaled to the CAA norm
};
VectorSet build_vectors(const Model& model, const SaeParams& sae, const BehaviorCorpus& behavior,
                        const PromptSet& prompts, const ReferenceConfig& config);

struct Analyses {
    SweepReport boundary;
    SweepReport length;
    std::vector<PositionScore> ablation;
    double vanilla_score = 0.0;
    double prompt_cosine = 0.0;  // prompt CAA vs corpus CAA
};
Analyses run_analyses(const Model& model, const SteeringVector& steer, const SteeringVector& caa,
                      const SteeringVector& prompt_caa, const PromptSet& prompts, const BehaviorLexicon& lexicon,
                      const ReferenceConfig& config, std::uint64_t sweep_seed);

// The whole experiment in memory for one root seed.
struct ReferenceRun {
    GeneratedCorpus corpus;
    Model model;
    TrainingReport toy_report;
    SaeParams sae;
    TrainingReport sae_report;
    VectorSet vectors;
    Analyses analyses;
};
ReferenceRun run_reference(const ReferenceConfig& config, std::uint64_t root_seed);

const SweepRow& row_for(const SweepReport& report, double lambda);

}  // namespace sta
