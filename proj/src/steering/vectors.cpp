#include "sta/errors.hpp"
#include "sta/steering.hpp"

namespace sta {

void SteeringVector::refresh_norm() {
    norm = l2_norm(values.data());
}

SteeringVector sta_vector(const Tensor& a_target, const SaeParams& sae, bool include_decoder_bias,
                          VectorMethod method) {
    if (a_target.rank() != 1 || a_target.size() != sae.latent_dim()) {
        throw DimensionError("sta_vector: a_target has shape " + shape_string(a_target.shape()) +
                             " but the SAE has " + std::to_string(sae.latent_dim()) + " atoms");
    }
    SteeringVector v;
    v.values = Tensor({sae.input_dim()});
    kernels::row_times_matrix(a_target.data(), sae.w_dec, v.values.data());
    if (include_decoder_bias) {
        for (std::size_t i = 0; i < v.values.size(); ++i) {
            v.values[i] += sae.b_dec[i];
        }
    }
    v.method = method;
    v.include_decoder_bias = include_decoder_bias;
    for (double a : a_target.data()) {
        v.active_atoms += a != 0.0 ? 1 : 0;
    }
    v.refresh_norm();
    return v;
}

SteeringVector axbench_vector(const AtomStats& stats, const SaeParams& sae, bool include_decoder_bias) {
    const Tensor all = select_target_atoms(stats, SelectionThresholds::pass_all(), SelectionMode::full);
    SteeringVector v = sta_vector(all, sae, include_decoder_bias, VectorMethod::sae_axbench);
    v.layer = stats.layer;
    return v;
}

SteeringVector caa_from_means(const AnswerMeans& means, std::size_t layer) {
    if (means.positive.empty() || means.positive.size() != means.negative.size()) {
        throw InputError("CAA needs a nonempty, paired set of positive and negative means");
    }
    const std::size_t d = means.positive.front().size();
    SteeringVector v;
    v.values = Tensor({d});
    for (std::size_t i = 0; i < means.positive.size(); ++i) {
        const Tensor& p = means.positive[i];
        const Tensor& q = means.negative[i];
        if (p.size() != d || q.size() != d) {
            throw DimensionError("CAA: item " + std::to_string(i) + " has mismatched width");
        }
        for (std::size_t j = 0; j < d; ++j) {
            v.values[j] += p[j] - q[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(means.positive.size());
    for (double& x : v.values.data()) {
        x *= inv;
    }
    v.method = VectorMethod::caa;
    v.layer = layer;
    v.refresh_norm();
    return v;
}

SteeringVector caa_vector(const Model& model, const BehaviorCorpus& corpus, std::size_t layer) {
    SteeringVector v = caa_from_means(answer_hidden_means(model, corpus, layer), layer);
    v.source_hash = corpus.digest();
    return v;
}

SteeringVector match_magnitude(const SteeringVector& v, const SteeringVector& reference) {
    const double own = l2_norm(v.values.data());
    const double target = l2_norm(reference.values.data());
    if (own == 0.0) {
        throw DegenerateError("match_magnitude: cannot rescale a zero vector");
    }
    if (!(target > 0.0)) {
        throw DegenerateError("match_magnitude: reference vector has zero norm");
    }
    SteeringVector out = v;
    if (own != target) {
        const double factor = target / own;
        for (double& x : out.values.data()) {
            x *= factor;
        }
    }
    out.refresh_norm();
    return out;
}

SteeringVector prompt_to_vector(const Model& model, const TokenSeq& prompt, const PromptVectorOptions& options,
                                const SaeParams* sae) {
    if (options.method != VectorMethod::prompt_caa && options.method != VectorMethod::prompt_sta) {
        throw ParameterError("prompt_to_vector: method must be prompt-caa or prompt-sta, got " +
                             std::string(to_string(options.method)));
    }
    TokenSeq positive{tokens::bos};
    positive.insert(positive.end(), prompt.begin(), prompt.end());
    positive.push_back(tokens::space);
    const TokenSeq negative{tokens::bos, tokens::space};

    const Tensor hp = hidden_states(model, positive, options.layer);
    const Tensor hn = hidden_states(model, negative, options.layer);
    const Tensor pos_state = Tensor::vector(std::vector<double>(hp.row(hp.rows() - 1).begin(), hp.row(hp.rows() - 1).end()));
    const Tensor neg_state = Tensor::vector(std::vector<double>(hn.row(hn.rows() - 1).begin(), hn.row(hn.rows() - 1).end()));

    SteeringVector v;
    if (options.method == VectorMethod::prompt_caa) {
        v.values = subtract(pos_state, neg_state);
        v.method = VectorMethod::prompt_caa;
        v.refresh_norm();
    } else {
        if (sae == nullptr) {
            throw ConfigError("prompt-sta requires an SAE");
        }
        if (sae->input_dim() != model.config.d_model) {
            throw ConfigError("SAE input_dim " + std::to_string(sae->input_dim()) + " does not match model d_model " +
                              std::to_string(model.config.d_model));
        }
        AnswerMeans single;
        single.positive.push_back(encode(*sae, pos_state));
        single.negative.push_back(encode(*sae, neg_state));
        const AtomStats stats = atom_stats_from_means(single, options.layer);
        const SelectionThresholds th = thresholds_from_fraction(stats, options.top_fraction);
        const Tensor target = select_target_atoms(stats, th, options.mode);
        v = sta_vector(target, *sae, options.include_decoder_bias, VectorMethod::prompt_sta);
        v.alpha = th.alpha;
        v.beta = th.beta;
        v.top_fraction = th.top_fraction;
    }
    v.layer = options.layer;
    v.aggregation = "final-space-token";
    v.degenerate = pos_state == neg_state;
    v.source_hash = digest_tokens(prompt);
    return v;
}

}  // namespace sta
