#include "sta/errors.hpp"
#include "sta/steering.hpp"

#include <cmath>

namespace sta {

AtomStats atom_stats_from_means(const AnswerMeans& means, std::size_t layer) {
    if (means.positive.empty() || means.positive.size() != means.negative.size()) {
        throw InputError("atom statistics need a nonempty, paired set of positive and negative means");
    }
    const std::size_t m = means.positive.front().size();
    const std::size_t n = means.positive.size();
    AtomStats s;
    s.delta_a = Tensor({m});
    s.f_pos = Tensor({m});
    s.f_neg = Tensor({m});
    s.n_examples = n;
    s.layer = layer;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& p = means.positive[i];
        const Tensor& q = means.negative[i];
        if (p.size() != m || q.size() != m) {
            throw DimensionError("atom statistics: item " + std::to_string(i) + " has mismatched width");
        }
        for (std::size_t j = 0; j < m; ++j) {
            s.delta_a[j] += p[j] - q[j];
            s.f_pos[j] += std::abs(p[j]) > 0.0 ? 1.0 : 0.0;
            s.f_neg[j] += std::abs(q[j]) > 0.0 ? 1.0 : 0.0;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    s.delta_f = Tensor({m});
    for (std::size_t j = 0; j < m; ++j) {
        s.delta_a[j] *= inv;
        s.f_pos[j] *= inv;
        s.f_neg[j] *= inv;
        s.delta_f[j] = s.f_pos[j] - s.f_neg[j];
    }
    return s;
}

AtomStats collect_atom_stats(const Model& model, const SaeParams& sae, const BehaviorCorpus& corpus,
                             std::size_t layer) {
    return atom_stats_from_means(answer_activation_means(model, sae, corpus, layer), layer);
}

SelectionThresholds thresholds_from_fraction(const AtomStats& stats, double top_fraction) {
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
        throw ParameterError("top_fraction must lie in (0, 1], got " + std::to_string(top_fraction));
    }
    return {rank_threshold(stats.delta_a, top_fraction), rank_threshold(stats.delta_f, top_fraction), top_fraction};
}

Tensor select_target_atoms(const AtomStats& stats, const SelectionThresholds& thresholds, SelectionMode mode) {
    const std::size_t m = stats.delta_a.size();
    if (stats.delta_f.size() != m) {
        throw DimensionError("select_target_atoms: delta_a has " + std::to_string(m) + " atoms but delta_f has " +
                             std::to_string(stats.delta_f.size()));
    }
    const bool use_amplitude = mode != SelectionMode::wo_amplitude;
    const bool use_frequency = mode != SelectionMode::wo_frequency;
    Tensor target({m});
    for (std::size_t j = 0; j < m; ++j) {
        const bool amplitude_ok = !use_amplitude || stats.delta_a[j] >= thresholds.alpha;
        const bool frequency_ok = !use_frequency || stats.delta_f[j] >= thresholds.beta;
        target[j] = amplitude_ok && frequency_ok ? stats.delta_a[j] : 0.0;
    }
    return target;
}

}  // namespace sta
