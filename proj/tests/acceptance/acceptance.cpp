// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "sta/io.hpp"
#include "sta/pipeline.hpp"
#include "sta/reference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace sta;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor normal_tensor(std::mt19937_64& rng, Tensor::Shape shape, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    Tensor t(std::move(shape));
    for (double& x : t.data()) {
        x = normal(rng);
    }
    return t;
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

SaeParams random_sae(std::mt19937_64& rng, std::size_t d, std::size_t m) {
    SaeParams p = SaeParams::zeros(d, m);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    p.w_enc = normal_tensor(rng, {d, m}, s);
    p.w_dec = normal_tensor(rng, {m, d}, s);
    p.b_enc = normal_tensor(rng, {m}, 0.1);
    p.b_dec = normal_tensor(rng, {d}, 0.1);
    std::uniform_real_distribution<double> uni(0.05, 0.5);
    for (double& x : p.theta.data()) {
        x = uni(rng);
    }
    return p;
}

// Per-item mean atom activations: nonnegative, sparse, with exact zeros so
// frequencies and ties both occur.
AnswerMeans random_means(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::bernoulli_distribution active(0.4);
    std::exponential_distribution<double> size(1.0);
    AnswerMeans means;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor p({m}), q({m});
        for (std::size_t j = 0; j < m; ++j) {
            p[j] = active(rng) ? size(rng) : 0.0;
            q[j] = active(rng) ? size(rng) : 0.0;
        }
        means.positive.push_back(std::move(p));
        means.negative.push_back(std::move(q));
    }
    return means;
}

bool same_bits(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

// 1. Gradient check.
Outcome gradcheck() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(derive_seed(seed, "acceptance-gradcheck"));
        const std::size_t d = uniform_int(rng, 4, 8);
        const std::size_t m = uniform_int(rng, 8, 32);
        const SaeParams p = random_sae(rng, d, m);
        const Tensor h = normal_tensor(rng, {8, d});
        SaeTrainConfig c;
        const GradCheckResult r = gradient_check(p, h, c);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-5 && t < 30.0 && checked > 0,
            "max rel err " + fmt(worst) + " over " + std::to_string(checked) + " coords, " + fmt(t) + " s"};
}

// 2. Pass-all STA without decoder bias is the mean decoded difference.
Outcome affine_decode() {
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 50; ++k) {
        std::mt19937_64 rng(derive_seed(k, "acceptance-affine"));
        const std::size_t d = uniform_int(rng, 4, 16), m = uniform_int(rng, 8, 64), n = uniform_int(rng, 1, 16);
        const SaeParams sae = random_sae(rng, d, m);
        const AnswerMeans means = random_means(rng, n, m);
        const AtomStats stats = atom_stats_from_means(means, 0);
        const SteeringVector v =
            sta_vector(select_target_atoms(stats, SelectionThresholds::pass_all(), SelectionMode::full), sae, false);

        Tensor oracle({d});
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor dp = decode(sae, means.positive[i]);
            const Tensor dn = decode(sae, means.negative[i]);
            for (std::size_t c = 0; c < d; ++c) {
                oracle[c] += (dp[c] - dn[c]) / static_cast<double>(n);
            }
        }
        worst = std::max(worst, max_abs_diff(v.values, oracle));
    }
    return {worst <= 1e-10, "max abs diff " + fmt(worst) + " over 50 instances"};
}

// Literal per-atom filter.
Tensor naive_select(const AtomStats& s, double alpha, double beta, SelectionMode mode) {
    Tensor out({s.delta_a.size()});
    for (std::size_t j = 0; j < s.delta_a.size(); ++j) {
        bool keep = false;
        if (mode == SelectionMode::full) {
            keep = s.delta_a[j] >= alpha && s.delta_f[j] >= beta;
        } else if (mode == SelectionMode::wo_amplitude) {
            keep = s.delta_f[j] >= beta;
        } else {
            keep = s.delta_a[j] >= alpha;
        }
        out[j] = keep ? s.delta_a[j] : 0.0;
    }
    return out;
}

// Thresholds drawn from the values themselves (ties), from a fraction, or at random.
SelectionThresholds random_thresholds(std::mt19937_64& rng, const AtomStats& s) {
    switch (uniform_int(rng, 0, 2)) {
    case 0:
        return {s.delta_a[uniform_int(rng, 0, s.delta_a.size() - 1)], s.delta_f[uniform_int(rng, 0, s.delta_f.size() - 1)],
                std::nullopt};
    case 1:
        return thresholds_from_fraction(s, std::uniform_real_distribution<double>(0.01, 1.0)(rng));
    default: {
        std::normal_distribution<double> normal(0.0, 0.5);
        return {normal(rng), normal(rng), std::nullopt};
    }
    }
}

// 3. Selection against the literal oracle.
Outcome selection_oracle() {
    std::size_t mismatches = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        std::mt19937_64 rng(derive_seed(k, "acceptance-selection"));
        const std::size_t m = uniform_int(rng, 1, 64), n = uniform_int(rng, 1, 16);
        const AtomStats s = atom_stats_from_means(random_means(rng, n, m), 0);
        const SelectionThresholds th = random_thresholds(rng, s);
        for (SelectionMode mode : {SelectionMode::full, SelectionMode::wo_amplitude, SelectionMode::wo_frequency}) {
            if (!same_bits(select_target_atoms(s, th, mode), naive_select(s, th.alpha, th.beta, mode))) {
                ++mismatches;
            }
        }
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over 300 selections"};
}

// 4. Pass-all STA is the AxBench path, bit for bit.
Outcome axbench_equivalence() {
    std::size_t mismatches = 0;
    for (std::uint64_t k = 0; k < 50; ++k) {
        std::mt19937_64 rng(derive_seed(k, "acceptance-axbench"));
        const std::size_t d = uniform_int(rng, 4, 16), m = uniform_int(rng, 8, 64), n = uniform_int(rng, 1, 16);
        const SaeParams sae = random_sae(rng, d, m);
        const AtomStats stats = atom_stats_from_means(random_means(rng, n, m), 0);
        for (bool bias : {false, true}) {
            const SteeringVector sta_all =
                sta_vector(select_target_atoms(stats, SelectionThresholds::pass_all(), SelectionMode::full), sae, bias);
            const SteeringVector ax = axbench_vector(stats, sae, bias);
            mismatches += !same_bits(sta_all.values, ax.values);
        }
    }
    return {mismatches == 0, std::to_string(mismatches) + " differing vectors over 100"};
}

struct ReferenceActivations {
    ReferenceConfig config;
    Tensor acts;
    std::uint64_t sae_seed = 0;
};

ReferenceActivations reference_activations() {
    ReferenceActivations r;
    const StageSeeds seeds = StageSeeds::from_root(0);
    const GeneratedCorpus corpus = generate_corpus(r.config.grammar, seeds.corpus);
    ToyModelConfig mc = r.config.model;
    mc.seed = seeds.model;
    Model model = init_model(mc);
    train_toy(model, corpus.lm_sequences, r.config.toy_train);
    r.acts = dump_activations(model, corpus.lm_sequences, r.config.layer, r.config.activation_sequences);
    r.sae_seed = seeds.sae;
    return r;
}

// 5. Sparsity responds to gamma.
Outcome sparsity_control() {
    const ReferenceActivations ref = reference_activations();
    const auto t0 = Clock::now();
    auto run = [&](double gamma) {
        SaeTrainConfig c = ref.config.sae;
        c.gamma = gamma;
        c.seed = ref.sae_seed;
        return train_sae(ref.acts, c).second;
    };
    const TrainingReport lo = run(0.01);
    const TrainingReport hi = run(0.5);
    const double t = seconds_since(t0);
    const double ratio_lo = lo.recon_loss.back() / lo.recon_loss.front();
    const double ratio_hi = hi.recon_loss.back() / hi.recon_loss.front();
    const bool pass = hi.mean_l0.back() < lo.mean_l0.back() && ratio_lo < 0.2 && ratio_hi < 0.2 && t < 120.0;
    return {pass, "L0 " + fmt(lo.mean_l0.back()) + " (gamma 0.01) vs " + fmt(hi.mean_l0.back()) +
                      " (gamma 0.5), recon ratio " + fmt(ratio_lo) + " / " + fmt(ratio_hi) + ", " + fmt(t) + " s"};
}

// 8. Magnitude matching.
Outcome magnitude_matching() {
    double worst_norm = 0.0, worst_idem = 0.0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        std::mt19937_64 rng(derive_seed(k, "acceptance-magnitude"));
        const std::size_t d = uniform_int(rng, 1, 64);
        std::uniform_real_distribution<double> scale(0.01, 10.0);
        SteeringVector v, ref;
        v.values = normal_tensor(rng, {d}, scale(rng));
        ref.values = normal_tensor(rng, {d}, scale(rng));
        v.refresh_norm();
        ref.refresh_norm();
        const SteeringVector once = match_magnitude(v, ref);
        const SteeringVector twice = match_magnitude(once, ref);
        worst_norm = std::max(worst_norm, std::abs(l2_norm(once.values.values()) - l2_norm(ref.values.values())));
        worst_idem = std::max(worst_idem, max_abs_diff(once.values, twice.values));
    }
    return {worst_norm <= 1e-9 && worst_idem <= 1e-12,
            "norm gap " + fmt(worst_norm) + ", idempotence gap " + fmt(worst_idem)};
}

std::set<std::size_t> support(const Tensor& t) {
    std::set<std::size_t> s;
    for (std::size_t j = 0; j < t.size(); ++j) {
        if (t[j] != 0.0) {
            s.insert(j);
        }
    }
    return s;
}

// 11. Full selection is the intersection of the two single-filter ablations.
Outcome ablation_structure() {
    std::size_t mismatches = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        std::mt19937_64 rng(derive_seed(k, "acceptance-ablation"));
        const std::size_t m = uniform_int(rng, 1, 64), n = uniform_int(rng, 1, 16);
        const AtomStats s = atom_stats_from_means(random_means(rng, n, m), 0);
        const SelectionThresholds th = random_thresholds(rng, s);
        const std::set<std::size_t> full = support(select_target_atoms(s, th, SelectionMode::full));
        const std::set<std::size_t> wa = support(select_target_atoms(s, th, SelectionMode::wo_amplitude));
        const std::set<std::size_t> wf = support(select_target_atoms(s, th, SelectionMode::wo_frequency));
        std::set<std::size_t> both;
        std::set_intersection(wa.begin(), wa.end(), wf.begin(), wf.end(), std::inserter(both, both.begin()));
        mismatches += full != both;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over 100 instances"};
}

double row_fluency(const SweepReport& r, double lambda) {
    return row_for(r, lambda).fluency;
}

double top_mass(const SweepReport& r, double lambda) {
    return total_probability(row_for(r, lambda).top_tokens);
}

struct SeedResults {
    std::vector<ReferenceRun> runs;
    double seconds = 0.0;
};

std::string list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += (i ? " " : "") + fmt(v[i]);
    }
    return s;
}

std::size_t count(const std::vector<bool>& v) {
    return static_cast<std::size_t>(std::count(v.begin(), v.end(), true));
}

// 6. Steering moves the behavior score in the requested direction.
Outcome efficacy(const SeedResults& r) {
    std::vector<bool> ok;
    std::vector<double> gains;
    for (const auto& run : r.runs) {
        const SweepReport& b = run.analyses.boundary;
        const double s0 = *row_for(b, 0.0).behavior_score;
        const double up = *row_for(b, 2.0).behavior_score;
        const double down = *row_for(b, -2.0).behavior_score;
        gains.push_back(up - s0);
        ok.push_back(up - s0 >= 0.10 && down < s0);
    }
    const std::size_t n = count(ok);
    return {n >= 4 && r.seconds < 600.0, std::to_string(n) + "/5 seeds; gain at +2: " + list(gains) + "; " +
                                             fmt(r.seconds) + " s for 5 seeds"};
}

// 7. Strong steering degrades fluency and flattens the next-token distribution.
Outcome boundary_collapse(const SeedResults& r) {
    std::vector<bool> fluency_ok, mass_ok;
    std::vector<double> f10, f1;
    for (const auto& run : r.runs) {
        const SweepReport& b = run.analyses.boundary;
        const double at10 = 0.5 * (row_fluency(b, 10.0) + row_fluency(b, -10.0));
        const double at1 = 0.5 * (row_fluency(b, 1.0) + row_fluency(b, -1.0));
        f10.push_back(at10);
        f1.push_back(at1);
        fluency_ok.push_back(at10 < at1);
        mass_ok.push_back(top_mass(b, -8.0) < top_mass(b, 0.0));
    }
    const std::size_t nf = count(fluency_ok), nm = count(mass_ok);
    return {nf >= 4 && nm >= 4, "fluency |l|=10 below |l|=1 in " + std::to_string(nf) + "/5 (" + list(f10) + " vs " +
                                    list(f1) + "); top-5 mass at -8 below vanilla in " + std::to_string(nm) + "/5"};
}

// 9. Prompt-derived and corpus-derived CAA vectors point the same way.
Outcome prompt_consistency(const SeedResults& r) {
    std::vector<double> cos;
    std::size_t n = 0;
    for (const auto& run : r.runs) {
        cos.push_back(run.analyses.prompt_cosine);
        n += run.analyses.prompt_cosine > 0.0;
    }
    return {n >= 4, std::to_string(n) + "/5 seeds positive; cosines " + list(cos)};
}

// 10. Length steering is monotone.
Outcome length_steering(const SeedResults& r) {
    std::size_t n = 0;
    std::string detail;
    for (const auto& run : r.runs) {
        const SweepReport& l = run.analyses.length;
        const double a = row_for(l, -2.0).mean_length, b = row_for(l, 0.0).mean_length, c = row_for(l, 2.0).mean_length;
        n += a <= b && b <= c;
        detail += " (" + fmt(a) + ", " + fmt(b) + ", " + fmt(c) + ")";
    }
    return {n >= 4, std::to_string(n) + "/5 seeds monotone; lengths" + detail};
}

bool model_bits_equal(const Model& a, const Model& b) {
    if (!same_bits(a.token_embedding, b.token_embedding) || a.layers.size() != b.layers.size()) {
        return false;
    }
    return weight_checksum(a) == weight_checksum(b);
}

std::string snapshot(const fs::path& sweep_dir) {
    std::string all;
    for (const char* f : {"boundary.csv", "length.csv", "prompt_position.csv"}) {
        all += read_text(sweep_dir / f);
    }
    return all;
}

// 12. Round-trips and pipeline reproducibility.
Outcome serialization(const ReferenceRun& run) {
    const fs::path root = fs::temp_directory_path() / "sta-acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    std::vector<std::string> failures;

    save_model(root / "model.json", run.model);
    const Model m = load_model(root / "model.json");
    save_model(root / "model2.json", m);
    if (!model_bits_equal(m, run.model) || read_text(root / "model.json") != read_text(root / "model2.json")) {
        failures.push_back("model");
    }
    save_sae(root / "sae.json", run.sae);
    const SaeParams s = load_sae(root / "sae.json");
    if (!same_bits(s.w_enc, run.sae.w_enc) || !same_bits(s.w_dec, run.sae.w_dec) ||
        !same_bits(s.b_enc, run.sae.b_enc) || !same_bits(s.b_dec, run.sae.b_dec) ||
        !same_bits(s.theta, run.sae.theta) || !same_bits(s.input_mean, run.sae.input_mean)) {
        failures.push_back("sae");
    }
    for (const SteeringVector* v : {&run.vectors.caa, &run.vectors.sta, &run.vectors.steer, &run.vectors.prompt_sta}) {
        save_vector(root / "v.json", *v);
        const SteeringVector back = load_vector(root / "v.json");
        if (!same_bits(back.values, v->values) || back.norm != v->norm) {
            failures.push_back("vector " + std::string(to_string(v->method)));
        }
    }

    PipelineConfig pc;
    const fs::path a = root / "pipe-a", b = root / "pipe-b";
    run_pipeline(pc, a);
    const std::string first = snapshot(a / "sweep");
    const PipelineResult again = run_pipeline(pc, a);
    const bool all_skipped =
        std::all_of(again.stages.begin(), again.stages.end(), [](const StageOutcome& s) { return s.skipped; });
    if (!all_skipped || snapshot(a / "sweep") != first) {
        failures.push_back("pipeline rerun");
    }
    fs::remove_all(a / "sweep");
    run_pipeline(pc, a);
    if (snapshot(a / "sweep") != first) {
        failures.push_back("pipeline recomputed sweep");
    }
    run_pipeline(pc, b);
    if (snapshot(b / "sweep") != first) {
        failures.push_back("pipeline fresh directory");
    }
    fs::remove_all(root);

    std::string detail = failures.empty() ? "model, SAE, 4 vectors bitwise; 3 pipeline runs give identical CSVs"
                                          : "failed:";
    for (const auto& f : failures) {
        detail += " " + f;
    }
    return {failures.empty(), detail};
}

}  // namespace

int main() {
    std::vector<std::pair<int, std::function<Outcome()>>> quick{
        {1, gradcheck}, {2, affine_decode}, {3, selection_oracle}, {4, axbench_equivalence},
        {5, sparsity_control}, {8, magnitude_matching}, {11, ablation_structure},
    };
    std::vector<std::pair<int, Outcome>> results;
    auto report = [&](int id, const std::function<Outcome()>& f) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::printf("criterion %2d: %s  %s  [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        results.emplace_back(id, o);
    };
    for (const auto& [id, f] : quick) {
        report(id, f);
    }

    SeedResults seeds;
    std::string seed_error;
    const auto t0 = Clock::now();
    try {
        const ReferenceConfig rc;
        for (std::uint64_t s = 0; s < 5; ++s) {
            seeds.runs.push_back(run_reference(rc, s));
        }
    } catch (const std::exception& e) {
        seed_error = e.what();
    }
    seeds.seconds = seconds_since(t0);
    auto seeded = [&](Outcome (*f)(const SeedResults&)) {
        return [&, f]() -> Outcome {
            if (!seed_error.empty()) {
                return {false, "reference run failed: " + seed_error};
            }
            return f(seeds);
        };
    };
    report(6, seeded(efficacy));
    report(7, seeded(boundary_collapse));
    report(9, seeded(prompt_consistency));
    report(10, seeded(length_steering));
    report(12, [&]() -> Outcome {
        if (seeds.runs.empty()) {
            return {false, "reference run failed: " + seed_error};
        }
        return serialization(seeds.runs.front());
    });

    std::sort(results.begin(), results.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::size_t failed = 0;
    for (const auto& [id, o] : results) {
        failed += !o.pass;
    }
    std::printf("%zu/%zu criteria passed\n", results.size() - failed, results.size());
    return failed == 0 ? 0 : 1;
}
