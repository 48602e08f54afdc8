#include "sta/cli.hpp"
#include "sta/errors.hpp"
#include "sta/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <sstream>

namespace sta {
namespace {

fs::path out_path(const std::string& p) {
    fs::path path(p);
    const char* root = std::getenv(kOutRootEnv);
    if (path.is_relative() && root != nullptr && *root != '\0') {
        return fs::path(root) / path;
    }
    return path;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

TokenSeq parse_tokens(const std::string& text) {
    std::string s = text;
    for (char& c : s) {
        if (c == ',') {
            c = ' ';
        }
    }
    std::istringstream in(s);
    TokenSeq out;
    std::string word;
    while (in >> word) {
        try {
            std::size_t used = 0;
            const long v = std::stol(word, &used);
            if (used != word.size() || v < 0) {
                throw std::invalid_argument(word);
            }
            out.push_back(static_cast<TokenId>(v));
        } catch (const std::logic_error&) {
            throw InputError("bad token id '" + word + "' in \"" + text + "\"");
        }
    }
    return out;
}

std::string tokens_text(const TokenSeq& t) {
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i) {
        s += (i ? " " : "") + std::to_string(t[i]);
    }
    return s;
}

// Artifacts that are single files carry a sidecar "<file>.manifest.json".
fs::path sidecar(const fs::path& file) {
    return fs::path(file.string() + ".manifest.json");
}

void write_file_manifest(const fs::path& file, const std::string& type, const Json& params,
                         const std::map<std::string, std::string>& inputs, const std::vector<fs::path>& extra = {}) {
    Manifest m;
    m.artifact_type = type;
    m.params = params;
    m.inputs = inputs;
    m.outputs[file.filename().string()] = sha256_file(file);
    for (const auto& e : extra) {
        m.outputs[e.filename().string()] = sha256_file(e);
    }
    save_manifest(sidecar(file), m);
}

// Checks an input file against its sidecar manifest, or against the manifest
// of the directory holding it (pipeline stage layout), when either exists.
void verify_artifact(const fs::path& file) {
    for (const fs::path& mp : {sidecar(file), file.parent_path() / "manifest.json"}) {
        if (!fs::exists(mp)) {
            continue;
        }
        const Manifest m = load_manifest(mp);
        const auto it = m.outputs.find(file.filename().string());
        if (it == m.outputs.end()) {
            continue;
        }
        if (sha256_file(file) != it->second) {
            throw IntegrityError("hash mismatch for " + file.string() + " (recorded in " + mp.string() + ")");
        }
        return;
    }
}

Model load_model_checked(const fs::path& p) {
    verify_artifact(p);
    return load_model(p);
}

SaeParams load_sae_checked(const fs::path& p) {
    verify_artifact(p);
    return load_sae(p);
}

SteeringVector load_vector_checked(const fs::path& p) {
    verify_artifact(p);
    return load_vector(p);
}

fs::path corpus_file(const fs::path& dir, const char* name) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) {
        throw ConfigError("corpus directory " + dir.string() + " has no " + name);
    }
    verify_artifact(p);
    return p;
}

void check_layer(const Model& model, std::size_t layer) {
    if (layer >= model.config.n_layers) {
        throw ConfigError("layer " + std::to_string(layer) + " is outside the model's " +
                          std::to_string(model.config.n_layers) + " layers");
    }
}

void check_vector_fits(const Model& model, const SteeringVector& v) {
    if (v.dim() != model.config.d_model) {
        throw ConfigError("vector dimension " + std::to_string(v.dim()) + " does not match model dimension " +
                          std::to_string(model.config.d_model));
    }
    check_layer(model, v.layer);
}

void check_sae_fits(const Model& model, const SaeParams& sae) {
    if (sae.input_dim() != model.config.d_model) {
        throw ConfigError("SAE input dimension " + std::to_string(sae.input_dim()) +
                          " does not match model dimension " + std::to_string(model.config.d_model));
    }
}

Json tokens_json(const TokenSeq& t) {
    return Json(t);
}

void write_sweep_files(const fs::path& csv_path, const SweepReport& report, const std::string& type,
                       const Json& params, const std::map<std::string, std::string>& inputs) {
    std::ostringstream csv;
    write_sweep_csv(csv, report);
    write_text(csv_path, csv.str());
    fs::path json_path = csv_path;
    json_path.replace_extension(".json");
    write_text(json_path, sweep_json(report));
    write_file_manifest(csv_path, type, params, inputs, {json_path});
}

void print_rows(std::ostream& out, const SweepReport& report) {
    for (const auto& row : report.rows) {
        out << "lambda " << num(row.lambda);
        if (row.behavior_score) {
            out << "  score " << num(*row.behavior_score);
        }
        out << "  fluency " << num(row.fluency) << "  length " << num(row.mean_length);
        if (!row.top_tokens.empty()) {
            out << "  top-" << row.top_tokens.size() << " mass " << num(total_probability(row.top_tokens));
        }
        out << "\n";
    }
}

// Random SAE plus inputs for the finite-difference check.
std::pair<SaeParams, Tensor> random_instance(std::size_t d, std::size_t m, std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.05, 0.5);
    SaeParams p = SaeParams::zeros(d, m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto* t : {&p.w_enc, &p.w_dec}) {
        for (double& x : t->data()) {
            x = normal(rng) * scale;
        }
    }
    for (double& x : p.b_enc.data()) {
        x = 0.1 * normal(rng);
    }
    for (double& x : p.b_dec.data()) {
        x = 0.1 * normal(rng);
    }
    for (double& x : p.theta.data()) {
        x = uni(rng);
    }
    std::vector<double> h(rows * d);
    for (double& x : h) {
        x = normal(rng);
    }
    return {std::move(p), Tensor({rows, d}, std::move(h))};
}

struct Options {
    std::uint64_t seed = 0;

    // gen-corpus
    std::string grammar_file;
    std::optional<std::size_t> behavior_items, lm_sequences, eval_prompts;

    // shared paths
    std::string out, corpus, model, sae, vector, activations, lexicon, match;

    // toy model
    ToyModelConfig model_config;
    ToyTrainConfig toy;

    // activations
    std::size_t layer = 0;
    std::size_t max_sequences = 1024;

    // SAE
    SaeTrainConfig sae_config;
    std::string optimizer = "adam";
    bool no_center = false;

    // grad-check
    std::size_t gc_input_dim = 6, gc_latent_dim = 16, gc_rows = 8, gc_seeds = 10;
    double gc_tolerance = 1e-5;

    // vectors
    std::string method = "sta";
    std::string mode = "full";
    std::string prompt;
    double top_fraction = 0.35;
    bool decoder_bias = true;

    // steer
    double lambda = 1.0;
    std::size_t max_new = 24;
    double temperature = 0.0;

    // sweeps
    std::vector<double> lambdas;
    SweepConfig sweep;
    std::size_t length_max_new = 40;

    // pipeline
    ReferenceConfig reference;
    std::string steer_method = "sta";
    bool no_match = false;
};

void add_seed(CLI::App* c, Options& o) {
    c->add_option("--seed", o.seed, "Root seed; stage seeds are split from it")->capture_default_str();
}

int cmd_gen_corpus(Options& o, std::ostream& out) {
    GrammarSpec spec = GrammarSpec::reference();
    if (!o.grammar_file.empty()) {
        spec = grammar_from_json(read_json(o.grammar_file));
    }
    if (o.behavior_items) spec.behavior_items = *o.behavior_items;
    if (o.lm_sequences) spec.lm_sequences = *o.lm_sequences;
    if (o.eval_prompts) spec.eval_prompts = *o.eval_prompts;
    spec.validate();
    const std::uint64_t seed = StageSeeds::from_root(o.seed).corpus;
    const fs::path dir = out_path(o.out);
    const GeneratedCorpus c = generate_corpus(spec, seed);
    save_generated_corpus(dir, c);
    Manifest m;
    m.artifact_type = "corpus";
    m.params = {{"grammar", grammar_to_json(spec)}, {"seed", seed}};
    for (const char* f : {corpus_files::lm, corpus_files::behavior, corpus_files::lexicon, corpus_files::prompts}) {
        m.outputs[f] = sha256_file(dir / f);
    }
    save_manifest(dir / "manifest.json", m);
    out << "wrote " << c.lm_sequences.size() << " LM sequences and " << c.behavior.items.size()
        << " behavior items to " << dir.string() << "\n";
    return 0;
}

int cmd_train_toy(Options& o, std::ostream& out) {
    const fs::path lm = corpus_file(o.corpus, corpus_files::lm);
    ToyModelConfig mc = o.model_config;
    mc.seed = StageSeeds::from_root(o.seed).model;
    mc.validate();
    const auto sequences = load_sequences(lm);
    Model model = init_model(mc);
    const TrainingReport report = train_toy(model, sequences, o.toy);
    const fs::path path = out_path(o.out);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    save_model(path, model);
    fs::path report_path = path;
    report_path.replace_extension(".report.json");
    write_json(report_path, report_to_json(report));
    write_file_manifest(path, "model",
                        {{"vocab_size", mc.vocab_size}, {"d_model", mc.d_model}, {"n_layers", mc.n_layers},
                         {"n_heads", mc.n_heads}, {"max_seq", mc.max_seq}, {"seed", mc.seed},
                         {"train", toy_train_to_json(o.toy)}},
                        {{"lm", sha256_file(lm)}}, {report_path});
    out << "loss " << num(report.loss.front()) << " -> " << num(report.loss.back()) << "; wrote " << path.string()
        << "\n";
    return 0;
}

int cmd_dump_activations(Options& o, std::ostream& out) {
    const Model model = load_model_checked(o.model);
    check_layer(model, o.layer);
    const fs::path lm = corpus_file(o.corpus, corpus_files::lm);
    const Tensor acts = dump_activations(model, load_sequences(lm), o.layer, o.max_sequences);
    const fs::path path = out_path(o.out);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    save_activations(path, acts);
    write_file_manifest(path, "activations", {{"layer", o.layer}, {"max_sequences", o.max_sequences}},
                        {{"model", sha256_file(o.model)}, {"lm", sha256_file(lm)}});
    out << "wrote " << acts.rows() << " x " << acts.cols() << " states to " << path.string() << "\n";
    return 0;
}

int cmd_train_sae(Options& o, std::ostream& out) {
    SaeTrainConfig sc = o.sae_config;
    sc.seed = StageSeeds::from_root(o.seed).sae;
    if (o.optimizer == "adam") {
        sc.optimizer = SaeOptimizer::adam;
    } else if (o.optimizer == "sgd") {
        sc.optimizer = SaeOptimizer::sgd;
    } else {
        throw ParameterError("unknown optimizer '" + o.optimizer + "' (expected adam or sgd)");
    }
    sc.center = !o.no_center;
    sc.validate();
    verify_artifact(o.activations);
    const Tensor acts = load_activations(o.activations);
    auto [sae, report] = train_sae(acts, sc);
    const fs::path path = out_path(o.out);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    save_sae(path, sae, &sc);
    fs::path report_path = path;
    report_path.replace_extension(".report.json");
    write_json(report_path, report_to_json(report));
    write_file_manifest(path, "sae", sae_train_to_json(sc), {{"activations", sha256_file(o.activations)}},
                        {report_path});
    out << "recon " << num(report.recon_loss.front()) << " -> " << num(report.recon_loss.back()) << ", mean L0 "
        << num(report.mean_l0.back()) << "; wrote " << path.string() << "\n";
    return 0;
}

int cmd_grad_check(Options& o, std::ostream& out) {
    if (o.gc_input_dim == 0 || o.gc_latent_dim == 0 || o.gc_rows == 0 || o.gc_seeds == 0) {
        throw ParameterError("grad-check sizes must be positive");
    }
    SaeTrainConfig sc = o.sae_config;
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (std::size_t s = 0; s < o.gc_seeds; ++s) {
        const auto [params, h] = random_instance(o.gc_input_dim, o.gc_latent_dim, o.gc_rows,
                                                 derive_seed(o.seed, "grad-check-" + std::to_string(s)));
        const GradCheckResult r = gradient_check(params, h, sc);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    const bool ok = worst <= o.gc_tolerance;
    out << (ok ? "PASS" : "FAIL") << " max relative error " << num(worst) << " over " << checked
        << " coordinates (" << skipped << " skipped near kinks), tolerance " << num(o.gc_tolerance) << "\n";
    return ok ? 0 : 2;
}

int cmd_build_vector(Options& o, std::ostream& out) {
    const VectorMethod method = parse_vector_method(o.method);
    const SelectionMode mode = parse_selection_mode(o.mode);
    if (!(o.top_fraction > 0.0 && o.top_fraction <= 1.0)) {
        throw ParameterError("top_fraction must lie in (0, 1]");
    }
    const bool needs_sae =
        method == VectorMethod::sta || method == VectorMethod::sae_axbench || method == VectorMethod::prompt_sta;
    if (needs_sae && o.sae.empty()) {
        throw ConfigError("method " + std::string(to_string(method)) + " needs an SAE (--sae)");
    }
    const bool from_prompt = method == VectorMethod::prompt_caa || method == VectorMethod::prompt_sta;
    if (o.corpus.empty() && !(from_prompt && !o.prompt.empty())) {
        throw ConfigError("method " + std::string(to_string(method)) + " needs --corpus" +
                          (from_prompt ? " or --prompt" : ""));
    }
    const Model model = load_model_checked(o.model);
    check_layer(model, o.layer);
    std::optional<SaeParams> sae;
    std::map<std::string, std::string> inputs{{"model", sha256_file(o.model)}};
    if (!o.sae.empty()) {
        sae = load_sae_checked(o.sae);
        check_sae_fits(model, *sae);
        inputs["sae"] = sha256_file(o.sae);
    }

    SteeringVector v;
    if (from_prompt) {
        TokenSeq prompt;
        if (!o.prompt.empty()) {
            prompt = parse_tokens(o.prompt);
        } else {
            const fs::path pf = corpus_file(o.corpus, corpus_files::prompts);
            prompt = load_prompts(pf).system_prompt;
            inputs["prompts"] = sha256_file(pf);
        }
        PromptVectorOptions opts;
        opts.method = method;
        opts.layer = o.layer;
        opts.top_fraction = o.top_fraction;
        opts.include_decoder_bias = o.decoder_bias;
        opts.mode = mode;
        v = prompt_to_vector(model, prompt, opts, sae ? &*sae : nullptr);
    } else {
        const fs::path bf = corpus_file(o.corpus, corpus_files::behavior);
        const BehaviorCorpus behavior = load_behavior_corpus(bf);
        inputs["behavior"] = sha256_file(bf);
        if (method == VectorMethod::caa) {
            v = caa_vector(model, behavior, o.layer);
        } else {
            const AtomStats stats = collect_atom_stats(model, *sae, behavior, o.layer);
            if (method == VectorMethod::sae_axbench) {
                v = axbench_vector(stats, *sae, o.decoder_bias);
            } else {
                const SelectionThresholds th = thresholds_from_fraction(stats, o.top_fraction);
                v = sta_vector(select_target_atoms(stats, th, mode), *sae, o.decoder_bias);
                v.layer = o.layer;
                v.alpha = th.alpha;
                v.beta = th.beta;
                v.top_fraction = th.top_fraction;
            }
            v.source_hash = behavior.digest();
        }
    }
    if (!o.match.empty()) {
        v = match_magnitude(v, load_vector_checked(o.match));
        inputs["match"] = sha256_file(o.match);
    }
    const fs::path path = out_path(o.out);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    save_vector(path, v);
    write_file_manifest(path, "vector",
                        {{"method", std::string(to_string(method))},
                         {"mode", std::string(to_string(mode))},
                         {"layer", o.layer},
                         {"top_fraction", o.top_fraction},
                         {"include_decoder_bias", o.decoder_bias},
                         {"matched", !o.match.empty()}},
                        inputs);

    out << "method " << to_string(v.method) << "  layer " << v.layer << "  norm " << num(v.norm) << "\n";
    if (needs_sae) {
        out << "active atoms " << v.active_atoms;
        if (v.alpha) out << "  alpha " << num(*v.alpha);
        if (v.beta) out << "  beta " << num(*v.beta);
        if (v.top_fraction) out << "  top_fraction " << num(*v.top_fraction);
        out << "\n";
    }
    if (v.degenerate) {
        out << "warning: positive and negative inputs coincide; the vector is zero\n";
    }
    out << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_steer(Options& o, std::ostream& out) {
    const Model model = load_model_checked(o.model);
    const SteeringVector v = load_vector_checked(o.vector);
    check_vector_fits(model, v);
    std::optional<BehaviorLexicon> lexicon;
    if (!o.lexicon.empty()) {
        verify_artifact(o.lexicon);
        lexicon = load_lexicon(o.lexicon);
    } else if (!o.corpus.empty()) {
        lexicon = load_lexicon(corpus_file(o.corpus, corpus_files::lexicon));
    }
    if (lexicon) {
        lexicon->validate(model.config.vocab_size);
    }
    TokenSeq prompt = parse_tokens(o.prompt);
    if (prompt.empty() || prompt.front() != 1) {
        prompt.insert(prompt.begin(), 1);
    }
    validate_tokens(model, prompt);

    std::optional<SteerHook> hook;
    if (o.lambda != 0.0) {
        hook = SteerHook{v.layer, v.values, o.lambda};
    }
    GenerateConfig gc;
    gc.max_new = o.max_new;
    gc.temperature = o.temperature;
    gc.seed = derive_seed(o.seed, "steer");
    const TokenSeq continuation = generate(model, prompt, gc, hook);

    out << "lambda " << num(o.lambda) << "\n";
    out << "prompt " << tokens_text(prompt) << "\n";
    out << "output " << tokens_text(continuation) << "\n";
    if (lexicon) {
        out << "behavior_score " << num(behavior_score(model, {prompt}, hook, *lexicon)) << "\n";
    }
    if (continuation.size() >= 2) {
        out << "fluency " << num(fluency_ngram(continuation, 2)) << "\n";
    } else {
        out << "fluency n/a (fewer than 2 generated tokens)\n";
    }
    return 0;
}

SweepConfig sweep_from(const Options& o, const std::string& label) {
    SweepConfig s = o.sweep;
    s.seed = derive_seed(StageSeeds::from_root(o.seed).sweep, label);
    return s;
}

int cmd_sweep(Options& o, std::ostream& out) {
    const Model model = load_model_checked(o.model);
    const SteeringVector v = load_vector_checked(o.vector);
    check_vector_fits(model, v);
    const fs::path pf = corpus_file(o.corpus, corpus_files::prompts);
    const fs::path lf = corpus_file(o.corpus, corpus_files::lexicon);
    const PromptSet prompts = load_prompts(pf);
    const BehaviorLexicon lexicon = load_lexicon(lf);
    SweepConfig sc = sweep_from(o, "boundary");
    sc.probe_prompt = prompts.probe_prompt;
    const std::vector<double> lambdas = o.lambdas.empty() ? ReferenceConfig{}.lambdas : o.lambdas;
    const SweepReport report = boundary_sweep(model, v, lambdas, prompts.eval_prompts, lexicon, sc);
    print_rows(out, report);
    const fs::path path = out_path(o.out);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    Json params = sweep_config_to_json(sc);
    params["lambdas"] = lambdas;
    write_sweep_files(path, report, "sweep", params,
                      {{"model", sha256_file(o.model)}, {"vector", sha256_file(o.vector)},
                       {"prompts", sha256_file(pf)}, {"lexicon", sha256_file(lf)}});
    out << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_length_sweep(Options& o, std::ostream& out) {
    const Model model = load_model_checked(o.model);
    check_layer(model, o.layer);
    const fs::path pf = corpus_file(o.corpus, corpus_files::prompts);
    const PromptSet prompts = load_prompts(pf);
    SweepConfig sc = sweep_from(o, "length");
    sc.probe_prompt.clear();
    sc.max_new = o.length_max_new;
    const std::vector<double> lambdas = o.lambdas.empty() ? ReferenceConfig{}.length_lambdas : o.lambdas;
    const SweepReport report =
        length_steering_eval(model, prompts.length_pair, o.layer, lambdas, prompts.length_prompts, sc);
    print_rows(out, report);
    const fs::path path = out_path(o.out);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    Json params = sweep_config_to_json(sc);
    params["lambdas"] = lambdas;
    params["layer"] = o.layer;
    write_sweep_files(path, report, "length-sweep", params,
                      {{"model", sha256_file(o.model)}, {"prompts", sha256_file(pf)}});
    out << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_prompt_ablation(Options& o, std::ostream& out) {
    const Model model = load_model_checked(o.model);
    const fs::path pf = corpus_file(o.corpus, corpus_files::prompts);
    const fs::path lf = corpus_file(o.corpus, corpus_files::lexicon);
    const PromptSet prompts = load_prompts(pf);
    const BehaviorLexicon lexicon = load_lexicon(lf);
    const TokenSeq prompt = o.prompt.empty() ? prompts.system_prompt : parse_tokens(o.prompt);
    const auto scores = prompt_position_ablation(model, prompt, prompts.eval_prompts, lexicon);
    const double vanilla = behavior_score(model, prompts.eval_prompts, std::nullopt, lexicon);
    out << "none  " << num(vanilla) << "\n";
    for (const auto& s : scores) {
        out << to_string(s.position) << "  " << num(s.behavior_score) << "\n";
    }
    const fs::path path = out_path(o.out);
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ostringstream csv;
    write_ablation_csv(csv, scores, vanilla);
    write_text(path, csv.str());
    write_file_manifest(path, "prompt-ablation", {{"prompt", tokens_json(prompt)}},
                        {{"model", sha256_file(o.model)}, {"prompts", sha256_file(pf)}, {"lexicon", sha256_file(lf)}});
    out << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_pipeline(Options& o, std::ostream& out) {
    PipelineConfig pc;
    pc.reference = o.reference;
    pc.reference.steer_method = parse_vector_method(o.steer_method);
    pc.reference.match_to_caa = !o.no_match;
    pc.reference.include_decoder_bias = o.decoder_bias;
    pc.reference.top_fraction = o.top_fraction;
    pc.reference.layer = o.layer;
    if (!o.lambdas.empty()) {
        pc.reference.lambdas = o.lambdas;
    }
    pc.seed = o.seed;
    const fs::path dir = out_path(o.out);
    const PipelineResult r = run_pipeline(pc, dir);
    for (const auto& s : r.stages) {
        out << s.name << (s.skipped ? "  skipped (up to date)" : "  done") << "\n";
    }
    const Json summary = read_json(dir / "sweep" / "summary.json");
    out << "vanilla behavior_score " << num(summary.at("vanilla_behavior_score").get<double>())
        << "  prompt/corpus CAA cosine " << num(summary.at("prompt_vector_cosine").get<double>()) << "\n";
    out << "results in " << (dir / "sweep").string() << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse-autoencoder steering toolkit on a toy transformer"};
    app.set_config("--config", "", "TOML/INI file with option values; command-line flags override it");
    app.require_subcommand(1);
    Options o;
    std::function<int(Options&, std::ostream&)> action;

    auto sub = [&](const char* name, const char* help, int (*fn)(Options&, std::ostream&)) {
        CLI::App* c = app.add_subcommand(name, help);
        c->callback([&action, fn] { action = fn; });
        return c;
    };
    auto model_in = [&](CLI::App* c) {
        c->add_option("--model", o.model, "Toy model checkpoint")->required()->check(CLI::ExistingFile);
    };
    auto corpus_in = [&](CLI::App* c, bool required) {
        auto* opt = c->add_option("--corpus", o.corpus, "Directory written by gen-corpus")->check(CLI::ExistingDirectory);
        if (required) {
            opt->required();
        }
    };
    auto sweep_opts = [&](CLI::App* c) {
        c->add_option("--lambdas", o.lambdas, "Steering multipliers")->delimiter(',');
        c->add_option("--temperature", o.sweep.temperature, "Sampling temperature")->capture_default_str();
        c->add_option("--seeds", o.sweep.n_seeds, "Generation seeds per lambda")->capture_default_str();
        c->add_option("--top-k", o.sweep.top_k, "Next-token probabilities reported")->capture_default_str();
        c->add_option("--ngram", o.sweep.ngram, "n of the distinct-n fluency metric")->capture_default_str();
        add_seed(c, o);
    };

    CLI::App* gen = sub("gen-corpus", "Generate the synthetic LM and behavior corpora", cmd_gen_corpus);
    gen->add_option("--out", o.out, "Output directory")->required();
    gen->add_option("--grammar", o.grammar_file, "Grammar JSON; missing keys keep reference values")
        ->check(CLI::ExistingFile);
    gen->add_option("--behavior-items", o.behavior_items, "Contrast triples");
    gen->add_option("--lm-sequences", o.lm_sequences, "Pretraining sequences");
    gen->add_option("--eval-prompts", o.eval_prompts, "Held-out evaluation prompts");
    add_seed(gen, o);

    CLI::App* toy = sub("train-toy", "Train the toy transformer on a corpus", cmd_train_toy);
    corpus_in(toy, true);
    toy->add_option("--out", o.out, "Checkpoint path")->required();
    toy->add_option("--vocab", o.model_config.vocab_size)->capture_default_str();
    toy->add_option("--d-model", o.model_config.d_model)->capture_default_str();
    toy->add_option("--layers", o.model_config.n_layers)->capture_default_str();
    toy->add_option("--heads", o.model_config.n_heads)->capture_default_str();
    toy->add_option("--max-seq", o.model_config.max_seq)->capture_default_str();
    toy->add_option("--steps", o.toy.steps)->capture_default_str();
    toy->add_option("--lr", o.toy.lr)->capture_default_str();
    toy->add_option("--batch-size", o.toy.batch_size)->capture_default_str();
    toy->add_option("--grad-clip", o.toy.grad_clip, "Global gradient-norm clip, 0 disables")->capture_default_str();
    add_seed(toy, o);

    CLI::App* dump = sub("dump-activations", "Record residual states for SAE training", cmd_dump_activations);
    model_in(dump);
    corpus_in(dump, true);
    dump->add_option("--layer", o.layer)->capture_default_str();
    dump->add_option("--max-sequences", o.max_sequences)->capture_default_str();
    dump->add_option("--out", o.out, "Binary activations file")->required();

    CLI::App* tsae = sub("train-sae", "Train a JumpReLU SAE on recorded states", cmd_train_sae);
    tsae->add_option("--activations", o.activations)->required()->check(CLI::ExistingFile);
    tsae->add_option("--out", o.out, "SAE checkpoint path")->required();
    tsae->add_option("--latent-dim", o.sae_config.latent_dim)->capture_default_str();
    tsae->add_option("--gamma", o.sae_config.gamma, "L0 penalty weight")->capture_default_str();
    tsae->add_option("--bandwidth", o.sae_config.bandwidth)->capture_default_str();
    tsae->add_option("--lr", o.sae_config.lr)->capture_default_str();
    tsae->add_option("--theta-lr", o.sae_config.theta_lr, "Step size for log thresholds")->capture_default_str();
    tsae->add_option("--steps", o.sae_config.steps)->capture_default_str();
    tsae->add_option("--batch-size", o.sae_config.batch_size)->capture_default_str();
    tsae->add_option("--optimizer", o.optimizer, "adam or sgd")->capture_default_str();
    tsae->add_flag("--no-center", o.no_center, "Do not subtract the dataset mean");
    add_seed(tsae, o);

    CLI::App* gcheck = sub("grad-check", "Finite-difference check of the SAE gradient", cmd_grad_check);
    gcheck->add_option("--input-dim", o.gc_input_dim)->capture_default_str();
    gcheck->add_option("--latent-dim", o.gc_latent_dim)->capture_default_str();
    gcheck->add_option("--rows", o.gc_rows)->capture_default_str();
    gcheck->add_option("--seeds", o.gc_seeds)->capture_default_str();
    gcheck->add_option("--gamma", o.sae_config.gamma)->capture_default_str();
    gcheck->add_option("--bandwidth", o.sae_config.bandwidth)->capture_default_str();
    gcheck->add_option("--tolerance", o.gc_tolerance)->capture_default_str();
    add_seed(gcheck, o);

    CLI::App* build = sub("build-vector", "Build a steering vector", cmd_build_vector);
    build->add_option("--method", o.method, "caa, sta, axbench, prompt-caa or prompt-sta")->capture_default_str();
    model_in(build);
    corpus_in(build, false);
    build->add_option("--sae", o.sae, "SAE checkpoint")->check(CLI::ExistingFile);
    build->add_option("--prompt", o.prompt, "Prompt token ids for prompt methods (default: the corpus system prompt)");
    build->add_option("--layer", o.layer)->capture_default_str();
    build->add_option("--top-fraction", o.top_fraction)->capture_default_str();
    build->add_option("--mode", o.mode, "full, wo_amplitude or wo_frequency")->capture_default_str();
    build->add_flag("!--no-decoder-bias", o.decoder_bias, "Leave b_dec out of the decoded vector");
    build->add_option("--match", o.match, "Rescale to this vector's norm")->check(CLI::ExistingFile);
    build->add_option("--out", o.out, "Vector file")->required();

    CLI::App* steer = sub("steer", "Generate with a steering vector added", cmd_steer);
    model_in(steer);
    steer->add_option("--vector", o.vector)->required()->check(CLI::ExistingFile);
    steer->add_option("--lambda", o.lambda, "Steering multiplier")->capture_default_str();
    steer->add_option("--prompt", o.prompt, "Prompt token ids; BOS is prepended when missing")->required();
    steer->add_option("--max-new", o.max_new)->capture_default_str();
    steer->add_option("--temperature", o.temperature, "0 decodes greedily")->capture_default_str();
    steer->add_option("--lexicon", o.lexicon, "Lexicon file for the behavior score")->check(CLI::ExistingFile);
    corpus_in(steer, false);
    add_seed(steer, o);

    CLI::App* sw = sub("sweep", "Behavior and fluency across steering strengths", cmd_sweep);
    model_in(sw);
    sw->add_option("--vector", o.vector)->required()->check(CLI::ExistingFile);
    corpus_in(sw, true);
    sw->add_option("--max-new", o.sweep.max_new)->capture_default_str();
    sweep_opts(sw);
    sw->add_option("--out", o.out, "CSV path; a JSON copy is written beside it")->required();

    CLI::App* abl = sub("prompt-ablation", "Behavior score by system-prompt position", cmd_prompt_ablation);
    model_in(abl);
    corpus_in(abl, true);
    abl->add_option("--prompt", o.prompt, "Prompt token ids (default: the corpus system prompt)");
    abl->add_option("--out", o.out, "CSV path")->required();

    CLI::App* len = sub("length-sweep", "Generation length under long/short steering", cmd_length_sweep);
    model_in(len);
    corpus_in(len, true);
    len->add_option("--layer", o.layer)->capture_default_str();
    len->add_option("--max-new", o.length_max_new)->capture_default_str();
    sweep_opts(len);
    len->add_option("--out", o.out, "CSV path; a JSON copy is written beside it")->required();

    CLI::App* pipe = sub("pipeline", "Run every stage with manifests and resumption", cmd_pipeline);
    pipe->add_option("--out", o.out, "Output directory")->default_val("pipeline");
    pipe->add_option("--layer", o.layer)->capture_default_str();
    pipe->add_option("--top-fraction", o.top_fraction)->capture_default_str();
    pipe->add_option("--steer-method", o.steer_method, "Vector used for the sweep")->capture_default_str();
    pipe->add_flag("--no-match", o.no_match, "Do not rescale the sweep vector to the CAA norm");
    pipe->add_flag("!--no-decoder-bias", o.decoder_bias, "Leave b_dec out of SAE-decoded vectors");
    pipe->add_option("--lambdas", o.lambdas, "Boundary sweep multipliers")->delimiter(',');
    pipe->add_option("--toy-steps", o.reference.toy_train.steps)->capture_default_str();
    pipe->add_option("--sae-steps", o.reference.sae.steps)->capture_default_str();
    pipe->add_option("--latent-dim", o.reference.sae.latent_dim)->capture_default_str();
    pipe->add_option("--gamma", o.reference.sae.gamma)->capture_default_str();
    pipe->add_option("--sweep-seeds", o.reference.sweep.n_seeds)->capture_default_str();
    add_seed(pipe, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }
    try {
        return action(o, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return is_validation_kind(e.kind()) ? 1 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sta
