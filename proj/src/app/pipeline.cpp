#include "sta/errors.hpp"
#include "sta/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace sta {

Json toy_train_to_json(const ToyTrainConfig& c) {
    return {{"steps", c.steps},           {"lr", c.lr},
            {"batch_size", c.batch_size}, {"eval_every", c.eval_every},
            {"eval_subset", c.eval_subset}, {"grad_clip", c.grad_clip}};
}

Json sae_train_to_json(const SaeTrainConfig& c) {
    return {{"latent_dim", c.latent_dim},
            {"gamma", c.gamma},
            {"bandwidth", c.bandwidth},
            {"lr", c.lr},
            {"theta_lr", c.theta_lr},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"theta_init", c.theta_init},
            {"optimizer", c.optimizer == SaeOptimizer::adam ? "adam" : "sgd"},
            {"center", c.center},
            {"eval_every", c.eval_every},
            {"eval_subset", c.eval_subset}};
}

Json sweep_config_to_json(const SweepConfig& c) {
    return {{"temperature", c.temperature}, {"n_seeds", c.n_seeds}, {"seed", c.seed},
            {"max_new", c.max_new},         {"top_k", c.top_k},     {"ngram", c.ngram}};
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
        throw ConfigError("output directory " + dir.string() + " is locked by another run (remove " +
                          path_.string() + " if no run is active)");
    }
    std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

namespace {

struct Stage {
    std::string name;
    Json params;
    std::vector<std::string> upstream;
    // Writes the stage's files into its directory and returns their names.
    std::function<std::vector<std::string>(const fs::path&)> run;
};

std::string outputs_digest(const Manifest& m) {
    return sha256_hex(Json(m.outputs).dump());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Json stats_to_json(const AtomStats& s) {
    return {{"layer", s.layer},
            {"n_examples", s.n_examples},
            {"delta_a", s.delta_a.values()},
            {"f_pos", s.f_pos.values()},
            {"f_neg", s.f_neg.values()},
            {"delta_f", s.delta_f.values()}};
}

Json summary_json(const Analyses& a) {
    Json scores = Json::object();
    Json fluency = Json::object();
    Json top = Json::object();
    for (const auto& row : a.boundary.rows) {
        scores[fmt(row.lambda)] = row.behavior_score ? Json(*row.behavior_score) : Json();
        fluency[fmt(row.lambda)] = row.fluency;
        top[fmt(row.lambda)] = total_probability(row.top_tokens);
    }
    Json lengths = Json::object();
    for (const auto& row : a.length.rows) {
        lengths[fmt(row.lambda)] = row.mean_length;
    }
    Json ablation = Json::object();
    for (const auto& p : a.ablation) {
        ablation[std::string(to_string(p.position))] = p.behavior_score;
    }
    return {{"vanilla_behavior_score", a.vanilla_score},
            {"prompt_vector_cosine", a.prompt_cosine},
            {"behavior_score", scores},
            {"fluency", fluency},
            {"top_k_mass", top},
            {"mean_length", lengths},
            {"prompt_position", ablation}};
}

void write_report(const fs::path& dir, const std::string& stem, const SweepReport& report) {
    std::ostringstream csv;
    write_sweep_csv(csv, report);
    write_text(dir / (stem + ".csv"), csv.str());
    write_text(dir / (stem + ".json"), sweep_json(report));
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& out_dir) {
    const ReferenceConfig& rc = config.reference;
    rc.validate();
    DirectoryLock lock(out_dir);
    const StageSeeds seeds = StageSeeds::from_root(config.seed);
    const fs::path corpus_dir = out_dir / "corpus";
    const fs::path model_dir = out_dir / "model";
    const fs::path acts_dir = out_dir / "activations";
    const fs::path sae_dir = out_dir / "sae";
    const fs::path vec_dir = out_dir / "vectors";

    std::vector<Stage> stages;
    stages.push_back({"corpus", {{"grammar", grammar_to_json(rc.grammar)}, {"seed", seeds.corpus}}, {},
                      [&](const fs::path& dir) {
                          save_generated_corpus(dir, generate_corpus(rc.grammar, seeds.corpus));
                          return std::vector<std::string>{corpus_files::lm, corpus_files::behavior,
                                                          corpus_files::lexicon, corpus_files::prompts};
                      }});
    ToyModelConfig mc = rc.model;
    mc.seed = seeds.model;
    stages.push_back({"model",
                      {{"model", {{"vocab_size", mc.vocab_size}, {"d_model", mc.d_model}, {"n_layers", mc.n_layers},
                                  {"n_heads", mc.n_heads}, {"max_seq", mc.max_seq}, {"seed", mc.seed}}},
                       {"train", toy_train_to_json(rc.toy_train)}},
                      {"corpus"},
                      [&](const fs::path& dir) {
                          Model m = init_model(mc);
                          const TrainingReport r = train_toy(m, load_sequences(corpus_dir / corpus_files::lm), rc.toy_train);
                          save_model(dir / "model.json", m);
                          write_json(dir / "train_report.json", report_to_json(r));
                          return std::vector<std::string>{"model.json", "train_report.json"};
                      }});
    stages.push_back({"activations",
                      {{"layer", rc.layer}, {"sequences", rc.activation_sequences}},
                      {"corpus", "model"},
                      [&](const fs::path& dir) {
                          const Model m = load_model(model_dir / "model.json");
                          save_activations(dir / "activations.bin",
                                           dump_activations(m, load_sequences(corpus_dir / corpus_files::lm), rc.layer,
                                                            rc.activation_sequences));
                          return std::vector<std::string>{"activations.bin"};
                      }});
    SaeTrainConfig sc = rc.sae;
    sc.seed = seeds.sae;
    stages.push_back({"sae", {{"train", sae_train_to_json(sc)}}, {"activations"}, [&](const fs::path& dir) {
                          auto [sae, report] = train_sae(load_activations(acts_dir / "activations.bin"), sc);
                          save_sae(dir / "sae.json", sae, &sc);
                          write_json(dir / "train_report.json", report_to_json(report));
                          return std::vector<std::string>{"sae.json", "train_report.json"};
                      }});
    stages.push_back({"vectors",
                      {{"layer", rc.layer},
                       {"top_fraction", rc.top_fraction},
                       {"include_decoder_bias", rc.include_decoder_bias},
                       {"steer_method", std::string(to_string(rc.steer_method))},
                       {"match_to_caa", rc.match_to_caa}},
                      {"corpus", "model", "sae"},
                      [&](const fs::path& dir) {
                          const Model m = load_model(model_dir / "model.json");
                          const SaeParams sae = load_sae(sae_dir / "sae.json");
                          const VectorSet v = build_vectors(m, sae, load_behavior_corpus(corpus_dir / corpus_files::behavior),
                                                            load_prompts(corpus_dir / corpus_files::prompts), rc);
                          save_vector(dir / "caa.json", v.caa);
                          save_vector(dir / "sta.json", v.sta);
                          save_vector(dir / "axbench.json", v.axbench);
                          save_vector(dir / "prompt_caa.json", v.prompt_caa);
                          save_vector(dir / "prompt_sta.json", v.prompt_sta);
                          save_vector(dir / "steer.json", v.steer);
                          write_json(dir / "atom_stats.json", stats_to_json(v.stats));
                          return std::vector<std::string>{"caa.json",        "sta.json",   "axbench.json",
                                                          "prompt_caa.json", "prompt_sta.json", "steer.json",
                                                          "atom_stats.json"};
                      }});
    stages.push_back({"sweep",
                      {{"sweep", sweep_config_to_json(rc.sweep)},
                       {"seed", seeds.sweep},
                       {"lambdas", rc.lambdas},
                       {"length_lambdas", rc.length_lambdas},
                       {"length_max_new", rc.length_max_new},
                       {"layer", rc.layer}},
                      {"corpus", "model", "vectors"},
                      [&](const fs::path& dir) {
                          const Model m = load_model(model_dir / "model.json");
                          const Analyses a = run_analyses(
                              m, load_vector(vec_dir / "steer.json"), load_vector(vec_dir / "caa.json"),
                              load_vector(vec_dir / "prompt_caa.json"), load_prompts(corpus_dir / corpus_files::prompts),
                              load_lexicon(corpus_dir / corpus_files::lexicon), rc, seeds.sweep);
                          write_report(dir, "boundary", a.boundary);
                          write_report(dir, "length", a.length);
                          std::ostringstream csv;
                          write_ablation_csv(csv, a.ablation, a.vanilla_score);
                          write_text(dir / "prompt_position.csv", csv.str());
                          write_json(dir / "summary.json", summary_json(a));
                          return std::vector<std::string>{"boundary.csv", "boundary.json", "length.csv",
                                                          "length.json",  "prompt_position.csv", "summary.json"};
                      }});

    PipelineResult result;
    result.dir = out_dir;
    std::map<std::string, Manifest> done;
    for (const Stage& stage : stages) {
        const fs::path dir = out_dir / stage.name;
        const fs::path manifest_path = dir / "manifest.json";
        Manifest want;
        want.artifact_type = stage.name;
        want.params = stage.params;
        for (const auto& up : stage.upstream) {
            want.inputs[up] = outputs_digest(done.at(up));
        }
        try {
            if (fs::exists(manifest_path)) {
                const Manifest have = load_manifest(manifest_path);
                if (have.params == want.params && have.inputs == want.inputs) {
                    verify_outputs(have, dir);
                    done[stage.name] = have;
                    result.stages.push_back({stage.name, true});
                    continue;
                }
            }
            fs::remove(manifest_path);
            for (const auto& name : stage.run(dir)) {
                want.outputs[name] = sha256_file(dir / name);
            }
            save_manifest(manifest_path, want);
        } catch (const Error& e) {
            throw Error(e.kind(), "stage '" + stage.name + "' failed: " + e.what());
        } catch (const std::exception& e) {
            throw IoError("stage '" + stage.name + "' failed: " + e.what());
        }
        done[stage.name] = want;
        result.stages.push_back({stage.name, false});
    }
    return result;
}

}  // namespace sta
