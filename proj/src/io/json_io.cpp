#include "sta/errors.hpp"
#include "sta/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sta {

namespace {

template <typename F>
auto parse_guard(const fs::path& path, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw InputError(path.string() + ": malformed content (" + e.what() + ")");
    }
}

Json config_to_json(const ToyModelConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},       {"max_seq", c.max_seq}, {"seed", c.seed}};
}

ToyModelConfig config_from_json(const Json& j) {
    ToyModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.max_seq = j.at("max_seq").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

Json optional_number(const std::optional<double>& v) {
    return v ? Json(*v) : Json();
}

std::optional<double> number_or_null(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

Json law_to_json(const GrammarSpec::LengthLaw& law) {
    return {{"min", law.min}, {"max", law.max}, {"stop", law.stop}};
}

GrammarSpec::LengthLaw law_from_json(const Json& j) {
    return {j.at("min").get<std::size_t>(), j.at("max").get<std::size_t>(), j.at("stop").get<double>()};
}

Json item_to_json(const BehaviorItem& it) {
    return {{"question", tokens_to_json(it.question)},
            {"positive", tokens_to_json(it.positive)},
            {"negative", tokens_to_json(it.negative)}};
}

BehaviorItem item_from_json(const Json& j) {
    return {tokens_from_json(j.at("question")), tokens_from_json(j.at("positive")), tokens_from_json(j.at("negative"))};
}

std::vector<Json> read_lines(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<Json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(n) + ": malformed JSON line (" + e.what() + ")");
        }
    }
    return out;
}

constexpr char kActivationMagic[8] = {'S', 'T', 'A', 'A', 'C', 'T', 'S', '\0'};

}  // namespace

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out << text;
        if (!out.flush()) {
            throw IoError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

Json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    return parse_guard(path, [&] { return Json::parse(text); });
}

void write_json(const fs::path& path, const Json& doc) {
    write_text(path, doc.dump(1) + "\n");
}

void check_format(const Json& doc, const std::string& format, int version, const fs::path& path) {
    if (!doc.is_object() || !doc.contains("format") || doc.at("format") != format) {
        throw IntegrityError(path.string() + ": not a " + format + " file");
    }
    const int found = doc.value("version", -1);
    if (found != version) {
        throw IntegrityError(path.string() + ": " + format + " version " + std::to_string(found) +
                             " is not supported (expected " + std::to_string(version) +
                             "); regenerate it with the command that produced it");
    }
}

Json tensor_to_json(const Tensor& t) {
    if (!t.all_finite()) {
        throw NumericError("refusing to serialize a tensor with non-finite entries");
    }
    return {{"shape", t.shape()}, {"data", t.values()}};
}

Tensor tensor_from_json(const Json& j) {
    auto shape = j.at("shape").get<Tensor::Shape>();
    auto data = j.at("data").get<std::vector<double>>();
    return Tensor(std::move(shape), std::move(data));
}

Json tokens_to_json(const TokenSeq& t) {
    return Json(t);
}

TokenSeq tokens_from_json(const Json& j) {
    return j.get<TokenSeq>();
}

void save_model(const fs::path& path, const Model& model) {
    Json params = Json::object();
    model.for_each_param([&](const std::string& name, const Tensor& t) { params[name] = tensor_to_json(t); });
    write_json(path, {{"format", "sta-toy-model"},
                      {"version", format_version::model},
                      {"config", config_to_json(model.config)},
                      {"params", params}});
}

Model load_model(const fs::path& path) {
    const Json doc = read_json(path);
    check_format(doc, "sta-toy-model", format_version::model, path);
    return parse_guard(path, [&] {
        Model m = init_model(config_from_json(doc.at("config")));
        const Json& params = doc.at("params");
        m.for_each_param([&](const std::string& name, Tensor& t) {
            if (!params.contains(name)) {
                throw IntegrityError(path.string() + ": missing parameter " + name);
            }
            Tensor loaded = tensor_from_json(params.at(name));
            if (loaded.shape() != t.shape()) {
                throw IntegrityError(path.string() + ": parameter " + name + " has shape " +
                                     shape_string(loaded.shape()) + ", expected " + shape_string(t.shape()));
            }
            t = std::move(loaded);
        });
        return m;
    });
}

void save_sae(const fs::path& path, const SaeParams& sae, const SaeTrainConfig* config) {
    Json doc{{"format", "sta-sae"},
             {"version", format_version::sae},
             {"input_dim", sae.input_dim()},
             {"latent_dim", sae.latent_dim()},
             {"dataset_mean", tensor_to_json(sae.input_mean)},
             {"w_enc", tensor_to_json(sae.w_enc)},
             {"b_enc", tensor_to_json(sae.b_enc)},
             {"w_dec", tensor_to_json(sae.w_dec)},
             {"b_dec", tensor_to_json(sae.b_dec)},
             {"theta", tensor_to_json(sae.theta)}};
    if (config != nullptr) {
        doc["gamma"] = config->gamma;
        doc["bandwidth"] = config->bandwidth;
    }
    write_json(path, doc);
}

SaeParams load_sae(const fs::path& path) {
    const Json doc = read_json(path);
    check_format(doc, "sta-sae", format_version::sae, path);
    SaeParams p = parse_guard(path, [&] {
        SaeParams s;
        s.w_enc = tensor_from_json(doc.at("w_enc"));
        s.b_enc = tensor_from_json(doc.at("b_enc"));
        s.w_dec = tensor_from_json(doc.at("w_dec"));
        s.b_dec = tensor_from_json(doc.at("b_dec"));
        s.theta = tensor_from_json(doc.at("theta"));
        s.input_mean = tensor_from_json(doc.at("dataset_mean"));
        return s;
    });
    try {
        p.validate();
    } catch (const Error& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
    return p;
}

Json vector_to_json(const SteeringVector& v) {
    return {{"format", "sta-steering-vector"},
            {"version", format_version::vector},
            {"method", std::string(to_string(v.method))},
            {"layer", v.layer},
            {"dim", v.dim()},
            {"alpha", optional_number(v.alpha)},
            {"beta", optional_number(v.beta)},
            {"top_fraction", optional_number(v.top_fraction)},
            {"include_decoder_bias", v.include_decoder_bias},
            {"active_atoms", v.active_atoms},
            {"degenerate", v.degenerate},
            {"aggregation", v.aggregation},
            {"norm", v.norm},
            {"values", v.values.values()},
            {"source_hash", v.source_hash}};
}

SteeringVector vector_from_json(const Json& j, const fs::path& origin) {
    check_format(j, "sta-steering-vector", format_version::vector, origin);
    SteeringVector v = parse_guard(origin, [&] {
        SteeringVector out;
        out.method = parse_vector_method(j.at("method").get<std::string>());
        out.layer = j.at("layer").get<std::size_t>();
        out.alpha = number_or_null(j, "alpha");
        out.beta = number_or_null(j, "beta");
        out.top_fraction = number_or_null(j, "top_fraction");
        out.include_decoder_bias = j.at("include_decoder_bias").get<bool>();
        out.active_atoms = j.value("active_atoms", std::size_t{0});
        out.degenerate = j.value("degenerate", false);
        out.aggregation = j.value("aggregation", std::string("mean-over-answer-tokens"));
        out.norm = j.at("norm").get<double>();
        out.values = Tensor::vector(j.at("values").get<std::vector<double>>());
        out.source_hash = j.value("source_hash", std::string());
        return out;
    });
    if (j.at("dim").get<std::size_t>() != v.dim()) {
        throw IntegrityError(origin.string() + ": dim field " + std::to_string(j.at("dim").get<std::size_t>()) +
                             " disagrees with " + std::to_string(v.dim()) + " values");
    }
    if (std::abs(l2_norm(v.values.data()) - v.norm) > 1e-9) {
        throw IntegrityError(origin.string() + ": stored norm does not match the values");
    }
    return v;
}

void save_vector(const fs::path& path, const SteeringVector& v) {
    write_json(path, vector_to_json(v));
}

SteeringVector load_vector(const fs::path& path) {
    return vector_from_json(read_json(path), path);
}

void save_activations(const fs::path& path, const Tensor& rows) {
    static_assert(std::endian::native == std::endian::little, "activation files assume a little-endian host");
    if (rows.rank() != 2) {
        throw DimensionError("activation dumps must be [N x D]");
    }
    std::string bytes(kActivationMagic, sizeof kActivationMagic);
    const std::uint64_t header[3] = {static_cast<std::uint64_t>(format_version::activations), rows.rows(), rows.cols()};
    bytes.append(reinterpret_cast<const char*>(header), sizeof header);
    bytes.append(reinterpret_cast<const char*>(rows.values().data()), rows.size() * sizeof(double));
    write_text(path, bytes);
}

Tensor load_activations(const fs::path& path) {
    const std::string bytes = read_text(path);
    constexpr std::size_t head = sizeof kActivationMagic + 3 * sizeof(std::uint64_t);
    if (bytes.size() < head || std::memcmp(bytes.data(), kActivationMagic, sizeof kActivationMagic) != 0) {
        throw IntegrityError(path.string() + ": not an activation dump");
    }
    std::uint64_t header[3];
    std::memcpy(header, bytes.data() + sizeof kActivationMagic, sizeof header);
    if (header[0] != static_cast<std::uint64_t>(format_version::activations)) {
        throw IntegrityError(path.string() + ": activation dump version " + std::to_string(header[0]) +
                             " is not supported (expected " + std::to_string(format_version::activations) +
                             "); rerun dump-activations");
    }
    const std::size_t n = header[1];
    const std::size_t d = header[2];
    if (bytes.size() != head + n * d * sizeof(double)) {
        throw IntegrityError(path.string() + ": truncated activation dump");
    }
    std::vector<double> data(n * d);
    std::memcpy(data.data(), bytes.data() + head, data.size() * sizeof(double));
    return Tensor({n, d}, std::move(data));
}

Json report_to_json(const TrainingReport& r) {
    return {{"eval_steps", r.eval_steps}, {"loss", r.loss},       {"batch_loss", r.batch_loss},
            {"recon_loss", r.recon_loss}, {"mean_l0", r.mean_l0}, {"notes", r.notes}};
}

void save_behavior_corpus(const fs::path& path, const BehaviorCorpus& corpus) {
    std::string text;
    for (const auto& it : corpus.items) {
        Json line = item_to_json(it);
        line["behavior"] = corpus.behavior_name;
        text += line.dump() + "\n";
    }
    write_text(path, text);
}

BehaviorCorpus load_behavior_corpus(const fs::path& path) {
    BehaviorCorpus corpus;
    for (const Json& line : read_lines(path)) {
        parse_guard(path, [&] {
            corpus.items.push_back(item_from_json(line));
            corpus.behavior_name = line.value("behavior", corpus.behavior_name);
            return 0;
        });
    }
    if (corpus.items.empty()) {
        throw InputError(path.string() + ": behavior corpus is empty");
    }
    return corpus;
}

void save_sequences(const fs::path& path, const std::vector<TokenSeq>& sequences) {
    std::string text;
    for (const auto& s : sequences) {
        text += tokens_to_json(s).dump() + "\n";
    }
    write_text(path, text);
}

std::vector<TokenSeq> load_sequences(const fs::path& path) {
    std::vector<TokenSeq> out;
    for (const Json& line : read_lines(path)) {
        out.push_back(parse_guard(path, [&] { return tokens_from_json(line); }));
    }
    return out;
}

void save_lexicon(const fs::path& path, const BehaviorLexicon& lexicon) {
    write_json(path, {{"format", "sta-lexicon"},
                      {"version", format_version::corpus},
                      {"positive", lexicon.positive_tokens},
                      {"negative", lexicon.negative_tokens}});
}

BehaviorLexicon load_lexicon(const fs::path& path) {
    const Json doc = read_json(path);
    check_format(doc, "sta-lexicon", format_version::corpus, path);
    return parse_guard(path, [&] {
        return BehaviorLexicon{doc.at("positive").get<std::vector<TokenId>>(),
                               doc.at("negative").get<std::vector<TokenId>>()};
    });
}

Json grammar_to_json(const GrammarSpec& g) {
    return {{"vocab_size", g.vocab_size},
            {"question_tokens", g.question_tokens},
            {"positive_lexicon", g.positive_lexicon},
            {"negative_lexicon", g.negative_lexicon},
            {"system_prompt", g.system_prompt},
            {"short_thought", g.short_thought},
            {"long_thought", g.long_thought},
            {"think_marker", g.think_marker},
            {"question_min", g.question_min},
            {"question_max", g.question_max},
            {"successor_prob", g.successor_prob},
            {"answer_length", law_to_json(g.answer_length)},
            {"short_length", law_to_json(g.short_length)},
            {"long_length", law_to_json(g.long_length)},
            {"prompted_fraction", g.prompted_fraction},
            {"reasoning_fraction", g.reasoning_fraction},
            {"lm_sequences", g.lm_sequences},
            {"behavior_items", g.behavior_items},
            {"behavior_answer_len", g.behavior_answer_len},
            {"eval_prompts", g.eval_prompts},
            {"length_long", g.length_long},
            {"length_short", g.length_short}};
}

GrammarSpec grammar_from_json(const Json& j) {
    // Missing keys keep their reference values, so a spec file can override a few fields.
    GrammarSpec g = GrammarSpec::reference();
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            field = j.at(key).get<std::decay_t<decltype(field)>>();
        }
    };
    auto take_law = [&](const char* key, GrammarSpec::LengthLaw& law) {
        if (j.contains(key)) {
            law = law_from_json(j.at(key));
        }
    };
    try {
        take("vocab_size", g.vocab_size);
        take("question_tokens", g.question_tokens);
        take("positive_lexicon", g.positive_lexicon);
        take("negative_lexicon", g.negative_lexicon);
        take("system_prompt", g.system_prompt);
        take("short_thought", g.short_thought);
        take("long_thought", g.long_thought);
        take("think_marker", g.think_marker);
        take("question_min", g.question_min);
        take("question_max", g.question_max);
        take("successor_prob", g.successor_prob);
        take_law("answer_length", g.answer_length);
        take_law("short_length", g.short_length);
        take_law("long_length", g.long_length);
        take("prompted_fraction", g.prompted_fraction);
        take("reasoning_fraction", g.reasoning_fraction);
        take("lm_sequences", g.lm_sequences);
        take("behavior_items", g.behavior_items);
        take("behavior_answer_len", g.behavior_answer_len);
        take("eval_prompts", g.eval_prompts);
        take("length_long", g.length_long);
        take("length_short", g.length_short);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("grammar spec: ") + e.what());
    }
    return g;
}

void save_prompts(const fs::path& path, const PromptSet& p) {
    write_json(path, {{"format", "sta-prompts"},
                      {"version", format_version::corpus},
                      {"eval_prompts", p.eval_prompts},
                      {"length_prompts", p.length_prompts},
                      {"length_pair", item_to_json(p.length_pair)},
                      {"system_prompt", p.system_prompt},
                      {"probe_prompt", p.probe_prompt}});
}

PromptSet load_prompts(const fs::path& path) {
    const Json doc = read_json(path);
    check_format(doc, "sta-prompts", format_version::corpus, path);
    return parse_guard(path, [&] {
        return PromptSet{doc.at("eval_prompts").get<std::vector<TokenSeq>>(),
                         doc.at("length_prompts").get<std::vector<TokenSeq>>(), item_from_json(doc.at("length_pair")),
                         tokens_from_json(doc.at("system_prompt")), tokens_from_json(doc.at("probe_prompt"))};
    });
}

void save_generated_corpus(const fs::path& dir, const GeneratedCorpus& corpus) {
    save_sequences(dir / corpus_files::lm, corpus.lm_sequences);
    save_behavior_corpus(dir / corpus_files::behavior, corpus.behavior);
    save_lexicon(dir / corpus_files::lexicon, corpus.lexicon);
    save_prompts(dir / corpus_files::prompts, prompts_of(corpus));
}

}  // namespace sta
