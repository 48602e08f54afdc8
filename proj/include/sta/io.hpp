#pragma once

#include "sta/corpus_gen.hpp"
#include "sta/eval.hpp"
#include "sta/sae.hpp"
#include "sta/steering.hpp"
#include "sta/toymodel.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sta {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// Current on-disk format versions. Bump when a layout changes.
namespace format_version {
inline constexpr int model = 1;
inline constexpr int sae = 1;
inline constexpr int vector = 1;
inline constexpr int corpus = 1;
inline constexpr int activations = 1;
inline constexpr int manifest = 1;
}  // namespace format_version

// Whole-file helpers. Writes go through a temporary file and a rename.
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& doc);

// Throws IntegrityError naming `path` when doc["format"] or doc["version"]
// differ from the expected values.
void check_format(const Json& doc, const std::string& format, int version, const fs::path& path);

Json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const Json& j);
Json tokens_to_json(const TokenSeq& t);
TokenSeq tokens_from_json(const Json& j);

void save_model(const fs::path& path, const Model& model);
Model load_model(const fs::path& path);

// `config` is recorded in the header when given.
void save_sae(const fs::path& path, const SaeParams& sae, const SaeTrainConfig* config = nullptr);
SaeParams load_sae(const fs::path& path);

Json vector_to_json(const SteeringVector& v);
SteeringVector vector_from_json(const Json& j, const fs::path& origin = {});
void save_vector(const fs::path& path, const SteeringVector& v);
SteeringVector load_vector(const fs::path& path);

// Raw little-endian doubles behind a small header.
void save_activations(const fs::path& path, const Tensor& rows);
Tensor load_activations(const fs::path& path);

Json report_to_json(const TrainingReport& report);

// One JSON object per line: {"behavior", "question", "positive", "negative"}.
void save_behavior_corpus(const fs::path& path, const BehaviorCorpus& corpus);
BehaviorCorpus load_behavior_corpus(const fs::path& path);
// One token array per line.
void save_sequences(const fs::path& path, const std::vector<TokenSeq>& sequences);
std::vector<TokenSeq> load_sequences(const fs::path& path);

void save_lexicon(const fs::path& path, const BehaviorLexicon& lexicon);
BehaviorLexicon load_lexicon(const fs::path& path);

Json grammar_to_json(const GrammarSpec& spec);
GrammarSpec grammar_from_json(const Json& j);

void save_prompts(const fs::path& path, const PromptSet& prompts);
PromptSet load_prompts(const fs::path& path);

// File names written by gen-corpus into its output directory.
namespace corpus_files {
inline constexpr const char* lm = "lm.jsonl";
inline constexpr const char* behavior = "behavior.jsonl";
inline constexpr const char* lexicon = "lexicon.json";
inline constexpr const char* prompts = "prompts.json";
}  // namespace corpus_files
void save_generated_corpus(const fs::path& dir, const GeneratedCorpus& corpus);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

// Provenance record written next to every artifact.
struct Manifest {
    std::string artifact_type;
    int version = format_version::manifest;
    Json params = Json::object();           // creation parameters
    std::map<std::string, std::string> inputs;   // logical name -> content hash
    std::map<std::string, std::string> outputs;  // file name relative to the manifest -> content hash
};
Json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const Json& j, const fs::path& origin);
void save_manifest(const fs::path& path, const Manifest& m);
Manifest load_manifest(const fs::path& path);
// Re-hashes every output next to the manifest; IntegrityError names the first mismatch.
void verify_outputs(const Manifest& m, const fs::path& dir);

}  // namespace sta
