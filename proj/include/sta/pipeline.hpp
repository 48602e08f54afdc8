#pragma once

#include "sta/io.hpp"
#include "sta/reference.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sta {

struct PipelineConfig {
    ReferenceConfig reference;
    std::uint64_t seed = 0;
};

struct StageOutcome {
    std::string name;
    bool skipped = false;
};

struct PipelineResult {
    fs::path dir;
    std::vector<StageOutcome> stages;
};

// Stage directories under the pipeline output directory, in run order.
inline const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> names{"corpus", "model", "activations", "sae", "vectors", "sweep"};
    return names;
}

// Runs every stage into `out_dir`, skipping a stage whose manifest already
// records the same parameters and input hashes and whose outputs still hash
// correctly. A modified output raises IntegrityError naming the file.
PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& out_dir);

// Exclusive ownership of an output directory through a lock file.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

Json toy_train_to_json(const ToyTrainConfig& c);
Json sae_train_to_json(const SaeTrainConfig& c);
Json sweep_config_to_json(const SweepConfig& c);

}  // namespace sta
