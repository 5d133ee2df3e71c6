#pragma once
// Declarative experiment runner. A JSON config file describes a full
// pipeline (synthesis, ROI selection, attack, metric set, output paths,
// global seed); run_experiment executes every stage and leaves a manifest
// recording the config hash, the seed, and a checksum for every artifact,
// so a rerun can be verified bitwise.

#include "voltscope/report.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace voltscope {

// A pipeline stage failure. stage() names the phase ("config", "io",
// "synth", "attack", "align", "metrics") so callers can map failures to
// documented exit codes.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string &message);
    const std::string &stage() const { return stage_; }

  private:
    std::string stage_;
};

struct ExperimentConfig {
    // One of "attack", "sweep", "tvla", "align".
    std::string kind;
    // Mandatory in the config file; no entropy defaults anywhere.
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    // The full parsed config. Stage parameters are read from here, and its
    // canonical serialization is what the manifest's config_hash covers.
    Json raw;

    static ExperimentConfig from_json(const Json &config);
    static ExperimentConfig load(const std::string &path);
};

// Built-in configs runnable by name: "figure2" (cluster-count sweep over
// 1..4 island designs), "table1-sim" (batch TVLA on a constant-voltage and
// a 4-supply randomized design), "elastic-negative" (alignment attack on a
// 2-island set, comparing average PGE before and after warping). Throws
// std::invalid_argument for unknown names.
Json preset_config(const std::string &name);

// Runs the configured pipeline and writes all artifacts plus manifest.json
// under config.out_dir. Throws StageError when any stage fails.
void run_experiment(const ExperimentConfig &config);

} // namespace voltscope
