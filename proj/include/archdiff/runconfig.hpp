#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "archdiff/bo.hpp"
#include "archdiff/predictor.hpp"
#include "archdiff/sampler.hpp"
#include "archdiff/scorenet.hpp"
#include "archdiff/sde.hpp"

namespace archdiff {

// Full run configuration: a flat, typed key tree. Section keys mirror each
// module's config fields; unknown keys are rejected. Flags override file
// values; ARCHDIFF_SEED is the seed fallback.
struct RunConfig {
    std::string space = "tiny5";
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    int threads = 1;

    VeSdeConfig sde;
    ScoreNetConfig scorenet = ScoreNetConfig::desk();
    PredictorConfig predictor = PredictorConfig::desk();
    SamplerConfig sampler;
    GuidanceConfig guidance;
    BoConfig bo = BoConfig::desk();

    static RunConfig desk();
    static RunConfig paper();

    // Strict parse: every key must be known and well typed.
    void apply_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path, const std::string& preset = "desk");

    nlohmann::json to_json() const;
};

// Writes {"config": ..., "meta": {"command", "timestamp_utc"}} next to the
// outputs; the timestamp is the only run-dependent field.
void write_resolved_config(const RunConfig& cfg, const std::string& command,
                           const std::string& path);

}  // namespace archdiff
