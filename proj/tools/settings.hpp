#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vision/bench/synth.hpp"
#include "vision/pipeline.hpp"
#include "vision/service/service.hpp"

namespace vision::cli {

inline constexpr int kConfigVersion = 1;

/// Every tunable of the pipeline, filled from defaults, then a config file,
/// then command-line flags.
struct Settings {
    std::uint64_t seed = 0;
    bench::SynthConfig synth;
    std::size_t train_size = 2000;
    std::size_t val_size = 200;
    std::vector<int> ratios = bench::standard_ratios();
    int max_edit_tokens = 25;
    pipeline::TrainOptions train;
    pipeline::EvalOptions eval;
    service::ServiceConfig service;

    /// Throws ConfigError naming every violated field.
    void validate() const;
};

/// Applies a config document. Unknown sections or keys and wrongly typed
/// values are all reported together in one ConfigError.
void apply_config(Settings& s, const nlohmann::json& doc);
void apply_config_file(Settings& s, const std::string& path);

/// The effective settings as a config document (round-trips through
/// apply_config).
nlohmann::json settings_to_json(const Settings& s);

}  // namespace vision::cli
