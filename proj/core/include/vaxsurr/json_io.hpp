#pragma once

// JSON views of configs and results. Parsing errors are ConfigError with the
// offending field named.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "vaxsurr/acem.hpp"
#include "vaxsurr/mel.hpp"
#include "vaxsurr/sim.hpp"

namespace vaxsurr {

nlohmann::json to_json(const DesignSpec& design);
// Starts from the preset of (kind, missing); explicit fractions override it.
DesignSpec design_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScenarioConfig& config);
// Missing fields keep their defaults; unknown fields are rejected.
ScenarioConfig scenario_from_json(const nlohmann::json& j, ScenarioConfig base = {});

// Hash of the canonical JSON of a config, seed excluded.
std::uint64_t config_hash(const ScenarioConfig& config);
std::string config_hash_hex(const ScenarioConfig& config);

nlohmann::json to_json(const CoxParams& params);
nlohmann::json to_json(const MarkerDistribution& dist);
nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const BootstrapResult& boot);
nlohmann::json to_json(const SurrogateTest& test);
nlohmann::json to_json(const AcemResult& result);
nlohmann::json to_json(const CalibratedRates& rates);

// Parses text, wrapping syntax errors in ConfigError.
nlohmann::json parse_json(const std::string& text, const std::string& what);

// Typed field access that names the field on failure.
double get_number(const nlohmann::json& j, const std::string& field);
int get_int(const nlohmann::json& j, const std::string& field);
std::uint64_t get_uint(const nlohmann::json& j, const std::string& field);
std::string get_string(const nlohmann::json& j, const std::string& field);

}  // namespace vaxsurr
