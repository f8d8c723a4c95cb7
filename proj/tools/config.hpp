#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tspread/sim.hpp"

namespace tspread::app {

/// Malformed or inconsistent configuration; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Settings of the `verify` command.
struct VerifySettings {
    bool on_off = false;          // replace the scenario channels by the on/off LCQ model
    double p_on = 0.6;
    int truncation = 30;
    std::size_t states = 50;      // random states for the deterministic-action oracle
    std::size_t samples = 100;    // random dispatch matrices per state
    std::uint64_t seed = 1;
};

struct AppConfig {
    ScenarioConfig scenario;
    VerifySettings verify;
    std::vector<double> weights;  // default weight list for sweep and curves
};

AppConfig parse_config(const nlohmann::json& doc);
AppConfig load_config(const std::string& path);

nlohmann::json to_json(const SimReport& report);
nlohmann::json to_json(const ScenarioConfig& config);

}  // namespace tspread::app
