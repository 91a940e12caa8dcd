#pragma once

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "didlab/harness.hpp"

namespace didlab {

// Parses an experiment config. The schema mirrors ExperimentConfig field for
// field; unknown keys are errors. Scenario entries are either a bare token
// ("s2") or an object {"scenario": "s4", "process": "b"}.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    static const std::set<std::string> known = {
        "scenarios",  "methods",     "reps",        "n_units",
        "n_times",    "first_post_time", "master_seed", "parallelism",
        "matching_distance", "out_csv", "out_json"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");

    ExperimentConfig c = ExperimentConfig::protocol_default();
    if (j.contains("scenarios")) {
        if (!j["scenarios"].is_array())
            throw std::invalid_argument("config 'scenarios' must be an array");
        c.scenarios.clear();
        for (const auto& entry : j["scenarios"]) {
            ScenarioId id;
            OutcomeProcess p = OutcomeProcess::ConstantEffect;
            if (entry.is_string()) {
                id = scenario_from_token(entry.get<std::string>());
            } else if (entry.is_object()) {
                for (const auto& [key, value] : entry.items())
                    if (key != "scenario" && key != "process")
                        throw std::invalid_argument("unknown scenario key '" + key + "'");
                if (!entry.contains("scenario"))
                    throw std::invalid_argument("scenario entry needs a 'scenario' field");
                id = scenario_from_token(entry["scenario"].get<std::string>());
                if (entry.contains("process"))
                    p = process_from_token(entry["process"].get<std::string>());
            } else {
                throw std::invalid_argument("scenario entries must be strings or objects");
            }
            c.scenarios.emplace_back(id, p);
        }
    }
    if (j.contains("methods")) {
        if (!j["methods"].is_array())
            throw std::invalid_argument("config 'methods' must be an array");
        c.methods.clear();
        for (const auto& entry : j["methods"])
            c.methods.push_back(method_from_token(entry.get<std::string>()));
    }
    auto get_int = [&](const char* key, int current, int min_value) {
        if (!j.contains(key)) return current;
        if (!j[key].is_number_integer())
            throw std::invalid_argument(std::string("config '") + key + "' must be an integer");
        const long long v = j[key].get<long long>();
        if (v < min_value)
            throw std::invalid_argument(std::string("config '") + key + "' out of range");
        return static_cast<int>(v);
    };
    c.reps = get_int("reps", c.reps, 1);
    c.n_units = get_int("n_units", c.n_units, 2);
    c.n_times = get_int("n_times", c.n_times, 2);
    c.first_post_time = get_int("first_post_time", c.first_post_time, 2);
    c.parallelism = get_int("parallelism", c.parallelism, 0);
    if (j.contains("master_seed")) {
        if (!j["master_seed"].is_number_integer())
            throw std::invalid_argument("config 'master_seed' must be an integer");
        c.master_seed = j["master_seed"].get<std::uint64_t>();
    }
    if (j.contains("matching_distance"))
        c.matching_distance = distance_from_token(j["matching_distance"].get<std::string>());
    if (j.contains("out_csv")) c.out_csv = j["out_csv"].get<std::string>();
    if (j.contains("out_json")) c.out_json = j["out_json"].get<std::string>();
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

} // namespace didlab
