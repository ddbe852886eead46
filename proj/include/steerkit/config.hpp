#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerkit/checkpoint.hpp"
#include "steerkit/direction.hpp"
#include "steerkit/engine.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/model.hpp"

namespace steerkit {

// Everything a run needs beyond command-specific inputs. Defaults follow
// the reference setting: sampling at temperature 1.0 / top-p 1.0 with 256
// new tokens, steering strength 3 at layer 8.
struct RunConfig {
    std::string model = "builtin:test";
    int layer = 8;
    double lambda = 3.0;
    std::string pooling = "last_token";
    double temperature = 1.0;
    double top_p = 1.0;
    int max_new_tokens = 256;
    uint64_t seed = 0;
    bool stop_on_eos = false;
    std::string positions = "all";
    std::string out_dir = "out";
    int jobs = 1;
    bool allow_split_leakage = false;
    bool allow_fingerprint_mismatch = false;

    GenerationConfig generation() const {
        GenerationConfig g;
        g.temperature = temperature;
        g.top_p = top_p;
        g.max_new_tokens = max_new_tokens;
        g.seed = seed;
        g.stop_on_eos = stop_on_eos;
        return g;
    }

    // Echo for manifests; out_dir is deliberately omitted so a rerun into
    // a different directory produces byte-identical artifacts.
    nlohmann::ordered_json echo() const {
        nlohmann::ordered_json j;
        j["model"] = model;
        j["layer"] = layer;
        j["lambda"] = lambda;
        j["pooling"] = pooling;
        j["temperature"] = temperature;
        j["top_p"] = top_p;
        j["max_new_tokens"] = max_new_tokens;
        j["seed"] = seed;
        j["stop_on_eos"] = stop_on_eos;
        j["positions"] = positions;
        j["jobs"] = jobs;
        j["allow_split_leakage"] = allow_split_leakage;
        j["allow_fingerprint_mismatch"] = allow_fingerprint_mismatch;
        return j;
    }
};

namespace detail {

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key \"" + key + "\": expected integer, got \"" + v + "\"");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<uint64_t>(out);
    } catch (const std::exception&) {
        throw ConfigError("key \"" + key + "\": expected unsigned integer, got \"" + v + "\"");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key \"" + key + "\": expected number, got \"" + v + "\"");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key \"" + key + "\": expected bool, got \"" + v + "\"");
}

}  // namespace detail

inline const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = {
        "model", "layer", "lambda", "pooling", "temperature", "top_p", "max_new_tokens",
        "seed", "stop_on_eos", "positions", "out_dir", "jobs", "allow_split_leakage",
        "allow_fingerprint_mismatch"};
    return keys;
}

inline void apply_config_value(RunConfig& c, const std::string& key, const std::string& v) {
    if (key == "model") c.model = v;
    else if (key == "layer") c.layer = detail::parse_int(key, v);
    else if (key == "lambda") c.lambda = detail::parse_double(key, v);
    else if (key == "pooling") c.pooling = to_string(pooling_from_string(v));
    else if (key == "temperature") c.temperature = detail::parse_double(key, v);
    else if (key == "top_p") c.top_p = detail::parse_double(key, v);
    else if (key == "max_new_tokens") c.max_new_tokens = detail::parse_int(key, v);
    else if (key == "seed") c.seed = detail::parse_u64(key, v);
    else if (key == "stop_on_eos") c.stop_on_eos = detail::parse_bool(key, v);
    else if (key == "positions") c.positions = to_string(hook_positions_from_string(v));
    else if (key == "out_dir") c.out_dir = v;
    else if (key == "jobs") c.jobs = detail::parse_int(key, v);
    else if (key == "allow_split_leakage") c.allow_split_leakage = detail::parse_bool(key, v);
    else if (key == "allow_fingerprint_mismatch")
        c.allow_fingerprint_mismatch = detail::parse_bool(key, v);
    else
        throw ConfigError("unknown config key \"" + key + "\"");
}

// A config file is a flat JSON object of the keys above. A manifest file
// is accepted too: its embedded "config" object is used, which is what
// makes reruns one command.
inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file \"" + path + "\": " + e.what());
    }
    if (j.is_object() && j.contains("schema") && j["schema"] == "steerkit-manifest") {
        j = j.at("config");
    }
    if (!j.is_object()) throw ConfigError("config file \"" + path + "\" must hold a JSON object");

    std::map<std::string, std::string> out;
    for (const auto& [key, value] : j.items()) {
        if (value.is_string()) out[key] = value.get<std::string>();
        else if (value.is_boolean()) out[key] = value.get<bool>() ? "true" : "false";
        else out[key] = value.dump();
    }
    return out;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> getenv_lookup(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
}

inline std::string env_name_for(const std::string& key) {
    std::string name = "STEERKIT_";
    for (char c : key) name.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(c)));
    return name;
}

// Precedence: flags > environment > config file > defaults.
inline RunConfig resolve_config(const std::map<std::string, std::string>& flag_values,
                                const std::map<std::string, std::string>& file_values,
                                const EnvLookup& env = getenv_lookup) {
    RunConfig config;
    for (const auto& [key, value] : file_values) apply_config_value(config, key, value);
    for (const auto& key : run_config_keys()) {
        if (auto v = env(env_name_for(key))) apply_config_value(config, key, *v);
    }
    for (const auto& [key, value] : flag_values) apply_config_value(config, key, value);
    return config;
}

// --- model resolution ---

// "builtin:test" is the deterministic synthetic model; an optional suffix
// "builtin:test:d_model,n_layers,n_heads,d_ff,vocab_size,max_ctx" sizes
// it. Anything else is a checkpoint path handed to the adapter registry.
inline Model resolve_model(const std::string& spec_string) {
    const std::string prefix = "builtin:test";
    if (spec_string.rfind(prefix, 0) == 0) {
        ModelSpec spec;  // defaults are the built-in test size
        if (spec_string.size() > prefix.size()) {
            if (spec_string[prefix.size()] != ':') {
                throw ConfigError("bad model string \"" + spec_string + "\"");
            }
            std::string rest = spec_string.substr(prefix.size() + 1);
            std::vector<int> dims;
            size_t start = 0;
            while (start <= rest.size()) {
                size_t comma = rest.find(',', start);
                std::string part = rest.substr(start, comma == std::string::npos
                                                          ? std::string::npos
                                                          : comma - start);
                dims.push_back(detail::parse_int("model", part));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            if (dims.size() != 6) {
                throw ConfigError("model string needs 6 dims: d_model,n_layers,n_heads,d_ff,"
                                  "vocab_size,max_ctx");
            }
            spec.d_model = dims[0];
            spec.n_layers = dims[1];
            spec.n_heads = dims[2];
            spec.d_ff = dims[3];
            spec.vocab_size = dims[4];
            spec.max_ctx = dims[5];
        }
        return Model::build_test(spec);
    }
    if (!std::filesystem::exists(spec_string)) {
        throw ConfigError("model checkpoint \"" + spec_string + "\" does not exist");
    }
    return AdapterRegistry::instance().load(spec_string);
}

// --- manifests ---

inline std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open \"" + path + "\" for hashing");
    Fnv1a64 h;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h.update(buf, static_cast<size_t>(in.gcount()));
    }
    return h.hex();
}

// One manifest per output directory: command, args, resolved config and
// input hashes. `steerkit rerun` replays it.
inline nlohmann::ordered_json make_manifest(const std::string& command,
                                            const nlohmann::ordered_json& args,
                                            const RunConfig& config,
                                            const nlohmann::ordered_json& inputs,
                                            const std::string& model_fingerprint) {
    nlohmann::ordered_json m;
    m["schema"] = "steerkit-manifest";
    m["version"] = 1;
    m["command"] = command;
    m["args"] = args;
    m["config"] = config.echo();
    m["inputs"] = inputs;
    m["model_fingerprint"] = model_fingerprint;
    return m;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open \"" + path + "\" for writing");
    out << content;
    if (!out) throw FormatError("short write to \"" + path + "\"");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open \"" + path + "\"");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

}  // namespace steerkit
