#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerkit/errors.hpp"

namespace steerkit {

enum class Pooling { last_token, mean_tokens };

inline std::string to_string(Pooling p) {
    return p == Pooling::last_token ? "last_token" : "mean_tokens";
}

inline Pooling pooling_from_string(const std::string& s) {
    if (s == "last_token") return Pooling::last_token;
    if (s == "mean_tokens") return Pooling::mean_tokens;
    throw ConfigError("unknown pooling \"" + s + "\" (expected last_token or mean_tokens)");
}

enum class Split { validation, test };

inline std::string to_string(Split s) {
    return s == Split::validation ? "validation" : "test";
}

inline Split split_from_string(const std::string& s) {
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split \"" + s + "\" (expected validation or test)");
}

// One pooled activation vector per instruction. All vectors share a layer
// and pooling convention.
struct ActivationSet {
    std::vector<std::vector<float>> vectors;
    int layer = 0;
    Pooling pooling = Pooling::last_token;

    size_t size() const { return vectors.size(); }
};

struct DirectionMeta {
    int layer = 0;
    Pooling pooling = Pooling::last_token;
    std::string model_fingerprint;
    std::string corpus_id;
    std::string corpus_split;  // propagated from the corpus the sets came from
    int n_pairs = 0;
};

// The unit concept vector plus the provenance needed to use it safely:
// scoring and steering refuse mismatched layers or models.
struct SteeringDirection {
    std::vector<float> vector;  // unit L2 norm
    DirectionMeta meta;

    int dim() const { return static_cast<int>(vector.size()); }
    int layer() const { return meta.layer; }
};

// Difference in per-class means, normalized to unit length. Accumulates in
// double so the result is stable to well below the 1e-6 contract; stored
// as float32 to match the engine and the file format.
inline SteeringDirection extract_direction(const ActivationSet& set_c,
                                           const ActivationSet& set_u,
                                           const DirectionMeta& meta) {
    if (set_c.vectors.empty() || set_u.vectors.empty()) {
        throw DegenerateDirectionError("both activation sets must be non-empty");
    }
    const size_t dim = set_c.vectors.front().size();
    for (const auto& v : set_c.vectors) {
        if (v.size() != dim) throw SpecError("inconsistent vector length in creative set");
    }
    for (const auto& v : set_u.vectors) {
        if (v.size() != dim) throw SpecError("inconsistent vector length between sets");
    }

    std::vector<double> diff(dim, 0.0);
    for (const auto& v : set_c.vectors) {
        for (size_t i = 0; i < dim; ++i) diff[i] += v[i];
    }
    const double inv_c = 1.0 / static_cast<double>(set_c.vectors.size());
    for (size_t i = 0; i < dim; ++i) diff[i] *= inv_c;

    std::vector<double> mean_u(dim, 0.0);
    for (const auto& v : set_u.vectors) {
        for (size_t i = 0; i < dim; ++i) mean_u[i] += v[i];
    }
    const double inv_u = 1.0 / static_cast<double>(set_u.vectors.size());
    for (size_t i = 0; i < dim; ++i) diff[i] -= mean_u[i] * inv_u;

    double norm_sq = 0.0;
    for (size_t i = 0; i < dim; ++i) norm_sq += diff[i] * diff[i];
    const double norm = std::sqrt(norm_sq);
    if (norm < 1e-10) {
        throw DegenerateDirectionError(
            "class means are indistinguishable at this layer (|diff| = " +
            std::to_string(norm) + ")");
    }

    SteeringDirection dir;
    dir.vector.resize(dim);
    for (size_t i = 0; i < dim; ++i) {
        dir.vector[i] = static_cast<float>(diff[i] / norm);
    }
    dir.meta = meta;
    return dir;
}

// --- direction file format, byte-exact ---
//
//   line 1: one-line JSON metadata record terminated by '\n':
//     {"format":"steerkit-direction","version":1,"dim":D,"layer":L,
//      "pooling":"...","model_fingerprint":"...","corpus_id":"...",
//      "corpus_split":"...","n_pairs":N}
//   then: D float32 values, little-endian, no padding.

inline void save_direction(const SteeringDirection& dir, const std::string& path) {
    nlohmann::ordered_json header;
    header["format"] = "steerkit-direction";
    header["version"] = 1;
    header["dim"] = dir.dim();
    header["layer"] = dir.meta.layer;
    header["pooling"] = to_string(dir.meta.pooling);
    header["model_fingerprint"] = dir.meta.model_fingerprint;
    header["corpus_id"] = dir.meta.corpus_id;
    header["corpus_split"] = dir.meta.corpus_split;
    header["n_pairs"] = dir.meta.n_pairs;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open \"" + path + "\" for writing");
    out << header.dump() << '\n';
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(dir.vector.data()),
              static_cast<std::streamsize>(dir.vector.size() * sizeof(float)));
    if (!out) throw FormatError("short write to \"" + path + "\"");
}

inline SteeringDirection load_direction(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open \"" + path + "\"");
    std::string header_line;
    if (!std::getline(in, header_line)) throw FormatError("missing header line in \"" + path + "\"");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad header in \"" + path + "\": " + e.what());
    }
    try {
        if (header.at("format").get<std::string>() != "steerkit-direction") {
            throw FormatError("\"" + path + "\" is not a direction file");
        }
        if (header.at("version").get<int>() != 1) {
            throw FormatError("unsupported direction file version in \"" + path + "\"");
        }
        SteeringDirection dir;
        const int dim = header.at("dim").get<int>();
        if (dim <= 0) throw FormatError("non-positive dim in \"" + path + "\"");
        dir.meta.layer = header.at("layer").get<int>();
        dir.meta.pooling = pooling_from_string(header.at("pooling").get<std::string>());
        dir.meta.model_fingerprint = header.at("model_fingerprint").get<std::string>();
        dir.meta.corpus_id = header.at("corpus_id").get<std::string>();
        dir.meta.corpus_split = header.at("corpus_split").get<std::string>();
        dir.meta.n_pairs = header.at("n_pairs").get<int>();

        dir.vector.resize(static_cast<size_t>(dim));
        in.read(reinterpret_cast<char*>(dir.vector.data()),
                static_cast<std::streamsize>(dir.vector.size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(dir.vector.size() * sizeof(float))) {
            throw FormatError("truncated vector blob in \"" + path + "\"");
        }
        char extra;
        if (in.read(&extra, 1)) {
            throw FormatError("trailing bytes after vector blob in \"" + path + "\"");
        }
        return dir;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad header field in \"" + path + "\": " + e.what());
    }
}

// Strict by default; callers pass allow_mismatch=true to override.
inline void check_fingerprint(const SteeringDirection& dir, const std::string& model_fingerprint,
                              bool allow_mismatch) {
    if (dir.meta.model_fingerprint == model_fingerprint) return;
    if (allow_mismatch) return;
    throw FingerprintError("direction was extracted on model " + dir.meta.model_fingerprint +
                           " but is being used with model " + model_fingerprint);
}

}  // namespace steerkit
