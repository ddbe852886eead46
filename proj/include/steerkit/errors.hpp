#pragma once

#include <stdexcept>
#include <string>

namespace steerkit {

// Base class for everything thrown by the library. The CLI maps these to
// exit codes: config 2, data 3, model 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// --- data errors ---

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

struct ParseError : DataError {
    int line = 0;
    ParseError(int line_, const std::string& msg)
        : DataError("parse error at line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

struct EmptyCorpusError : DataError {
    explicit EmptyCorpusError(const std::string& msg) : DataError("empty corpus: " + msg) {}
};

struct DuplicateIdError : DataError {
    explicit DuplicateIdError(const std::string& id)
        : DataError("duplicate pair id: " + id) {}
};

struct FormatError : DataError {
    explicit FormatError(const std::string& msg) : DataError("format error: " + msg) {}
};

struct SplitLeakageError : DataError {
    explicit SplitLeakageError(const std::string& msg)
        : DataError("split leakage: " + msg) {}
};

struct RatingParseError : DataError {
    explicit RatingParseError(const std::string& output)
        : DataError("no rating digit in model output: \"" + output + "\"") {}
};

// --- model errors ---

struct ModelError : Error {
    explicit ModelError(const std::string& msg) : Error(msg) {}
};

struct SpecError : ModelError {
    explicit SpecError(const std::string& msg) : ModelError("invalid model spec: " + msg) {}
};

struct VocabError : ModelError {
    explicit VocabError(const std::string& msg) : ModelError("vocab error: " + msg) {}
};

struct LayerError : ModelError {
    explicit LayerError(const std::string& msg) : ModelError("layer out of range: " + msg) {}
};

struct ContextError : ModelError {
    explicit ContextError(const std::string& msg) : ModelError("context overflow: " + msg) {}
};

struct StrengthError : ModelError {
    explicit StrengthError(const std::string& msg) : ModelError("bad hook strength: " + msg) {}
};

struct DegenerateDirectionError : ModelError {
    explicit DegenerateDirectionError(const std::string& msg)
        : ModelError("degenerate direction: " + msg) {}
};

struct FingerprintError : ModelError {
    explicit FingerprintError(const std::string& msg)
        : ModelError("model fingerprint mismatch: " + msg) {}
};

struct LayerMismatchError : ModelError {
    explicit LayerMismatchError(const std::string& msg)
        : ModelError("layer mismatch: " + msg) {}
};

}  // namespace steerkit
