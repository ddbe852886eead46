#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "steerkit/errors.hpp"
#include "steerkit/model.hpp"

namespace steerkit {

// Built-in checkpoint format, byte-exact:
//
//   bytes 0..3   magic "STKW"
//   bytes 4..7   version, u32 little-endian (currently 1)
//   bytes 8..31  ModelSpec as six u32 little-endian values:
//                d_model, n_layers, n_heads, d_ff, vocab_size, max_ctx
//   bytes 32..   param_count(spec) float32 little-endian values in the
//                canonical order documented in model.hpp
//
// No padding, no trailing bytes.

namespace detail {

inline void write_u32_le(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32_le(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError("truncated checkpoint while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open \"" + path + "\" for writing");
    out.write("STKW", 4);
    detail::write_u32_le(out, 1u);
    const auto& s = model.spec();
    detail::write_u32_le(out, static_cast<uint32_t>(s.d_model));
    detail::write_u32_le(out, static_cast<uint32_t>(s.n_layers));
    detail::write_u32_le(out, static_cast<uint32_t>(s.n_heads));
    detail::write_u32_le(out, static_cast<uint32_t>(s.d_ff));
    detail::write_u32_le(out, static_cast<uint32_t>(s.vocab_size));
    detail::write_u32_le(out, static_cast<uint32_t>(s.max_ctx));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(model.params().data()),
              static_cast<std::streamsize>(model.params().size() * sizeof(float)));
    if (!out) throw FormatError("short write to \"" + path + "\"");
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open \"" + path + "\"");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "STKW", 4) != 0) {
        throw FormatError("\"" + path + "\" is not an STKW checkpoint");
    }
    const uint32_t version = detail::read_u32_le(in, "version");
    if (version != 1u) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    ModelSpec spec;
    spec.d_model = static_cast<int>(detail::read_u32_le(in, "d_model"));
    spec.n_layers = static_cast<int>(detail::read_u32_le(in, "n_layers"));
    spec.n_heads = static_cast<int>(detail::read_u32_le(in, "n_heads"));
    spec.d_ff = static_cast<int>(detail::read_u32_le(in, "d_ff"));
    spec.vocab_size = static_cast<int>(detail::read_u32_le(in, "vocab_size"));
    spec.max_ctx = static_cast<int>(detail::read_u32_le(in, "max_ctx"));
    spec.validate();

    std::vector<float> params(static_cast<size_t>(param_count(spec)));
    in.read(reinterpret_cast<char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(params.size() * sizeof(float))) {
        throw FormatError("truncated parameter blob in \"" + path + "\"");
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw FormatError("trailing bytes after parameter blob in \"" + path + "\"");
    }
    return Model(spec, std::move(params));
}

// Extension point for third-party single-file checkpoint formats. An
// adapter claims a file (usually by magic bytes) and loads it behind the
// same Model interface. The STKW loader above is the only built-in.
class CheckpointAdapter {
public:
    virtual ~CheckpointAdapter() = default;
    virtual std::string name() const = 0;
    virtual bool matches(const std::string& path) const = 0;
    virtual Model load(const std::string& path) const = 0;
};

class StkwAdapter final : public CheckpointAdapter {
public:
    std::string name() const override { return "stkw"; }
    bool matches(const std::string& path) const override {
        std::ifstream in(path, std::ios::binary);
        char magic[4];
        in.read(magic, 4);
        return in.gcount() == 4 && std::memcmp(magic, "STKW", 4) == 0;
    }
    Model load(const std::string& path) const override { return load_checkpoint(path); }
};

class AdapterRegistry {
public:
    static AdapterRegistry& instance() {
        static AdapterRegistry reg;
        return reg;
    }

    void add(std::unique_ptr<CheckpointAdapter> adapter) {
        adapters_.push_back(std::move(adapter));
    }

    Model load(const std::string& path) const {
        for (const auto& a : adapters_) {
            if (a->matches(path)) return a->load(path);
        }
        throw FormatError("no checkpoint adapter recognizes \"" + path + "\"");
    }

private:
    AdapterRegistry() { add(std::make_unique<StkwAdapter>()); }
    std::vector<std::unique_ptr<CheckpointAdapter>> adapters_;
};

}  // namespace steerkit
