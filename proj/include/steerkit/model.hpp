#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steerkit/errors.hpp"
#include "steerkit/rng.hpp"
#include "steerkit/tokenizer.hpp"

namespace steerkit {

struct ModelSpec {
    int d_model = 64;
    int n_layers = 12;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = 257;
    int max_ctx = 512;

    void validate() const {
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
            vocab_size <= 0 || max_ctx <= 0) {
            throw SpecError("all dimensions must be positive");
        }
        if (d_model % n_heads != 0) {
            throw SpecError("d_model " + std::to_string(d_model) +
                            " not divisible by n_heads " + std::to_string(n_heads));
        }
        if (vocab_size < ByteTokenizer::kVocabFloor) {
            throw SpecError("vocab_size " + std::to_string(vocab_size) +
                            " below byte-tokenizer floor of 257");
        }
    }

    int d_head() const { return d_model / n_heads; }

    bool operator==(const ModelSpec&) const = default;
};

// Canonical parameter order. One flat float32 blob laid out as:
//
//   tok_emb   [vocab_size x d_model]   row-major (token, dim)
//   pos_emb   [max_ctx x d_model]
//   per layer l = 0..n_layers-1:
//     w_q     [d_model x d_model]      row-major (out, in); y[o] = sum_i w[o][i] x[i]
//     w_k     [d_model x d_model]
//     w_v     [d_model x d_model]
//     w_o     [d_model x d_model]
//     w_in    [d_ff x d_model]
//     w_out   [d_model x d_ff]
//     ln1 gamma [d_model], ln1 beta [d_model]
//     ln2 gamma [d_model], ln2 beta [d_model]
//   ln_f gamma [d_model], ln_f beta [d_model]
//   head      [vocab_size x d_model]
//
// This order is the contract for both the synthetic test model and the
// checkpoint file format; it never changes without a version bump.
struct ParamLayout {
    int64_t tok_emb = 0;
    int64_t pos_emb = 0;
    int64_t layer_base = 0;    // offset of layer 0
    int64_t layer_stride = 0;  // floats per layer
    int64_t wq = 0, wk = 0, wv = 0, wo = 0;  // offsets within a layer
    int64_t w_in = 0, w_out = 0;
    int64_t ln1_g = 0, ln1_b = 0, ln2_g = 0, ln2_b = 0;
    int64_t lnf_g = 0, lnf_b = 0;
    int64_t head = 0;
    int64_t total = 0;

    explicit ParamLayout(const ModelSpec& s) {
        const int64_t d = s.d_model, ff = s.d_ff, v = s.vocab_size, c = s.max_ctx;
        int64_t off = 0;
        tok_emb = off; off += v * d;
        pos_emb = off; off += c * d;
        layer_base = off;
        int64_t l = 0;
        wq = l; l += d * d;
        wk = l; l += d * d;
        wv = l; l += d * d;
        wo = l; l += d * d;
        w_in = l; l += ff * d;
        w_out = l; l += d * ff;
        ln1_g = l; l += d;
        ln1_b = l; l += d;
        ln2_g = l; l += d;
        ln2_b = l; l += d;
        layer_stride = l;
        off += s.n_layers * layer_stride;
        lnf_g = off; off += d;
        lnf_b = off; off += d;
        head = off; off += v * d;
        total = off;
    }
};

inline int64_t param_count(const ModelSpec& spec) { return ParamLayout(spec).total; }

// Immutable weights + spec. Safe to share across concurrent sessions.
class Model {
public:
    Model(ModelSpec spec, std::vector<float> params)
        : spec_(std::move(spec)), layout_(spec_), params_(std::move(params)) {
        spec_.validate();
        if (static_cast<int64_t>(params_.size()) != layout_.total) {
            throw SpecError("parameter blob has " + std::to_string(params_.size()) +
                            " floats, expected " + std::to_string(layout_.total));
        }
        fingerprint_ = compute_fingerprint();
    }

    // Built-in test model: w[i] = 0.02 * sin(1 + i) over the canonical
    // order above, so any two implementations produce identical weights.
    static Model build_test(const ModelSpec& spec) {
        spec.validate();
        const int64_t n = param_count(spec);
        std::vector<float> params(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            params[static_cast<size_t>(i)] =
                static_cast<float>(0.02 * std::sin(1.0 + static_cast<double>(i)));
        }
        return Model(spec, std::move(params));
    }

    const ModelSpec& spec() const { return spec_; }
    const ParamLayout& layout() const { return layout_; }
    const std::string& fingerprint() const { return fingerprint_; }
    std::span<const float> params() const { return params_; }

    std::span<const float> tok_emb(TokenId t) const {
        if (t < 0 || t >= spec_.vocab_size) {
            throw VocabError("token id " + std::to_string(t) + " outside vocab of " +
                             std::to_string(spec_.vocab_size));
        }
        return {params_.data() + layout_.tok_emb + static_cast<int64_t>(t) * spec_.d_model,
                static_cast<size_t>(spec_.d_model)};
    }
    std::span<const float> pos_emb(int pos) const {
        return {params_.data() + layout_.pos_emb + static_cast<int64_t>(pos) * spec_.d_model,
                static_cast<size_t>(spec_.d_model)};
    }
    const float* layer_param(int layer, int64_t field_offset) const {
        return params_.data() + layout_.layer_base + layer * layout_.layer_stride + field_offset;
    }
    const float* global_param(int64_t offset) const { return params_.data() + offset; }

private:
    std::string compute_fingerprint() const {
        Fnv1a64 h;
        h.update_str("steerkit-model-v1");
        h.update_u32(static_cast<uint32_t>(spec_.d_model));
        h.update_u32(static_cast<uint32_t>(spec_.n_layers));
        h.update_u32(static_cast<uint32_t>(spec_.n_heads));
        h.update_u32(static_cast<uint32_t>(spec_.d_ff));
        h.update_u32(static_cast<uint32_t>(spec_.vocab_size));
        h.update_u32(static_cast<uint32_t>(spec_.max_ctx));
        h.update(params_.data(), params_.size() * sizeof(float));
        return h.hex();
    }

    ModelSpec spec_;
    ParamLayout layout_;
    std::vector<float> params_;
    std::string fingerprint_;
};

}  // namespace steerkit
