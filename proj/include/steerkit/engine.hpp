#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steerkit/direction.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/model.hpp"
#include "steerkit/rng.hpp"
#include "steerkit/tokenizer.hpp"

namespace steerkit {

// Residual-stream state at one layer and position.
struct ActivationVector {
    std::vector<float> values;
    int layer = 0;
    int position = 0;
};

enum class HookKind { Additive, Ablate };

inline std::string to_string(HookKind k) {
    return k == HookKind::Additive ? "additive" : "ablate";
}

// An intervention bound to a layer. Additive shifts the stream by
// strength * a; Ablate removes the component along a.
struct HookSpec {
    int layer = 0;
    HookKind kind = HookKind::Additive;
    SteeringDirection direction;
    double strength = 0.0;  // only meaningful for Additive
};

// Whether hooks touch every position or only newly generated ones.
enum class HookPositions { all, generated };

inline std::string to_string(HookPositions p) {
    return p == HookPositions::all ? "all" : "generated";
}

inline HookPositions hook_positions_from_string(const std::string& s) {
    if (s == "all") return HookPositions::all;
    if (s == "generated") return HookPositions::generated;
    throw ConfigError("unknown positions \"" + s + "\" (expected all or generated)");
}

struct GenerationConfig {
    double temperature = 1.0;
    double top_p = 1.0;
    int max_new_tokens = 256;
    uint64_t seed = 0;
    bool stop_on_eos = false;

    void validate() const {
        if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
        if (!(top_p > 0.0) || top_p > 1.0) throw ConfigError("top_p must be in (0, 1]");
        if (max_new_tokens <= 0) throw ConfigError("max_new_tokens must be positive");
    }
};

// Tokens plus the residual-stream tap at the capture layer: index 0 is the
// final prompt position, indices 1..T the generated positions.
struct GenerationTrace {
    TokenSequence prompt;
    TokenSequence generated;
    std::vector<ActivationVector> activations;  // size T + 1
    GenerationConfig config;
    std::string model_fingerprint;
    std::string intervention;  // human-readable plan description, empty if none

    int capture_layer() const {
        return activations.empty() ? -1 : activations.front().layer;
    }
    int generated_count() const { return static_cast<int>(generated.size()); }
};

namespace detail {

// y[o] = sum_i w[o * d_in + i] * x[i], float32 sequential accumulation.
inline void matvec(const float* w, const float* x, float* y, int d_out, int d_in) {
    for (int o = 0; o < d_out; ++o) {
        float acc = 0.0f;
        const float* row = w + static_cast<int64_t>(o) * d_in;
        for (int i = 0; i < d_in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

inline void layer_norm(const float* x, const float* gamma, const float* beta, float* out, int d) {
    float mean = 0.0f;
    for (int i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int i = 0; i < d; ++i) {
        float c = x[i] - mean;
        var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    for (int i = 0; i < d; ++i) {
        out[i] = gamma[i] * ((x[i] - mean) * inv) + beta[i];
    }
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

inline void apply_hook(const HookSpec& hook, float* x, int d) {
    const float* a = hook.direction.vector.data();
    if (hook.kind == HookKind::Ablate) {
        float dot = 0.0f;
        for (int i = 0; i < d; ++i) dot += x[i] * a[i];
        for (int i = 0; i < d; ++i) x[i] -= dot * a[i];
    } else {
        const float s = static_cast<float>(hook.strength);
        for (int i = 0; i < d; ++i) x[i] += s * a[i];
    }
}

}  // namespace detail

inline void validate_hooks(const Model& model, const std::vector<HookSpec>& hooks) {
    for (const auto& h : hooks) {
        if (h.layer < 0 || h.layer >= model.spec().n_layers) {
            throw LayerError("hook layer " + std::to_string(h.layer) + " for model with " +
                             std::to_string(model.spec().n_layers) + " layers");
        }
        if (h.direction.dim() != model.spec().d_model) {
            throw LayerMismatchError("hook direction dim " + std::to_string(h.direction.dim()) +
                                     " vs model d_model " + std::to_string(model.spec().d_model));
        }
        if (!std::isfinite(h.strength)) {
            throw StrengthError("strength is not finite");
        }
    }
}

// One decoding session: KV cache plus a position cursor. Single-threaded;
// run N sessions concurrently over one shared model instead.
class Session {
public:
    explicit Session(const Model& model)
        : model_(model),
          d_(model.spec().d_model),
          d_head_(model.spec().d_head()),
          n_heads_(model.spec().n_heads) {
        const auto& s = model.spec();
        k_cache_.assign(static_cast<size_t>(s.n_layers) * s.max_ctx * d_, 0.0f);
        v_cache_.assign(static_cast<size_t>(s.n_layers) * s.max_ctx * d_, 0.0f);
        x_.resize(static_cast<size_t>(d_));
        normed_.resize(static_cast<size_t>(d_));
        q_.resize(static_cast<size_t>(d_));
        attn_.resize(static_cast<size_t>(d_));
        proj_.resize(static_cast<size_t>(d_));
        ff_.resize(static_cast<size_t>(model.spec().d_ff));
        scores_.resize(static_cast<size_t>(s.max_ctx));
        logits_.resize(static_cast<size_t>(s.vocab_size));
    }

    int position() const { return pos_; }
    const std::vector<float>& logits() const { return logits_; }

    // Advances the stream by one token. Hooks fire post-block at their
    // layer when apply_hooks is set; if capture_layer >= 0 the post-hook
    // stream at that layer is copied into *captured.
    void step(TokenId token, const std::vector<HookSpec>& hooks, bool apply_hooks,
              int capture_layer, std::vector<float>* captured) {
        const auto& spec = model_.spec();
        if (pos_ >= spec.max_ctx) {
            throw ContextError("position " + std::to_string(pos_) + " reached max_ctx " +
                               std::to_string(spec.max_ctx));
        }
        const auto& lay = model_.layout();

        auto tok = model_.tok_emb(token);
        auto pos = model_.pos_emb(pos_);
        for (int i = 0; i < d_; ++i) x_[static_cast<size_t>(i)] = tok[static_cast<size_t>(i)] + pos[static_cast<size_t>(i)];

        for (int l = 0; l < spec.n_layers; ++l) {
            // attention
            detail::layer_norm(x_.data(), model_.layer_param(l, lay.ln1_g),
                               model_.layer_param(l, lay.ln1_b), normed_.data(), d_);
            float* k_row = k_cache_.data() + (static_cast<size_t>(l) * spec.max_ctx + static_cast<size_t>(pos_)) * d_;
            float* v_row = v_cache_.data() + (static_cast<size_t>(l) * spec.max_ctx + static_cast<size_t>(pos_)) * d_;
            detail::matvec(model_.layer_param(l, lay.wq), normed_.data(), q_.data(), d_, d_);
            detail::matvec(model_.layer_param(l, lay.wk), normed_.data(), k_row, d_, d_);
            detail::matvec(model_.layer_param(l, lay.wv), normed_.data(), v_row, d_, d_);

            const float scale = 1.0f / std::sqrt(static_cast<float>(d_head_));
            for (int h = 0; h < n_heads_; ++h) {
                const int off = h * d_head_;
                const float* qh = q_.data() + off;
                float max_score = -std::numeric_limits<float>::infinity();
                for (int j = 0; j <= pos_; ++j) {
                    const float* kh = k_cache_.data() +
                        (static_cast<size_t>(l) * spec.max_ctx + static_cast<size_t>(j)) * d_ + off;
                    float s = 0.0f;
                    for (int i = 0; i < d_head_; ++i) s += qh[i] * kh[i];
                    s *= scale;
                    scores_[static_cast<size_t>(j)] = s;
                    if (s > max_score) max_score = s;
                }
                float denom = 0.0f;
                for (int j = 0; j <= pos_; ++j) {
                    float e = std::exp(scores_[static_cast<size_t>(j)] - max_score);
                    scores_[static_cast<size_t>(j)] = e;
                    denom += e;
                }
                const float inv_denom = 1.0f / denom;
                for (int i = 0; i < d_head_; ++i) attn_[static_cast<size_t>(off + i)] = 0.0f;
                for (int j = 0; j <= pos_; ++j) {
                    const float w = scores_[static_cast<size_t>(j)] * inv_denom;
                    const float* vh = v_cache_.data() +
                        (static_cast<size_t>(l) * spec.max_ctx + static_cast<size_t>(j)) * d_ + off;
                    for (int i = 0; i < d_head_; ++i) attn_[static_cast<size_t>(off + i)] += w * vh[i];
                }
            }
            detail::matvec(model_.layer_param(l, lay.wo), attn_.data(), proj_.data(), d_, d_);
            for (int i = 0; i < d_; ++i) x_[static_cast<size_t>(i)] += proj_[static_cast<size_t>(i)];

            // mlp
            detail::layer_norm(x_.data(), model_.layer_param(l, lay.ln2_g),
                               model_.layer_param(l, lay.ln2_b), normed_.data(), d_);
            detail::matvec(model_.layer_param(l, lay.w_in), normed_.data(), ff_.data(),
                           spec.d_ff, d_);
            for (int i = 0; i < spec.d_ff; ++i) ff_[static_cast<size_t>(i)] = detail::gelu(ff_[static_cast<size_t>(i)]);
            detail::matvec(model_.layer_param(l, lay.w_out), ff_.data(), proj_.data(), d_, spec.d_ff);
            for (int i = 0; i < d_; ++i) x_[static_cast<size_t>(i)] += proj_[static_cast<size_t>(i)];

            // post-block: the residual tap for layer l. Ablate composes
            // before Additive when both sit on one layer.
            if (apply_hooks) {
                for (const auto& h : hooks) {
                    if (h.layer == l && h.kind == HookKind::Ablate) detail::apply_hook(h, x_.data(), d_);
                }
                for (const auto& h : hooks) {
                    if (h.layer == l && h.kind == HookKind::Additive) detail::apply_hook(h, x_.data(), d_);
                }
            }
            if (l == capture_layer && captured != nullptr) {
                captured->assign(x_.begin(), x_.end());
            }
        }

        detail::layer_norm(x_.data(), model_.global_param(lay.lnf_g),
                           model_.global_param(lay.lnf_b), normed_.data(), d_);
        detail::matvec(model_.global_param(lay.head), normed_.data(), logits_.data(),
                       spec.vocab_size, d_);
        ++pos_;
    }

private:
    const Model& model_;
    int d_;
    int d_head_;
    int n_heads_;
    int pos_ = 0;
    std::vector<float> k_cache_, v_cache_;
    std::vector<float> x_, normed_, q_, attn_, proj_, ff_, scores_, logits_;
};

// Next-token logits plus the post-hook residual activations at `layer`
// for every prompt position. Hooks fire at all positions.
inline std::pair<std::vector<float>, std::vector<ActivationVector>> forward_capture(
    const Model& model, const TokenSequence& prompt, int layer,
    const std::vector<HookSpec>& hooks = {}) {
    if (prompt.empty()) throw ContextError("prompt must be non-empty");
    if (layer < 0 || layer >= model.spec().n_layers) {
        throw LayerError("capture layer " + std::to_string(layer) + " for model with " +
                         std::to_string(model.spec().n_layers) + " layers");
    }
    if (static_cast<int>(prompt.size()) > model.spec().max_ctx) {
        throw ContextError("prompt of " + std::to_string(prompt.size()) +
                           " tokens exceeds max_ctx " + std::to_string(model.spec().max_ctx));
    }
    validate_hooks(model, hooks);

    Session session(model);
    std::vector<ActivationVector> acts;
    acts.reserve(prompt.size());
    std::vector<float> captured;
    for (size_t p = 0; p < prompt.size(); ++p) {
        session.step(prompt[p], hooks, /*apply_hooks=*/true, layer, &captured);
        acts.push_back(ActivationVector{captured, layer, static_cast<int>(p)});
    }
    return {session.logits(), std::move(acts)};
}

namespace detail {

// Temperature scaling, then nucleus truncation, then one multinomial draw.
// Candidates are ordered by (probability desc, token id asc) so the kept
// set and any tie-breaking are platform-independent.
inline TokenId sample_token(const std::vector<float>& logits, const GenerationConfig& config,
                            Pcg32& rng) {
    const size_t n = logits.size();
    std::vector<double> probs(n);
    const double inv_temp = 1.0 / config.temperature;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
        probs[i] = static_cast<double>(logits[i]) * inv_temp;
        if (probs[i] > max_logit) max_logit = probs[i];
    }
    double denom = 0.0;
    for (size_t i = 0; i < n; ++i) {
        probs[i] = std::exp(probs[i] - max_logit);
        denom += probs[i];
    }
    for (size_t i = 0; i < n; ++i) probs[i] /= denom;

    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&probs](uint32_t a, uint32_t b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });

    // smallest prefix with cumulative probability >= top_p, never empty
    size_t kept = n;
    if (config.top_p < 1.0) {
        double cum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            cum += probs[order[i]];
            if (cum >= config.top_p) {
                kept = i + 1;
                break;
            }
        }
    }
    double kept_mass = 0.0;
    for (size_t i = 0; i < kept; ++i) kept_mass += probs[order[i]];

    const double u = rng.next_double() * kept_mass;
    double cum = 0.0;
    for (size_t i = 0; i < kept; ++i) {
        cum += probs[order[i]];
        if (u < cum) return static_cast<TokenId>(order[i]);
    }
    return static_cast<TokenId>(order[kept - 1]);
}

}  // namespace detail

// Autoregressive sampling with the hooks active for the whole run. The
// trace records the capture-layer activation of the final prompt position
// (index 0) and of each generated position (1..T).
inline GenerationTrace generate(const Model& model, const TokenSequence& prompt,
                                const GenerationConfig& config,
                                const std::vector<HookSpec>& hooks, int capture_layer,
                                HookPositions positions = HookPositions::all) {
    config.validate();
    if (prompt.empty()) throw ContextError("prompt must be non-empty");
    if (capture_layer < 0 || capture_layer >= model.spec().n_layers) {
        throw LayerError("capture layer " + std::to_string(capture_layer) + " for model with " +
                         std::to_string(model.spec().n_layers) + " layers");
    }
    if (static_cast<int>(prompt.size()) + config.max_new_tokens > model.spec().max_ctx) {
        throw ContextError("prompt of " + std::to_string(prompt.size()) + " tokens + " +
                           std::to_string(config.max_new_tokens) + " new tokens exceeds max_ctx " +
                           std::to_string(model.spec().max_ctx));
    }
    validate_hooks(model, hooks);

    Session session(model);
    Pcg32 rng(config.seed);

    GenerationTrace trace;
    trace.prompt = prompt;
    trace.config = config;
    trace.model_fingerprint = model.fingerprint();

    const bool hook_prompt = positions == HookPositions::all;
    std::vector<float> captured;
    for (size_t p = 0; p < prompt.size(); ++p) {
        session.step(prompt[p], hooks, hook_prompt, capture_layer, &captured);
    }
    trace.activations.push_back(
        ActivationVector{captured, capture_layer, static_cast<int>(prompt.size()) - 1});

    for (int t = 0; t < config.max_new_tokens; ++t) {
        TokenId next = detail::sample_token(session.logits(), config, rng);
        if (config.stop_on_eos && next == ByteTokenizer::kEos) break;
        session.step(next, hooks, /*apply_hooks=*/true, capture_layer, &captured);
        trace.generated.push_back(next);
        trace.activations.push_back(
            ActivationVector{captured, capture_layer, session.position() - 1});
    }
    return trace;
}

}  // namespace steerkit
