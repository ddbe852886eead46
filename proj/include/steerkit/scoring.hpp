#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "steerkit/direction.hpp"
#include "steerkit/engine.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/tokenizer.hpp"

namespace steerkit {

// Per-token cosine similarity against the concept direction plus the mean.
// Index 0 is the input term (the final prompt position).
struct ScoreReport {
    std::vector<double> per_token;     // each in [-1, 1]
    double aggregate = 0.0;            // mean of per_token
    int T = 0;                         // generated token count; per_token.size() == T + 1
    std::vector<int> degenerate_tokens;  // indices scored 0 because the activation was zero
    DirectionMeta direction_meta;
};

namespace detail {

// cos(h, a) with double accumulation; zero-norm h scores 0 (flagged by the
// caller) so aggregates stay finite.
inline double cosine_or_zero(const std::vector<float>& h, const std::vector<float>& a,
                             bool* degenerate) {
    double dot = 0.0, h_sq = 0.0, a_sq = 0.0;
    for (size_t i = 0; i < h.size(); ++i) {
        dot += static_cast<double>(h[i]) * a[i];
        h_sq += static_cast<double>(h[i]) * h[i];
        a_sq += static_cast<double>(a[i]) * a[i];
    }
    if (h_sq == 0.0 || a_sq == 0.0) {
        *degenerate = true;
        return 0.0;
    }
    *degenerate = false;
    return dot / (std::sqrt(h_sq) * std::sqrt(a_sq));
}

}  // namespace detail

inline ScoreReport score_trace(const GenerationTrace& trace, const SteeringDirection& direction) {
    if (trace.activations.empty()) {
        throw LayerMismatchError("trace has no captured activations");
    }
    if (trace.capture_layer() != direction.layer()) {
        throw LayerMismatchError("trace captured layer " + std::to_string(trace.capture_layer()) +
                                 " but direction is for layer " +
                                 std::to_string(direction.layer()));
    }
    ScoreReport report;
    report.direction_meta = direction.meta;
    report.T = static_cast<int>(trace.activations.size()) - 1;
    report.per_token.reserve(trace.activations.size());
    for (size_t t = 0; t < trace.activations.size(); ++t) {
        const auto& h = trace.activations[t].values;
        if (h.size() != direction.vector.size()) {
            throw LayerMismatchError("activation dim " + std::to_string(h.size()) +
                                     " vs direction dim " + std::to_string(direction.dim()));
        }
        bool degenerate = false;
        report.per_token.push_back(detail::cosine_or_zero(h, direction.vector, &degenerate));
        if (degenerate) report.degenerate_tokens.push_back(static_cast<int>(t));
    }
    double sum = 0.0;
    for (double s : report.per_token) sum += s;
    report.aggregate = sum / static_cast<double>(report.per_token.size());
    return report;
}

// Teacher-forced scoring of text the engine did not generate: forward over
// prompt + continuation with no hooks, then score_trace semantics. The
// t=0 term is the final prompt position.
inline ScoreReport score_text(const Model& model, const std::string& prompt,
                              const std::string& continuation, const SteeringDirection& direction,
                              bool allow_fingerprint_mismatch = false) {
    check_fingerprint(direction, model.fingerprint(), allow_fingerprint_mismatch);

    TokenSequence tokens = ByteTokenizer::tokenize(prompt);
    const size_t prompt_len = tokens.size();
    TokenSequence cont = ByteTokenizer::encode_bytes(continuation);
    tokens.insert(tokens.end(), cont.begin(), cont.end());
    if (static_cast<int>(tokens.size()) > model.spec().max_ctx) {
        throw ContextError("prompt + continuation is " + std::to_string(tokens.size()) +
                           " tokens, max_ctx is " + std::to_string(model.spec().max_ctx));
    }

    auto [logits, acts] = forward_capture(model, tokens, direction.layer());

    GenerationTrace trace;
    trace.prompt.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(prompt_len));
    trace.generated = cont;
    trace.model_fingerprint = model.fingerprint();
    trace.activations.reserve(cont.size() + 1);
    for (size_t p = prompt_len - 1; p < acts.size(); ++p) {
        trace.activations.push_back(acts[p]);
    }
    return score_trace(trace, direction);
}

}  // namespace steerkit
