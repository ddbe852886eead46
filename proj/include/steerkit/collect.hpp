#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "steerkit/corpus.hpp"
#include "steerkit/direction.hpp"
#include "steerkit/engine.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/tokenizer.hpp"

namespace steerkit {

namespace detail {

// last_token: final position; mean_tokens: positionwise mean over the full
// token sequence as fed (BOS included). Mean accumulates in double.
inline std::vector<float> pool_activations(const std::vector<ActivationVector>& acts,
                                           Pooling pooling) {
    if (pooling == Pooling::last_token) return acts.back().values;
    const size_t dim = acts.front().values.size();
    std::vector<double> acc(dim, 0.0);
    for (const auto& a : acts) {
        for (size_t i = 0; i < dim; ++i) acc[i] += a.values[i];
    }
    const double inv = 1.0 / static_cast<double>(acts.size());
    std::vector<float> out(dim);
    for (size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] * inv);
    return out;
}

// Ordered parallel map: results land at their item index regardless of
// which worker ran them, so fan-out never changes the output.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    const int n_threads = std::min<int>(jobs, static_cast<int>(n));
    threads.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// Runs every instruction through the model with no hooks and pools the
// captured activations into one vector per instruction. The two returned
// sets are pair-aligned, |set| == n_pairs each.
inline std::pair<ActivationSet, ActivationSet> collect_activations(
    const Model& model, const ContrastiveCorpus& corpus, int layer, Pooling pooling,
    int jobs = 1) {
    if (corpus.pairs.empty()) throw EmptyCorpusError("corpus has no pairs");
    if (layer < 0 || layer >= model.spec().n_layers) {
        throw LayerError("collection layer " + std::to_string(layer) + " for model with " +
                         std::to_string(model.spec().n_layers) + " layers");
    }

    ActivationSet set_c, set_u;
    set_c.layer = set_u.layer = layer;
    set_c.pooling = set_u.pooling = pooling;
    set_c.vectors.resize(corpus.pairs.size());
    set_u.vectors.resize(corpus.pairs.size());

    detail::parallel_for(corpus.pairs.size(), jobs, [&](size_t i) {
        const auto& pair = corpus.pairs[i];
        try {
            auto [logits_c, acts_c] =
                forward_capture(model, ByteTokenizer::tokenize(pair.creative), layer);
            set_c.vectors[i] = detail::pool_activations(acts_c, pooling);
            auto [logits_u, acts_u] =
                forward_capture(model, ByteTokenizer::tokenize(pair.uncreative), layer);
            set_u.vectors[i] = detail::pool_activations(acts_u, pooling);
        } catch (const Error& e) {
            throw ModelError("pair \"" + pair.id + "\": " + e.what());
        }
    });
    return {std::move(set_c), std::move(set_u)};
}

// Corpus -> direction in one step, stamping full provenance metadata.
inline SteeringDirection extract_from_corpus(const Model& model, const ContrastiveCorpus& corpus,
                                             int layer, Pooling pooling, int jobs = 1) {
    auto [set_c, set_u] = collect_activations(model, corpus, layer, pooling, jobs);
    DirectionMeta meta;
    meta.layer = layer;
    meta.pooling = pooling;
    meta.model_fingerprint = model.fingerprint();
    meta.corpus_id = corpus.corpus_id;
    meta.corpus_split = to_string(corpus.split);
    meta.n_pairs = static_cast<int>(corpus.pairs.size());
    return extract_direction(set_c, set_u, meta);
}

}  // namespace steerkit
