#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "steerkit/collect.hpp"
#include "steerkit/corpus.hpp"
#include "steerkit/direction.hpp"
#include "steerkit/engine.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/rng.hpp"
#include "steerkit/scoring.hpp"
#include "steerkit/steering.hpp"
#include "steerkit/tokenizer.hpp"

namespace steerkit {

enum class PairwiseLabel { A, B, unknown };

inline std::string to_string(PairwiseLabel l) {
    switch (l) {
        case PairwiseLabel::A: return "A";
        case PairwiseLabel::B: return "B";
        default: return "unknown";
    }
}

inline PairwiseLabel pairwise_label_from_string(const std::string& s) {
    if (s == "A" || s == "a") return PairwiseLabel::A;
    if (s == "B" || s == "b") return PairwiseLabel::B;
    if (s == "unknown" || s.empty()) return PairwiseLabel::unknown;
    throw ConfigError("unknown pairwise label \"" + s + "\"");
}

struct PairwiseItem {
    std::string id;
    std::string prompt;
    std::string completion_a;
    std::string completion_b;
    PairwiseLabel label = PairwiseLabel::unknown;  // which side is the creative one, when known
};

struct ConditionStats {
    std::string name;
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;
};

struct EvalReport {
    std::string kind;
    int n = 0;        // items that count toward accuracy / the means
    int correct = 0;  // accuracy == correct / n exactly
    int ties = 0;
    double accuracy = 0.0;
    std::vector<ConditionStats> conditions;
    std::vector<nlohmann::ordered_json> items;  // optional per-item record stream
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

namespace detail {

// Normal-approximation 95% CI: mean +/- 1.96 * sd / sqrt(n), sample sd
// with n-1 denominator. Collapses to the mean for n < 2.
inline ConditionStats condition_stats(const std::string& name, const std::vector<double>& xs) {
    ConditionStats s;
    s.name = name;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) {
        s.ci_low = s.ci_high = s.mean;
        return s;
    }
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    const double sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    const double half = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
    s.ci_low = s.mean - half;
    s.ci_high = s.mean + half;
    return s;
}

inline nlohmann::ordered_json score_record(const ScoreReport& r) {
    nlohmann::ordered_json j;
    j["aggregate"] = r.aggregate;
    j["per_token"] = r.per_token;
    j["T"] = r.T;
    return j;
}

}  // namespace detail

// Directions must come from a validation split and must not be evaluated on
// the corpus+split they were extracted from.
inline void check_split_hygiene(const SteeringDirection& direction,
                                const ContrastiveCorpus& eval_corpus, bool allow_leakage) {
    if (allow_leakage) return;
    if (direction.meta.corpus_split != to_string(Split::validation)) {
        throw SplitLeakageError("direction was extracted from the \"" +
                                direction.meta.corpus_split +
                                "\" split; extraction must use the validation split");
    }
    if (direction.meta.corpus_id == eval_corpus.corpus_id &&
        direction.meta.corpus_split == to_string(eval_corpus.split)) {
        throw SplitLeakageError("direction corpus " + direction.meta.corpus_id + " (" +
                                direction.meta.corpus_split +
                                ") is the evaluation corpus itself");
    }
}

// Three conditions per pair: the uncreative prompt as-is, the uncreative
// prompt with the direction added at strength, and the creative prompt.
// All three share the per-item seed, so strength 0 makes induced == baseline.
inline EvalReport run_separation_study(const Model& model, const ContrastiveCorpus& corpus,
                                       const SteeringDirection& direction, double strength,
                                       const GenerationConfig& config, int jobs = 1,
                                       bool allow_split_leakage = false,
                                       bool allow_fingerprint_mismatch = false) {
    check_split_hygiene(direction, corpus, allow_split_leakage);
    check_fingerprint(direction, model.fingerprint(), allow_fingerprint_mismatch);

    const size_t n = corpus.pairs.size();
    std::vector<ScoreReport> baseline(n), induced(n), creative(n);

    detail::parallel_for(n, jobs, [&](size_t i) {
        const auto& pair = corpus.pairs[i];
        GenerationConfig item_config = config;
        item_config.seed = derive_seed(config.seed, i);

        auto prompt_u = ByteTokenizer::tokenize(pair.uncreative);
        auto prompt_c = ByteTokenizer::tokenize(pair.creative);

        GenerationTrace t_base = generate(model, prompt_u, item_config, {}, direction.layer());
        GenerationTrace t_induced = steer_generate(model, prompt_u, direction, strength,
                                                   item_config, HookPositions::all,
                                                   allow_fingerprint_mismatch);
        GenerationTrace t_creative = generate(model, prompt_c, item_config, {}, direction.layer());

        baseline[i] = score_trace(t_base, direction);
        induced[i] = score_trace(t_induced, direction);
        creative[i] = score_trace(t_creative, direction);
    });

    EvalReport report;
    report.kind = "separation";
    report.n = static_cast<int>(n);
    std::vector<double> agg_base, agg_induced, agg_creative;
    for (size_t i = 0; i < n; ++i) {
        agg_base.push_back(baseline[i].aggregate);
        agg_induced.push_back(induced[i].aggregate);
        agg_creative.push_back(creative[i].aggregate);
        nlohmann::ordered_json item;
        item["id"] = corpus.pairs[i].id;
        item["seed"] = derive_seed(config.seed, i);
        item["baseline"] = detail::score_record(baseline[i]);
        item["induced"] = detail::score_record(induced[i]);
        item["creative"] = detail::score_record(creative[i]);
        report.items.push_back(std::move(item));
    }
    report.conditions.push_back(detail::condition_stats("baseline", agg_base));
    report.conditions.push_back(detail::condition_stats("induced", agg_induced));
    report.conditions.push_back(detail::condition_stats("creative", agg_creative));
    return report;
}

enum class PairwisePrediction { A, B, tie };

inline std::string to_string(PairwisePrediction p) {
    switch (p) {
        case PairwisePrediction::A: return "A";
        case PairwisePrediction::B: return "B";
        default: return "tie";
    }
}

// The decision rule, pulled out so it can be tested on synthetic scores:
// higher aggregate wins, exact equality is a tie.
inline PairwisePrediction predict_from_aggregates(double score_a, double score_b) {
    if (score_a > score_b) return PairwisePrediction::A;
    if (score_b > score_a) return PairwisePrediction::B;
    return PairwisePrediction::tie;
}

// Scores both completions via teacher forcing and predicts the one with
// the higher aggregate. Ties count against accuracy when a label exists;
// unlabeled items are predicted but excluded from n.
inline EvalReport pairwise_compare_by_score(const std::vector<PairwiseItem>& items,
                                            const Model& model,
                                            const SteeringDirection& direction, int jobs = 1,
                                            bool allow_fingerprint_mismatch = false) {
    if (items.empty()) throw EmptyCorpusError("no pairwise items");
    for (const auto& item : items) {
        if (item.completion_a == item.completion_b) {
            throw DataError("item \"" + item.id + "\": completions must be distinct");
        }
    }

    const size_t n_items = items.size();
    std::vector<double> score_a(n_items), score_b(n_items);
    detail::parallel_for(n_items, jobs, [&](size_t i) {
        score_a[i] = score_text(model, items[i].prompt, items[i].completion_a, direction,
                                allow_fingerprint_mismatch)
                         .aggregate;
        score_b[i] = score_text(model, items[i].prompt, items[i].completion_b, direction,
                                allow_fingerprint_mismatch)
                         .aggregate;
    });

    EvalReport report;
    report.kind = "pairwise";
    for (size_t i = 0; i < n_items; ++i) {
        const auto& item = items[i];
        const PairwisePrediction pred = predict_from_aggregates(score_a[i], score_b[i]);
        if (pred == PairwisePrediction::tie) ++report.ties;

        bool counted = false, correct = false;
        if (item.label != PairwiseLabel::unknown) {
            counted = true;
            correct = (item.label == PairwiseLabel::A && pred == PairwisePrediction::A) ||
                      (item.label == PairwiseLabel::B && pred == PairwisePrediction::B);
            ++report.n;
            if (correct) ++report.correct;
        }
        nlohmann::ordered_json rec;
        rec["id"] = item.id;
        rec["score_a"] = score_a[i];
        rec["score_b"] = score_b[i];
        rec["prediction"] = to_string(pred);
        rec["label"] = to_string(item.label);
        rec["counted"] = counted;
        rec["correct"] = correct;
        report.items.push_back(std::move(rec));
    }
    report.accuracy = report.n > 0
                          ? static_cast<double>(report.correct) / static_cast<double>(report.n)
                          : 0.0;
    return report;
}

// --- rating-prompt baseline ---

constexpr const char* kDefaultRatingTemplate =
    "Rate the creativity of the following story on a scale from 0 to 9.\n"
    "Story: {story}\n"
    "Rating:";

inline std::string render_rating_prompt(const std::string& story, const std::string& tmpl) {
    const std::string slot = "{story}";
    const size_t at = tmpl.find(slot);
    if (at == std::string::npos) {
        throw ConfigError("rating template has no {story} slot");
    }
    std::string out = tmpl;
    out.replace(at, slot.size(), story);
    return out;
}

// First decimal digit of the completion wins; "10" therefore parses as 1,
// which keeps every parse inside the 0-9 scale.
inline int parse_rating(const std::string& output) {
    for (char c : output) {
        if (c >= '0' && c <= '9') return c - '0';
    }
    throw RatingParseError(output);
}

// Renders the template, generates a short greedy completion and parses the
// first digit as the rating.
inline int rating_harness(const Model& model, const std::string& story, const std::string& tmpl,
                          uint64_t seed = 0) {
    const std::string prompt = render_rating_prompt(story, tmpl);
    GenerationConfig config;
    config.temperature = 1.0;
    config.top_p = 1e-9;  // nucleus of one token == greedy
    config.max_new_tokens = 8;
    config.seed = seed;
    GenerationTrace trace = generate(model, ByteTokenizer::tokenize(prompt), config, {}, 0);
    return parse_rating(ByteTokenizer::detokenize(trace.generated));
}

// Batch wrapper: parse failures are recorded per item, never fatal.
inline EvalReport run_rating_eval(const Model& model,
                                  const std::vector<std::pair<std::string, std::string>>& stories,
                                  const std::string& tmpl, uint64_t seed = 0, int jobs = 1) {
    if (stories.empty()) throw EmptyCorpusError("no stories to rate");
    const size_t n = stories.size();
    std::vector<int> ratings(n, -1);
    std::vector<std::string> errors(n);
    detail::parallel_for(n, jobs, [&](size_t i) {
        try {
            ratings[i] = rating_harness(model, stories[i].second, tmpl, derive_seed(seed, i));
        } catch (const RatingParseError& e) {
            errors[i] = e.what();
        }
    });

    EvalReport report;
    report.kind = "rating";
    std::vector<double> parsed;
    for (size_t i = 0; i < n; ++i) {
        nlohmann::ordered_json rec;
        rec["id"] = stories[i].first;
        if (ratings[i] >= 0) {
            rec["rating"] = ratings[i];
            parsed.push_back(static_cast<double>(ratings[i]));
        } else {
            rec["error"] = errors[i];
        }
        report.items.push_back(std::move(rec));
    }
    report.n = static_cast<int>(parsed.size());
    report.conditions.push_back(detail::condition_stats("rating", parsed));
    return report;
}

// --- layer sweep ---

// Printable = ASCII 32..126 plus tab, newline, carriage return.
inline bool is_printable_token(TokenId t) {
    return (t >= 32 && t <= 126) || t == 9 || t == 10 || t == 13;
}

// Degeneration of a generated token stream: the larger of the repeated
// bigram fraction (bigrams already seen earlier in the stream) and the
// non-printable token fraction.
inline double degeneration_metric(const TokenSequence& tokens) {
    if (tokens.empty()) return 0.0;
    int non_printable = 0;
    for (TokenId t : tokens) {
        if (!is_printable_token(t)) ++non_printable;
    }
    const double np_frac = static_cast<double>(non_printable) / static_cast<double>(tokens.size());

    double rep_frac = 0.0;
    if (tokens.size() >= 2) {
        std::set<std::pair<TokenId, TokenId>> seen;
        int repeated = 0;
        for (size_t i = 1; i < tokens.size(); ++i) {
            if (!seen.insert({tokens[i - 1], tokens[i]}).second) ++repeated;
        }
        rep_frac = static_cast<double>(repeated) / static_cast<double>(tokens.size() - 1);
    }
    return std::max(rep_frac, np_frac);
}

struct SweepEntry {
    int layer = 0;
    double mean_score = 0.0;
    double mean_degeneration = 0.0;
    std::vector<nlohmann::ordered_json> samples;  // verbatim dumps per prompt
};

struct SweepReport {
    double strength = kDefaultStrength;
    std::vector<SweepEntry> entries;  // ascending by layer
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

// Applies the same-strength intervention at each requested depth, one
// direction per layer, and charts score against output degeneration.
// Prompts share seeds across layers so entries are paired.
inline SweepReport layer_sweep(const Model& model, const std::vector<std::string>& prompts,
                               const std::map<int, SteeringDirection>& direction_family,
                               double strength, const std::vector<int>& layers,
                               const GenerationConfig& config, int jobs = 1,
                               bool allow_fingerprint_mismatch = false) {
    SweepReport report;
    report.strength = strength;
    if (layers.empty()) return report;
    if (prompts.empty()) throw EmptyCorpusError("no sweep prompts");

    std::vector<int> ordered = layers;
    std::sort(ordered.begin(), ordered.end());
    for (int layer : ordered) {
        if (!direction_family.count(layer)) {
            throw ConfigError("no direction for sweep layer " + std::to_string(layer));
        }
    }

    for (int layer : ordered) {
        const SteeringDirection& dir = direction_family.at(layer);
        SweepEntry entry;
        entry.layer = layer;
        const size_t n = prompts.size();
        std::vector<double> scores(n), degen(n);
        std::vector<nlohmann::ordered_json> samples(n);
        detail::parallel_for(n, jobs, [&](size_t i) {
            GenerationConfig item_config = config;
            item_config.seed = derive_seed(config.seed, i);
            GenerationTrace trace =
                steer_generate(model, ByteTokenizer::tokenize(prompts[i]), dir, strength,
                               item_config, HookPositions::all, allow_fingerprint_mismatch);
            scores[i] = score_trace(trace, dir).aggregate;
            degen[i] = degeneration_metric(trace.generated);
            nlohmann::ordered_json s;
            s["prompt"] = prompts[i];
            s["text"] = ByteTokenizer::detokenize(trace.generated);
            s["score"] = scores[i];
            s["degeneration"] = degen[i];
            samples[i] = std::move(s);
        });
        double score_sum = 0.0, degen_sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            score_sum += scores[i];
            degen_sum += degen[i];
        }
        entry.mean_score = score_sum / static_cast<double>(n);
        entry.mean_degeneration = degen_sum / static_cast<double>(n);
        entry.samples = std::move(samples);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

// --- line-delimited input records ---

// {"id": ..., "prompt": ..., "completion_a": ..., "completion_b": ...,
//  "label": "A"|"B"|"unknown"} with id and label optional.
inline std::vector<PairwiseItem> load_pairwise_items(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open \"" + path + "\"");
    std::vector<PairwiseItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
            PairwiseItem item;
            item.id = rec.contains("id") ? rec.at("id").get<std::string>()
                                         : "line-" + std::to_string(line_no);
            item.prompt = rec.at("prompt").get<std::string>();
            item.completion_a = rec.at("completion_a").get<std::string>();
            item.completion_b = rec.at("completion_b").get<std::string>();
            if (rec.contains("label")) {
                item.label = pairwise_label_from_string(rec.at("label").get<std::string>());
            }
            if (item.completion_a == item.completion_b) {
                throw ParseError(line_no, "completions must be distinct");
            }
            items.push_back(std::move(item));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    if (items.empty()) throw EmptyCorpusError("\"" + path + "\" has no items");
    return items;
}

// {"id": ..., "story": ...} with id optional.
inline std::vector<std::pair<std::string, std::string>> load_stories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open \"" + path + "\"");
    std::vector<std::pair<std::string, std::string>> stories;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            nlohmann::json rec = nlohmann::json::parse(line);
            std::string id = rec.contains("id") ? rec.at("id").get<std::string>()
                                                : "line-" + std::to_string(line_no);
            stories.emplace_back(std::move(id), rec.at("story").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    if (stories.empty()) throw EmptyCorpusError("\"" + path + "\" has no stories");
    return stories;
}

// --- CSV export (the three figure-style tables plus the sweep) ---

namespace detail {

inline std::string csv_num(double v) { return nlohmann::json(v).dump(); }

}  // namespace detail

inline std::string to_csv(const EvalReport& report) {
    std::string out;
    if (report.kind == "pairwise") {
        out += "metric,value\n";
        out += "accuracy," + detail::csv_num(report.accuracy) + "\n";
        out += "correct," + std::to_string(report.correct) + "\n";
        out += "ties," + std::to_string(report.ties) + "\n";
        out += "n," + std::to_string(report.n) + "\n";
        return out;
    }
    out += "condition,mean,ci_low,ci_high,n\n";
    for (const auto& c : report.conditions) {
        out += c.name + "," + detail::csv_num(c.mean) + "," + detail::csv_num(c.ci_low) + "," +
               detail::csv_num(c.ci_high) + "," + std::to_string(c.n) + "\n";
    }
    return out;
}

inline std::string to_csv(const SweepReport& report) {
    std::string out = "layer,mean_score,mean_degeneration\n";
    for (const auto& e : report.entries) {
        out += std::to_string(e.layer) + "," + detail::csv_num(e.mean_score) + "," +
               detail::csv_num(e.mean_degeneration) + "\n";
    }
    return out;
}

}  // namespace steerkit
