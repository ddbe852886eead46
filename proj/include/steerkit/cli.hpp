#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "steerkit/checkpoint.hpp"
#include "steerkit/collect.hpp"
#include "steerkit/config.hpp"
#include "steerkit/corpus.hpp"
#include "steerkit/direction.hpp"
#include "steerkit/engine.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/evaluation.hpp"
#include "steerkit/model.hpp"
#include "steerkit/scoring.hpp"
#include "steerkit/steering.hpp"
#include "steerkit/tokenizer.hpp"

namespace steerkit::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Exit codes: 0 success, 2 config error, 3 data error, 4 model error.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;

namespace detail {

// --- trace files ---
//
//   {"schema":"steerkit-trace","version":1,"model_fingerprint":...,
//    "capture_layer":L,"prompt":{"text":...,"tokens":[...]},
//    "generated":{"tokens":[...],"text":...},"config":{...},
//    "intervention":...,"activations":[[f32...] x (T+1)]}

inline ordered_json trace_to_json(const GenerationTrace& trace, const std::string& prompt_text) {
    ordered_json j;
    j["schema"] = "steerkit-trace";
    j["version"] = 1;
    j["model_fingerprint"] = trace.model_fingerprint;
    j["capture_layer"] = trace.capture_layer();
    j["prompt"]["text"] = prompt_text;
    j["prompt"]["tokens"] = trace.prompt;
    j["generated"]["tokens"] = trace.generated;
    j["generated"]["text"] = ByteTokenizer::detokenize(trace.generated);
    j["config"]["temperature"] = trace.config.temperature;
    j["config"]["top_p"] = trace.config.top_p;
    j["config"]["max_new_tokens"] = trace.config.max_new_tokens;
    j["config"]["seed"] = trace.config.seed;
    j["config"]["stop_on_eos"] = trace.config.stop_on_eos;
    j["intervention"] = trace.intervention;
    ordered_json acts = ordered_json::array();
    for (const auto& a : trace.activations) {
        acts.push_back(a.values);
    }
    j["activations"] = std::move(acts);
    return j;
}

inline GenerationTrace trace_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open trace \"" + path + "\"");
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("schema").get<std::string>() != "steerkit-trace") {
            throw FormatError("\"" + path + "\" is not a trace file");
        }
        GenerationTrace trace;
        trace.model_fingerprint = j.at("model_fingerprint").get<std::string>();
        trace.prompt = j.at("prompt").at("tokens").get<TokenSequence>();
        trace.generated = j.at("generated").at("tokens").get<TokenSequence>();
        const int layer = j.at("capture_layer").get<int>();
        int position = static_cast<int>(trace.prompt.size()) - 1;
        for (const auto& arr : j.at("activations")) {
            ActivationVector av;
            av.values = arr.get<std::vector<float>>();
            av.layer = layer;
            av.position = position++;
            trace.activations.push_back(std::move(av));
        }
        return trace;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad trace file \"" + path + "\": " + e.what());
    }
}

inline ordered_json score_to_json(const ScoreReport& report) {
    ordered_json j;
    j["schema"] = "steerkit-score";
    j["version"] = 1;
    j["aggregate"] = report.aggregate;
    j["per_token"] = report.per_token;
    j["T"] = report.T;
    j["degenerate_tokens"] = report.degenerate_tokens;
    j["direction"]["layer"] = report.direction_meta.layer;
    j["direction"]["pooling"] = to_string(report.direction_meta.pooling);
    j["direction"]["model_fingerprint"] = report.direction_meta.model_fingerprint;
    j["direction"]["corpus_id"] = report.direction_meta.corpus_id;
    j["direction"]["corpus_split"] = report.direction_meta.corpus_split;
    j["direction"]["n_pairs"] = report.direction_meta.n_pairs;
    return j;
}

inline ordered_json eval_report_to_json(const EvalReport& report) {
    ordered_json j;
    j["schema"] = "steerkit-eval-report";
    j["version"] = 1;
    j["kind"] = report.kind;
    j["n"] = report.n;
    if (report.kind == "pairwise") {
        j["correct"] = report.correct;
        j["ties"] = report.ties;
        j["accuracy"] = report.accuracy;
    }
    ordered_json conds = ordered_json::array();
    for (const auto& c : report.conditions) {
        ordered_json cj;
        cj["name"] = c.name;
        cj["mean"] = c.mean;
        cj["ci_low"] = c.ci_low;
        cj["ci_high"] = c.ci_high;
        cj["n"] = c.n;
        conds.push_back(std::move(cj));
    }
    j["conditions"] = std::move(conds);
    j["config"] = report.config;
    return j;
}

inline void write_json(const std::string& path, const ordered_json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline void write_jsonl(const std::string& path, const std::vector<ordered_json>& items) {
    std::string out;
    for (const auto& item : items) out += item.dump() + "\n";
    write_text_file(path, out);
}

inline std::string out_path(const RunConfig& config, const std::string& name) {
    fs::create_directories(config.out_dir);
    return (fs::path(config.out_dir) / name).string();
}

inline std::vector<int> parse_layer_list(const std::string& text) {
    std::vector<int> layers;
    size_t start = 0;
    while (start <= text.size()) {
        size_t comma = text.find(',', start);
        std::string part =
            text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!part.empty()) layers.push_back(steerkit::detail::parse_int("layers", part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (layers.empty()) throw ConfigError("empty --layers list");
    return layers;
}

}  // namespace detail

// Holds the raw values of every provided global flag, keyed by config key.
struct FlagSet {
    std::map<std::string, std::string> values;

    void set(const std::string& key, const std::string& value) { values[key] = value; }
};

struct CommandContext {
    RunConfig config;
    std::ostream& out;
    std::ostream& err;
};

// --- command implementations ---

inline int cmd_extract(CommandContext& ctx, const std::string& corpus_path,
                       const std::string& split) {
    Model model = resolve_model(ctx.config.model);
    ContrastiveCorpus corpus = ingest_corpus(corpus_path, split_from_string(split));
    SteeringDirection direction = extract_from_corpus(
        model, corpus, ctx.config.layer, pooling_from_string(ctx.config.pooling),
        ctx.config.jobs);

    const std::string dir_path = detail::out_path(ctx.config, "direction.bin");
    save_direction(direction, dir_path);

    ordered_json args;
    args["corpus"] = corpus_path;
    args["split"] = split;
    ordered_json inputs;
    inputs["corpus"]["path"] = corpus_path;
    inputs["corpus"]["hash"] = hash_file(corpus_path);
    inputs["corpus"]["corpus_id"] = corpus.corpus_id;
    detail::write_json(detail::out_path(ctx.config, "manifest.json"),
                       make_manifest("extract", args, ctx.config, inputs, model.fingerprint()));

    ctx.out << "wrote " << dir_path << " (layer " << direction.layer() << ", dim "
            << direction.dim() << ", " << direction.meta.n_pairs << " pairs)\n";
    return kExitOk;
}

inline int cmd_generate(CommandContext& ctx, const std::string& direction_path,
                        const std::string& prompt_text, int layer_override) {
    Model model = resolve_model(ctx.config.model);

    std::vector<HookSpec> hooks;
    int capture_layer = ctx.config.layer;
    std::string intervention;
    if (!direction_path.empty()) {
        SteeringDirection direction = load_direction(direction_path);
        if (layer_override >= 0) direction.meta.layer = layer_override;
        check_fingerprint(direction, model.fingerprint(), ctx.config.allow_fingerprint_mismatch);
        capture_layer = direction.layer();
        hooks.push_back(additive_hook(direction, ctx.config.lambda));
        intervention = "additive layer=" + std::to_string(capture_layer) +
                       " strength=" + std::to_string(ctx.config.lambda);
    }

    GenerationTrace trace = generate(model, ByteTokenizer::tokenize(prompt_text),
                                     ctx.config.generation(), hooks, capture_layer,
                                     hook_positions_from_string(ctx.config.positions));
    trace.intervention = intervention;

    detail::write_json(detail::out_path(ctx.config, "trace.json"),
                       detail::trace_to_json(trace, prompt_text));
    write_text_file(detail::out_path(ctx.config, "gen.txt"),
                    ByteTokenizer::detokenize(trace.generated));

    ordered_json args;
    args["direction"] = direction_path;
    args["prompt"] = prompt_text;
    args["layer_override"] = layer_override;
    ordered_json inputs = ordered_json::object();
    if (!direction_path.empty()) {
        inputs["direction"]["path"] = direction_path;
        inputs["direction"]["hash"] = hash_file(direction_path);
    }
    detail::write_json(detail::out_path(ctx.config, "manifest.json"),
                       make_manifest("generate", args, ctx.config, inputs, model.fingerprint()));

    ctx.out << "generated " << trace.generated.size() << " tokens -> "
            << detail::out_path(ctx.config, "gen.txt") << "\n";
    return kExitOk;
}

inline int cmd_score(CommandContext& ctx, const std::string& direction_path,
                     const std::string& trace_path, const std::string& prompt_text,
                     const std::string& continuation) {
    SteeringDirection direction = load_direction(direction_path);

    ScoreReport report;
    ordered_json args;
    args["direction"] = direction_path;
    ordered_json inputs;
    inputs["direction"]["path"] = direction_path;
    inputs["direction"]["hash"] = hash_file(direction_path);
    std::string model_fingerprint = direction.meta.model_fingerprint;

    if (!trace_path.empty()) {
        GenerationTrace trace = detail::trace_from_json_file(trace_path);
        check_fingerprint(direction, trace.model_fingerprint,
                          ctx.config.allow_fingerprint_mismatch);
        report = score_trace(trace, direction);
        args["trace"] = trace_path;
        inputs["trace"]["path"] = trace_path;
        inputs["trace"]["hash"] = hash_file(trace_path);
        model_fingerprint = trace.model_fingerprint;
    } else {
        Model model = resolve_model(ctx.config.model);
        report = score_text(model, prompt_text, continuation, direction,
                            ctx.config.allow_fingerprint_mismatch);
        args["prompt"] = prompt_text;
        args["text"] = continuation;
        model_fingerprint = model.fingerprint();
    }

    detail::write_json(detail::out_path(ctx.config, "score.json"), detail::score_to_json(report));
    detail::write_json(detail::out_path(ctx.config, "manifest.json"),
                       make_manifest("score", args, ctx.config, inputs, model_fingerprint));

    ctx.out << "aggregate " << nlohmann::json(report.aggregate).dump() << " over T=" << report.T
            << " -> " << detail::out_path(ctx.config, "score.json") << "\n";
    return kExitOk;
}

inline int cmd_eval_separation(CommandContext& ctx, const std::string& corpus_path,
                               const std::string& split, const std::string& direction_path) {
    Model model = resolve_model(ctx.config.model);
    ContrastiveCorpus corpus = ingest_corpus(corpus_path, split_from_string(split));
    SteeringDirection direction = load_direction(direction_path);

    EvalReport report = run_separation_study(model, corpus, direction, ctx.config.lambda,
                                             ctx.config.generation(), ctx.config.jobs,
                                             ctx.config.allow_split_leakage,
                                             ctx.config.allow_fingerprint_mismatch);
    report.config = ctx.config.echo();

    detail::write_json(detail::out_path(ctx.config, "report.json"),
                       detail::eval_report_to_json(report));
    detail::write_jsonl(detail::out_path(ctx.config, "items.jsonl"), report.items);
    write_text_file(detail::out_path(ctx.config, "table.csv"), to_csv(report));

    ordered_json args;
    args["corpus"] = corpus_path;
    args["split"] = split;
    args["direction"] = direction_path;
    ordered_json inputs;
    inputs["corpus"]["path"] = corpus_path;
    inputs["corpus"]["hash"] = hash_file(corpus_path);
    inputs["corpus"]["corpus_id"] = corpus.corpus_id;
    inputs["direction"]["path"] = direction_path;
    inputs["direction"]["hash"] = hash_file(direction_path);
    detail::write_json(detail::out_path(ctx.config, "manifest.json"),
                       make_manifest("eval-separation", args, ctx.config, inputs,
                                     model.fingerprint()));

    for (const auto& c : report.conditions) {
        ctx.out << c.name << " mean " << nlohmann::json(c.mean).dump() << " [" << c.ci_low << ", "
                << c.ci_high << "]\n";
    }
    return kExitOk;
}

inline int cmd_eval_pairwise(CommandContext& ctx, const std::string& items_path,
                             const std::string& direction_path) {
    Model model = resolve_model(ctx.config.model);
    std::vector<PairwiseItem> items = load_pairwise_items(items_path);
    SteeringDirection direction = load_direction(direction_path);

    EvalReport report = pairwise_compare_by_score(items, model, direction, ctx.config.jobs,
                                                  ctx.config.allow_fingerprint_mismatch);
    report.config = ctx.config.echo();

    detail::write_json(detail::out_path(ctx.config, "report.json"),
                       detail::eval_report_to_json(report));
    detail::write_jsonl(detail::out_path(ctx.config, "items.jsonl"), report.items);
    write_text_file(detail::out_path(ctx.config, "table.csv"), to_csv(report));

    ordered_json args;
    args["items"] = items_path;
    args["direction"] = direction_path;
    ordered_json inputs;
    inputs["items"]["path"] = items_path;
    inputs["items"]["hash"] = hash_file(items_path);
    inputs["direction"]["path"] = direction_path;
    inputs["direction"]["hash"] = hash_file(direction_path);
    detail::write_json(detail::out_path(ctx.config, "manifest.json"),
                       make_manifest("eval-pairwise", args, ctx.config, inputs,
                                     model.fingerprint()));

    ctx.out << "accuracy " << report.correct << "/" << report.n << " ("
            << nlohmann::json(report.accuracy).dump() << "), ties " << report.ties << "\n";
    return kExitOk;
}

inline int cmd_eval_rating(CommandContext& ctx, const std::string& stories_path,
                           const std::string& template_text) {
    Model model = resolve_model(ctx.config.model);
    auto stories = load_stories(stories_path);

    EvalReport report =
        run_rating_eval(model, stories, template_text, ctx.config.seed, ctx.config.jobs);
    report.config = ctx.config.echo();

    detail::write_json(detail::out_path(ctx.config, "report.json"),
                       detail::eval_report_to_json(report));
    detail::write_jsonl(detail::out_path(ctx.config, "items.jsonl"), report.items);
    write_text_file(detail::out_path(ctx.config, "table.csv"), to_csv(report));

    ordered_json args;
    args["stories"] = stories_path;
    args["template"] = template_text;
    ordered_json inputs;
    inputs["stories"]["path"] = stories_path;
    inputs["stories"]["hash"] = hash_file(stories_path);
    detail::write_json(detail::out_path(ctx.config, "manifest.json"),
                       make_manifest("eval-rating", args, ctx.config, inputs,
                                     model.fingerprint()));

    const auto& stats = report.conditions.front();
    ctx.out << "parsed " << report.n << "/" << report.items.size() << " ratings, mean "
            << nlohmann::json(stats.mean).dump() << "\n";
    return kExitOk;
}

inline int cmd_sweep(CommandContext& ctx, const std::string& corpus_path, const std::string& split,
                     const std::string& layers_text, int sample) {
    Model model = resolve_model(ctx.config.model);
    ContrastiveCorpus corpus = ingest_corpus(corpus_path, split_from_string(split));
    std::vector<int> layers = detail::parse_layer_list(layers_text);

    std::map<int, SteeringDirection> family;
    for (int layer : layers) {
        family.emplace(layer, extract_from_corpus(model, corpus, layer,
                                                  pooling_from_string(ctx.config.pooling),
                                                  ctx.config.jobs));
    }

    std::vector<std::string> prompts;
    const int n = std::min<int>(sample, static_cast<int>(corpus.pairs.size()));
    for (int i = 0; i < n; ++i) prompts.push_back(corpus.pairs[static_cast<size_t>(i)].uncreative);

    SweepReport report = layer_sweep(model, prompts, family, ctx.config.lambda, layers,
                                     ctx.config.generation(), ctx.config.jobs);
    report.config = ctx.config.echo();

    ordered_json j;
    j["schema"] = "steerkit-sweep";
    j["version"] = 1;
    j["strength"] = report.strength;
    ordered_json entries = ordered_json::array();
    std::string dumps;
    for (const auto& e : report.entries) {
        ordered_json ej;
        ej["layer"] = e.layer;
        ej["mean_score"] = e.mean_score;
        ej["mean_degeneration"] = e.mean_degeneration;
        ej["samples"] = e.samples;
        entries.push_back(std::move(ej));
        dumps += "==== layer " + std::to_string(e.layer) + " ====\n";
        for (const auto& s : e.samples) {
            dumps += "-- prompt: " + s.at("prompt").get<std::string>() + "\n";
            dumps += s.at("text").get<std::string>() + "\n";
        }
    }
    j["entries"] = std::move(entries);
    j["config"] = report.config;

    detail::write_json(detail::out_path(ctx.config, "report.json"), j);
    write_text_file(detail::out_path(ctx.config, "table.csv"), to_csv(report));
    write_text_file(detail::out_path(ctx.config, "dumps.txt"), dumps);

    ordered_json args;
    args["corpus"] = corpus_path;
    args["split"] = split;
    args["layers"] = layers_text;
    args["sample"] = sample;
    ordered_json inputs;
    inputs["corpus"]["path"] = corpus_path;
    inputs["corpus"]["hash"] = hash_file(corpus_path);
    inputs["corpus"]["corpus_id"] = corpus.corpus_id;
    detail::write_json(detail::out_path(ctx.config, "manifest.json"),
                       make_manifest("sweep", args, ctx.config, inputs, model.fingerprint()));

    for (const auto& e : report.entries) {
        ctx.out << "layer " << e.layer << ": score "
                << nlohmann::json(e.mean_score).dump() << ", degeneration "
                << nlohmann::json(e.mean_degeneration).dump() << "\n";
    }
    return kExitOk;
}

inline int cmd_inspect(CommandContext& ctx, const std::string& direction_path) {
    SteeringDirection direction = load_direction(direction_path);
    double norm_sq = 0.0;
    for (float v : direction.vector) norm_sq += static_cast<double>(v) * v;
    ordered_json j;
    j["dim"] = direction.dim();
    j["norm"] = std::sqrt(norm_sq);
    j["layer"] = direction.meta.layer;
    j["pooling"] = to_string(direction.meta.pooling);
    j["model_fingerprint"] = direction.meta.model_fingerprint;
    j["corpus_id"] = direction.meta.corpus_id;
    j["corpus_split"] = direction.meta.corpus_split;
    j["n_pairs"] = direction.meta.n_pairs;
    ctx.out << j.dump(2) << "\n";
    return kExitOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline int cmd_rerun(const std::string& manifest_path, const std::string& out_dir,
                     std::ostream& out, std::ostream& err) {
    nlohmann::json m;
    {
        std::ifstream in(manifest_path);
        if (!in) throw ConfigError("cannot open manifest \"" + manifest_path + "\"");
        try {
            in >> m;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("bad manifest: " + std::string(e.what()));
        }
    }
    if (!m.is_object() || m.value("schema", "") != "steerkit-manifest") {
        throw ConfigError("\"" + manifest_path + "\" is not a steerkit manifest");
    }

    std::vector<std::string> args;
    const std::string command = m.at("command").get<std::string>();
    if (command == "eval-separation") {
        args = {"eval", "separation"};
    } else if (command == "eval-pairwise") {
        args = {"eval", "pairwise"};
    } else if (command == "eval-rating") {
        args = {"eval", "rating"};
    } else {
        args = {command};
    }

    for (const auto& [key, value] : m.at("args").items()) {
        if (value.is_null()) continue;
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        std::string text = value.is_string() ? value.get<std::string>() : value.dump();
        if (key == "layer_override" && text == "-1") continue;
        if (key == "direction" && text.empty()) continue;
        if (key == "trace" && text.empty()) continue;
        args.push_back(flag);
        args.push_back(text);
    }
    for (const auto& [key, value] : m.at("config").items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        std::string text = value.is_string()
                               ? value.get<std::string>()
                               : (value.is_boolean() ? (value.get<bool>() ? "true" : "false")
                                                     : value.dump());
        args.push_back(flag);
        args.push_back(text);
    }
    args.push_back("--out-dir");
    args.push_back(out_dir);
    return run(args, out, err);
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"concept-direction extraction, steering, scoring and evaluation"};
    app.require_subcommand(1);

    // global config flags; only values the user actually passed take part
    // in precedence resolution
    struct Raw {
        std::string model, pooling, positions, out_dir, config_file;
        std::string layer, lambda, temperature, top_p, max_new_tokens, seed, jobs;
        std::string stop_on_eos, allow_split_leakage, allow_fingerprint_mismatch;
    } raw;

    std::map<std::string, CLI::Option*> config_opts;
    auto add_config_opts = [&](CLI::App* cmd) {
        config_opts["model"] = cmd->add_option("--model", raw.model, "builtin:test[:dims] or checkpoint path");
        config_opts["layer"] = cmd->add_option("--layer", raw.layer, "residual tap layer");
        config_opts["lambda"] = cmd->add_option("--lambda", raw.lambda, "additive hook strength");
        config_opts["pooling"] = cmd->add_option("--pooling", raw.pooling, "last_token|mean_tokens");
        config_opts["temperature"] = cmd->add_option("--temperature", raw.temperature);
        config_opts["top_p"] = cmd->add_option("--top-p", raw.top_p);
        config_opts["max_new_tokens"] = cmd->add_option("--max-new-tokens", raw.max_new_tokens);
        config_opts["seed"] = cmd->add_option("--seed", raw.seed);
        config_opts["stop_on_eos"] = cmd->add_option("--stop-on-eos", raw.stop_on_eos, "true|false");
        config_opts["positions"] = cmd->add_option("--positions", raw.positions, "all|generated");
        config_opts["out_dir"] = cmd->add_option("--out-dir,-o", raw.out_dir, "output directory");
        config_opts["jobs"] = cmd->add_option("--jobs", raw.jobs, "concurrent sessions in batch commands");
        config_opts["allow_split_leakage"] =
            cmd->add_option("--allow-split-leakage", raw.allow_split_leakage, "true|false");
        config_opts["allow_fingerprint_mismatch"] =
            cmd->add_option("--allow-fingerprint-mismatch", raw.allow_fingerprint_mismatch, "true|false");
        cmd->add_option("--config", raw.config_file, "key-value config file (or manifest)");
    };
    add_config_opts(&app);

    // extract
    auto* extract = app.add_subcommand("extract", "extract a concept direction from a corpus");
    extract->fallthrough();
    std::string x_corpus, x_split = "validation";
    extract->add_option("--corpus", x_corpus)->required();
    extract->add_option("--split", x_split);

    // generate
    auto* gen = app.add_subcommand("generate", "sample text, optionally steered");
    gen->fallthrough();
    std::string g_direction, g_prompt, g_prompt_file;
    int g_layer_override = -1;
    gen->add_option("--direction", g_direction);
    gen->add_option("--prompt", g_prompt);
    gen->add_option("--prompt-file", g_prompt_file);
    gen->add_option("--layer-override", g_layer_override);

    // score
    auto* score = app.add_subcommand("score", "score a trace or text against a direction");
    score->fallthrough();
    std::string s_direction, s_trace, s_prompt, s_text, s_text_file;
    score->add_option("--direction", s_direction)->required();
    score->add_option("--trace", s_trace);
    score->add_option("--prompt", s_prompt);
    score->add_option("--text", s_text);
    score->add_option("--text-file", s_text_file);

    // eval
    auto* eval = app.add_subcommand("eval", "run an evaluation harness");
    eval->require_subcommand(1);
    eval->fallthrough();
    auto* sep = eval->add_subcommand("separation", "baseline/induced/creative score study");
    sep->fallthrough();
    std::string e_corpus, e_split = "test", e_direction;
    sep->add_option("--corpus", e_corpus)->required();
    sep->add_option("--split", e_split);
    sep->add_option("--direction", e_direction)->required();
    auto* pw = eval->add_subcommand("pairwise", "predict the more on-concept completion");
    pw->fallthrough();
    std::string p_items, p_direction;
    pw->add_option("--items", p_items)->required();
    pw->add_option("--direction", p_direction)->required();
    auto* rating = eval->add_subcommand("rating", "0-9 rating-prompt baseline");
    rating->fallthrough();
    std::string r_stories, r_template, r_template_file;
    rating->add_option("--stories", r_stories)->required();
    rating->add_option("--template", r_template);
    rating->add_option("--template-file", r_template_file);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "per-layer intervention sweep");
    sweep->fallthrough();
    std::string w_corpus, w_split = "validation", w_layers;
    int w_sample = 8;
    sweep->add_option("--corpus", w_corpus)->required();
    sweep->add_option("--split", w_split);
    sweep->add_option("--layers", w_layers)->required();
    sweep->add_option("--sample", w_sample);

    // inspect
    auto* inspect = app.add_subcommand("inspect", "dump direction metadata");
    inspect->fallthrough();
    std::string i_direction;
    inspect->add_option("--direction", i_direction)->required();

    // rerun
    auto* rerun = app.add_subcommand("rerun", "replay a run from its manifest");
    rerun->fallthrough();
    std::string m_manifest, m_out_dir = "out";
    rerun->add_option("--manifest", m_manifest)->required();
    rerun->add_option("--out-dir", m_out_dir);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (rerun->parsed()) {
            return cmd_rerun(m_manifest, m_out_dir, out, err);
        }

        std::map<std::string, std::string> flag_values;
        for (const auto& [key, opt] : config_opts) {
            if (opt->count() > 0) flag_values[key] = opt->results().front();
        }
        std::map<std::string, std::string> file_values;
        if (!raw.config_file.empty()) file_values = load_config_file(raw.config_file);

        CommandContext ctx{resolve_config(flag_values, file_values), out, err};

        if (extract->parsed()) return cmd_extract(ctx, x_corpus, x_split);
        if (gen->parsed()) {
            if (!g_prompt.empty() && !g_prompt_file.empty()) {
                throw ConfigError("conflicting options: --prompt and --prompt-file");
            }
            if (g_prompt.empty() && g_prompt_file.empty()) {
                throw ConfigError("one of --prompt or --prompt-file is required");
            }
            std::string prompt_text = g_prompt;
            if (!g_prompt_file.empty()) {
                prompt_text = read_text_file(g_prompt_file);
                while (!prompt_text.empty() && (prompt_text.back() == '\n' || prompt_text.back() == '\r')) {
                    prompt_text.pop_back();
                }
            }
            return cmd_generate(ctx, g_direction, prompt_text, g_layer_override);
        }
        if (score->parsed()) {
            if (!s_trace.empty() && (!s_prompt.empty() || !s_text.empty() || !s_text_file.empty())) {
                throw ConfigError("conflicting options: --trace and --prompt/--text");
            }
            if (!s_text.empty() && !s_text_file.empty()) {
                throw ConfigError("conflicting options: --text and --text-file");
            }
            if (s_trace.empty() && s_prompt.empty()) {
                throw ConfigError("either --trace or --prompt with --text/--text-file is required");
            }
            std::string continuation = s_text;
            if (!s_text_file.empty()) continuation = read_text_file(s_text_file);
            return cmd_score(ctx, s_direction, s_trace, s_prompt, continuation);
        }
        if (sep->parsed()) return cmd_eval_separation(ctx, e_corpus, e_split, e_direction);
        if (pw->parsed()) return cmd_eval_pairwise(ctx, p_items, p_direction);
        if (rating->parsed()) {
            if (!r_template.empty() && !r_template_file.empty()) {
                throw ConfigError("conflicting options: --template and --template-file");
            }
            std::string template_text = r_template;
            if (!r_template_file.empty()) template_text = read_text_file(r_template_file);
            if (template_text.empty()) template_text = kDefaultRatingTemplate;
            return cmd_eval_rating(ctx, r_stories, template_text);
        }
        if (sweep->parsed()) return cmd_sweep(ctx, w_corpus, w_split, w_layers, w_sample);
        if (inspect->parsed()) return cmd_inspect(ctx, i_direction);

        err << "config error: no command\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        err << e.what() << "\n";
        return kExitData;
    } catch (const ModelError& e) {
        err << e.what() << "\n";
        return kExitModel;
    } catch (const Error& e) {
        err << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace steerkit::cli
