#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "steerkit/collect.hpp"
#include "steerkit/corpus.hpp"
#include "steerkit/evaluation.hpp"
#include "steerkit/model.hpp"
#include "steerkit/scoring.hpp"
#include "steerkit/tokenizer.hpp"

using namespace steerkit;

namespace {

ModelSpec tiny_spec() {
    ModelSpec s;
    s.d_model = 32;
    s.n_layers = 2;
    s.n_heads = 2;
    s.d_ff = 64;
    s.vocab_size = 257;
    s.max_ctx = 96;
    return s;
}

const Model& tiny_model() {
    static Model model = Model::build_test(tiny_spec());
    return model;
}

const char* kThings[] = {"a dragon hoard", "a ghost ship",    "a singing comet",
                         "a clockwork owl", "a drowned city",  "a talking storm",
                         "a mirror maze",   "a bone orchard",  "a glass volcano",
                         "a midnight fair", "a paper army",    "a frozen song",
                         "a hollow moon",   "a wandering door", "a sleeping giant",
                         "a burning library"};

ContrastiveCorpus synthetic_corpus(int n_pairs, int offset, Split split) {
    ContrastiveCorpus corpus;
    corpus.split = split;
    for (int i = 0; i < n_pairs; ++i) {
        const std::string thing = kThings[(offset + i) % 16];
        ContrastivePair pair;
        pair.id = "pair-" + std::to_string(offset + i);
        pair.creative = "Write a wild, strange tale about " + thing + "!";
        pair.uncreative = "Write a plain routine report about " + thing + ".";
        corpus.pairs.push_back(std::move(pair));
    }
    corpus.corpus_id = compute_corpus_id(corpus.pairs);
    return corpus;
}

SteeringDirection validation_direction(int layer = 1) {
    static std::map<int, SteeringDirection> cache;
    auto it = cache.find(layer);
    if (it == cache.end()) {
        ContrastiveCorpus corpus = synthetic_corpus(8, 0, Split::validation);
        it = cache.emplace(layer, extract_from_corpus(tiny_model(), corpus, layer,
                                                      Pooling::last_token))
                 .first;
    }
    return it->second;
}

}  // namespace

TEST_CASE("confidence interval matches the documented formula") {
    auto stats = detail::condition_stats("x", {1.0, 2.0, 3.0, 4.0});
    const double mean = 2.5;
    const double sd = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0);
    const double half = 1.96 * sd / 2.0;
    REQUIRE(stats.mean == Catch::Approx(mean));
    REQUIRE(stats.ci_low == Catch::Approx(mean - half));
    REQUIRE(stats.ci_high == Catch::Approx(mean + half));
    REQUIRE(stats.n == 4);

    auto single = detail::condition_stats("one", {0.7});
    REQUIRE(single.ci_low == single.mean);
    REQUIRE(single.ci_high == single.mean);
}

TEST_CASE("separation study: zero strength makes induced equal baseline") {
    ContrastiveCorpus eval = synthetic_corpus(4, 8, Split::test);
    SteeringDirection dir = validation_direction();

    GenerationConfig config;
    config.max_new_tokens = 6;
    config.seed = 5;
    EvalReport report = run_separation_study(tiny_model(), eval, dir, 0.0, config);

    REQUIRE(report.n == 4);
    REQUIRE(report.conditions.size() == 3);
    REQUIRE(report.conditions[0].name == "baseline");
    REQUIRE(report.conditions[1].name == "induced");
    REQUIRE(report.conditions[0].mean == report.conditions[1].mean);
    for (const auto& item : report.items) {
        REQUIRE(item.at("baseline").at("aggregate").get<double>() ==
                item.at("induced").at("aggregate").get<double>());
    }
}

TEST_CASE("separation study: means recompute from the per-item records") {
    ContrastiveCorpus eval = synthetic_corpus(2, 8, Split::test);
    SteeringDirection dir = validation_direction();

    GenerationConfig config;
    config.max_new_tokens = 5;
    config.seed = 11;
    EvalReport report = run_separation_study(tiny_model(), eval, dir, 3.0, config);

    REQUIRE(report.n == 2);
    for (const auto& cond : report.conditions) {
        double sum = 0.0;
        for (const auto& item : report.items) {
            sum += item.at(cond.name).at("aggregate").get<double>();
        }
        REQUIRE(cond.mean == sum / 2.0);
    }
}

TEST_CASE("separation study: induced and creative exceed baseline") {
    ContrastiveCorpus eval = synthetic_corpus(12, 8, Split::test);
    SteeringDirection dir = validation_direction();

    GenerationConfig config;
    config.max_new_tokens = 4;
    config.seed = 21;
    EvalReport report = run_separation_study(tiny_model(), eval, dir, 3.0, config);

    const double baseline = report.conditions[0].mean;
    const double induced = report.conditions[1].mean;
    const double creative = report.conditions[2].mean;
    REQUIRE(induced > baseline);
    REQUIRE(creative > baseline);
}

TEST_CASE("separation study is reproducible") {
    ContrastiveCorpus eval = synthetic_corpus(3, 8, Split::test);
    SteeringDirection dir = validation_direction();
    GenerationConfig config;
    config.max_new_tokens = 4;
    config.seed = 9;
    EvalReport a = run_separation_study(tiny_model(), eval, dir, 2.0, config);
    EvalReport b = run_separation_study(tiny_model(), eval, dir, 2.0, config, /*jobs=*/3);
    REQUIRE(a.items.size() == b.items.size());
    for (size_t i = 0; i < a.items.size(); ++i) {
        REQUIRE(a.items[i].dump() == b.items[i].dump());
    }
}

TEST_CASE("split hygiene is enforced") {
    SteeringDirection dir = validation_direction();

    // the same content ingested as the validation split: same corpus_id + split
    ContrastiveCorpus same = synthetic_corpus(8, 0, Split::validation);
    GenerationConfig config;
    config.max_new_tokens = 4;
    REQUIRE_THROWS_AS(run_separation_study(tiny_model(), same, dir, 3.0, config),
                      SplitLeakageError);
    REQUIRE_NOTHROW(run_separation_study(tiny_model(), same, dir, 3.0, config, 1,
                                         /*allow_split_leakage=*/true));

    // same content under a different split label is fine
    ContrastiveCorpus relabeled = synthetic_corpus(8, 0, Split::test);
    REQUIRE_NOTHROW(run_separation_study(tiny_model(), relabeled, dir, 3.0, config));

    // directions extracted from a test split are rejected outright
    ContrastiveCorpus test_corpus = synthetic_corpus(8, 4, Split::test);
    SteeringDirection test_dir =
        extract_from_corpus(tiny_model(), test_corpus, 1, Pooling::last_token);
    ContrastiveCorpus eval = synthetic_corpus(4, 12, Split::test);
    REQUIRE_THROWS_AS(run_separation_study(tiny_model(), eval, test_dir, 3.0, config),
                      SplitLeakageError);
}

TEST_CASE("pairwise decision rule picks the higher aggregate") {
    REQUIRE(predict_from_aggregates(0.8, 0.3) == PairwisePrediction::A);
    REQUIRE(predict_from_aggregates(0.3, 0.8) == PairwisePrediction::B);
    REQUIRE(predict_from_aggregates(0.5, 0.5) == PairwisePrediction::tie);
}

TEST_CASE("pairwise comparison scores and counts correctly") {
    SteeringDirection dir = validation_direction();

    std::vector<PairwiseItem> items;
    // completion texts drawn from the two synthetic populations
    items.push_back({"i0", "Continue the story:", "A wild, strange tale of a ghost ship!",
                     "A plain routine report regarding inventory.", PairwiseLabel::A});
    items.push_back({"i1", "Continue the story:", "A plain routine report regarding inventory.",
                     "A wild, strange tale of a ghost ship!", PairwiseLabel::B});
    items.push_back({"i2", "Continue the story:", "completely unlabeled text",
                     "another unlabeled text", PairwiseLabel::unknown});

    EvalReport report = pairwise_compare_by_score(items, tiny_model(), dir);
    REQUIRE(report.n == 2);  // the unknown item is excluded from accuracy
    REQUIRE(report.items.size() == 3);
    REQUIRE(report.accuracy * report.n == static_cast<double>(report.correct));

    // symmetry: swapping completions and labels leaves accuracy unchanged
    std::vector<PairwiseItem> swapped;
    for (auto item : items) {
        std::swap(item.completion_a, item.completion_b);
        if (item.label == PairwiseLabel::A) item.label = PairwiseLabel::B;
        else if (item.label == PairwiseLabel::B) item.label = PairwiseLabel::A;
        swapped.push_back(std::move(item));
    }
    EvalReport mirrored = pairwise_compare_by_score(swapped, tiny_model(), dir);
    REQUIRE(mirrored.accuracy == report.accuracy);
    REQUIRE(mirrored.correct == report.correct);

    // the labeled pair above is scored consistently in both orders
    const auto& first = report.items[0];
    const auto& second = report.items[1];
    REQUIRE(first.at("score_a").get<double>() == second.at("score_b").get<double>());
}

TEST_CASE("pairwise rejects identical completions and empty item lists") {
    SteeringDirection dir = validation_direction();
    std::vector<PairwiseItem> items;
    items.push_back({"dup", "p", "same text", "same text", PairwiseLabel::A});
    REQUIRE_THROWS_AS(pairwise_compare_by_score(items, tiny_model(), dir), DataError);
    REQUIRE_THROWS_AS(pairwise_compare_by_score({}, tiny_model(), dir), EmptyCorpusError);
}

TEST_CASE("rating parse takes the first digit") {
    REQUIRE(parse_rating("7 out of 10") == 7);
    REQUIRE(parse_rating("I'd say 9. Definitely.") == 9);
    REQUIRE(parse_rating("10") == 1);  // first-digit quirk keeps the 0-9 scale
    REQUIRE_THROWS_AS(parse_rating("excellent!"), RatingParseError);
    REQUIRE_THROWS_AS(parse_rating(""), RatingParseError);
}

TEST_CASE("rating template must carry the story slot") {
    REQUIRE_THROWS_AS(render_rating_prompt("s", "no slot here"), ConfigError);
    REQUIRE(render_rating_prompt("tale", "Rate: {story} now") == "Rate: tale now");
}

TEST_CASE("rating harness runs and aggregates parse failures per item") {
    std::vector<std::pair<std::string, std::string>> stories = {
        {"s0", "A short story."},
        {"s1", "Another short story."},
        {"s2", "A third one."},
        {"s3", "Last story."},
    };
    EvalReport report = run_rating_eval(tiny_model(), stories, kDefaultRatingTemplate, 3);
    REQUIRE(report.kind == "rating");
    REQUIRE(report.items.size() == 4);
    // on the byte-level test model most outputs carry no digit; every item
    // must still be recorded as either a rating or a parse error
    int rated = 0, failed = 0;
    for (const auto& item : report.items) {
        if (item.contains("rating")) {
            ++rated;
            REQUIRE(item.at("rating").get<int>() >= 0);
            REQUIRE(item.at("rating").get<int>() <= 9);
        } else {
            ++failed;
            REQUIRE(item.contains("error"));
        }
    }
    REQUIRE(rated + failed == 4);
    REQUIRE(report.n == rated);
}

TEST_CASE("degeneration metric flags repeated-bigram output") {
    // "12\n" repeated: tokens cycle with period 3
    std::string cycle;
    for (int i = 0; i < 20; ++i) cycle += "12\n";
    TokenSequence tokens = ByteTokenizer::encode_bytes(cycle);

    // independent counter: distinct bigrams in a period-3 cycle
    std::set<std::pair<TokenId, TokenId>> distinct;
    for (size_t i = 1; i < tokens.size(); ++i) distinct.insert({tokens[i - 1], tokens[i]});
    REQUIRE(distinct.size() == 3);
    const double expected =
        static_cast<double>(tokens.size() - 1 - distinct.size()) /
        static_cast<double>(tokens.size() - 1);

    REQUIRE(degeneration_metric(tokens) == Catch::Approx(expected));
    REQUIRE(degeneration_metric(tokens) > 0.5);
}

TEST_CASE("degeneration metric flags non-printable output") {
    TokenSequence raw = {1, 2, 3, 200, 210, 220, 65};  // mostly non-printable, no repeats
    REQUIRE(degeneration_metric(raw) == Catch::Approx(6.0 / 7.0));
    REQUIRE(degeneration_metric({}) == 0.0);
    REQUIRE(degeneration_metric({65}) == 0.0);
    REQUIRE(degeneration_metric({65, 66}) == 0.0);
}

TEST_CASE("layer sweep: empty layer list gives an empty report") {
    SweepReport report = layer_sweep(tiny_model(), {"prompt"}, {}, 3.0, {}, GenerationConfig{});
    REQUIRE(report.entries.empty());
}

TEST_CASE("layer sweep requires a direction per layer") {
    std::map<int, SteeringDirection> family;
    family.emplace(0, validation_direction(0));
    GenerationConfig config;
    config.max_new_tokens = 4;
    REQUIRE_THROWS_AS(
        layer_sweep(tiny_model(), {"prompt"}, family, 3.0, {0, 1}, config), ConfigError);
}

TEST_CASE("layer sweep orders entries and dumps samples") {
    std::map<int, SteeringDirection> family;
    family.emplace(0, validation_direction(0));
    family.emplace(1, validation_direction(1));

    GenerationConfig config;
    config.max_new_tokens = 12;
    config.seed = 2;
    SweepReport report = layer_sweep(tiny_model(), {"tell me something", "another prompt"},
                                     family, 3.0, {1, 0}, config);
    REQUIRE(report.entries.size() == 2);
    REQUIRE(report.entries[0].layer == 0);  // ascending regardless of request order
    REQUIRE(report.entries[1].layer == 1);
    for (const auto& e : report.entries) {
        REQUIRE(e.samples.size() == 2);
        for (const auto& s : e.samples) {
            REQUIRE(s.contains("text"));
            REQUIRE(s.contains("degeneration"));
        }
    }
}

TEST_CASE("layer-0 intervention degenerates at least as much as last-layer") {
    std::map<int, SteeringDirection> family;
    family.emplace(0, validation_direction(0));
    family.emplace(1, validation_direction(1));

    GenerationConfig config;
    config.max_new_tokens = 48;
    config.top_p = 1e-9;  // deterministic dump mode
    config.seed = 0;
    std::vector<std::string> prompts;
    for (int i = 8; i < 14; ++i) {
        prompts.push_back("Write a plain routine report about " + std::string(kThings[i]) + ".");
    }
    SweepReport report = layer_sweep(tiny_model(), prompts, family, 3.0, {0, 1}, config);
    REQUIRE(report.entries[0].mean_degeneration >= report.entries[1].mean_degeneration);
}

TEST_CASE("csv export covers the report kinds") {
    EvalReport pairwise;
    pairwise.kind = "pairwise";
    pairwise.n = 4;
    pairwise.correct = 3;
    pairwise.ties = 1;
    pairwise.accuracy = 0.75;
    const std::string csv = to_csv(pairwise);
    REQUIRE(csv.find("accuracy,0.75") != std::string::npos);
    REQUIRE(csv.find("correct,3") != std::string::npos);

    EvalReport sep;
    sep.kind = "separation";
    sep.conditions.push_back({"baseline", 0.25, 0.2, 0.3, 8});
    const std::string csv2 = to_csv(sep);
    REQUIRE(csv2.find("condition,mean,ci_low,ci_high,n") == 0);
    REQUIRE(csv2.find("baseline,0.25,0.2,0.3,8") != std::string::npos);

    SweepReport sweep;
    sweep.entries.push_back({0, 0.5, 0.75, {}});
    REQUIRE(to_csv(sweep).find("0,0.5,0.75") != std::string::npos);
}
