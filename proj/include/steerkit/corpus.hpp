#pragma once

#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "steerkit/direction.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/rng.hpp"

namespace steerkit {

struct ContrastivePair {
    std::string id;
    std::string creative;
    std::string uncreative;
};

struct ContrastiveCorpus {
    std::vector<ContrastivePair> pairs;
    Split split = Split::validation;
    std::string corpus_id;  // content hash, independent of the split label

    size_t size() const { return pairs.size(); }
};

inline std::string compute_corpus_id(const std::vector<ContrastivePair>& pairs) {
    Fnv1a64 h;
    h.update_str("steerkit-corpus-v1");
    for (const auto& p : pairs) {
        h.update_str(p.id);
        h.update("\x1f", 1);
        h.update_str(p.creative);
        h.update("\x1f", 1);
        h.update_str(p.uncreative);
        h.update("\x1e", 1);
    }
    return h.hex();
}

// One JSON record per line: {"creative": ..., "uncreative": ..., "id": ...}
// with id optional (auto-assigned from the line number). Blank lines are
// skipped.
inline ContrastiveCorpus ingest_corpus(const std::string& path, Split split) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open \"" + path + "\"");

    ContrastiveCorpus corpus;
    corpus.split = split;
    std::unordered_set<std::string> seen_ids;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!rec.is_object() || !rec.contains("creative") || !rec.contains("uncreative")) {
            throw ParseError(line_no, "record needs \"creative\" and \"uncreative\" fields");
        }
        ContrastivePair pair;
        try {
            pair.creative = rec.at("creative").get<std::string>();
            pair.uncreative = rec.at("uncreative").get<std::string>();
            pair.id = rec.contains("id") ? rec.at("id").get<std::string>()
                                         : "line-" + std::to_string(line_no);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad field type: ") + e.what());
        }
        if (pair.creative.empty() || pair.uncreative.empty()) {
            throw ParseError(line_no, "creative and uncreative must be non-empty");
        }
        if (pair.creative == pair.uncreative) {
            throw ParseError(line_no, "creative and uncreative must differ");
        }
        if (!seen_ids.insert(pair.id).second) {
            throw DuplicateIdError(pair.id);
        }
        corpus.pairs.push_back(std::move(pair));
    }
    if (corpus.pairs.empty()) {
        throw EmptyCorpusError("\"" + path + "\" has no records");
    }
    corpus.corpus_id = compute_corpus_id(corpus.pairs);
    return corpus;
}

}  // namespace steerkit
