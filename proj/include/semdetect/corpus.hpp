#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "semdetect/common.hpp"

namespace semdetect {

enum class Label { Human = 0, Refined = 1, Ai = 2, Unlabeled = 3 };

inline std::string label_name(Label l) {
    switch (l) {
        case Label::Human:
            return "human";
        case Label::Refined:
            return "refined";
        case Label::Ai:
            return "ai";
        default:
            return "null";
    }
}

inline Label parse_label(const nlohmann::json& j) {
    if (j.is_null()) return Label::Unlabeled;
    std::string s = to_lower(j.get<std::string>());
    if (s == "human") return Label::Human;
    if (s == "refined") return Label::Refined;
    if (s == "ai") return Label::Ai;
    throw ValidationError("unknown label: " + s);
}

struct ReviewRecord {
    std::string id;
    std::string paper_id;
    std::string venue;
    int year = 0;
    int rating = 0;
    Label label = Label::Unlabeled;
    std::string text;
    std::optional<std::string> generator_model;
    std::optional<std::string> source_review_id;

    bool operator==(const ReviewRecord&) const = default;
};

struct PaperRecord {
    std::string paper_id;
    std::string venue;
    int year = 0;
    std::string title;
    std::string body_text;
    std::vector<int> human_ratings;

    bool operator==(const PaperRecord&) const = default;
};

struct CorpusSplit {
    std::set<std::string> train_paper_ids;
    std::set<std::string> test_paper_ids;
    uint64_t seed = 0;
};

inline void validate_record(const ReviewRecord& r) {
    if (r.id.empty()) throw ValidationError("review with empty id");
    if (r.paper_id.empty()) throw ValidationError("review " + r.id + ": empty paper_id");
    if (trim(r.text).empty()) throw ValidationError("review " + r.id + ": empty text");
    if (r.label == Label::Refined && !r.source_review_id)
        throw ValidationError("review " + r.id + ": refined label requires source_review_id");
    if (r.label == Label::Ai && !r.generator_model)
        throw ValidationError("review " + r.id + ": ai label requires generator_model");
}

inline void validate_record(const PaperRecord& p) {
    if (p.paper_id.empty()) throw ValidationError("paper with empty paper_id");
}

namespace detail {

inline std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

inline ReviewRecord review_from_json(const nlohmann::json& j) {
    ReviewRecord r;
    r.id = j.at("id").get<std::string>();
    r.paper_id = j.at("paper_id").get<std::string>();
    r.venue = j.value("venue", std::string{});
    r.year = j.value("year", 0);
    r.rating = j.value("rating", 0);
    r.label = parse_label(j.value("label", nlohmann::json{}));
    r.text = j.at("text").get<std::string>();
    r.generator_model = opt_string(j, "generator_model");
    r.source_review_id = opt_string(j, "source_review_id");
    return r;
}

inline nlohmann::json review_to_json(const ReviewRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["paper_id"] = r.paper_id;
    j["venue"] = r.venue;
    j["year"] = r.year;
    j["rating"] = r.rating;
    j["label"] = r.label == Label::Unlabeled ? nlohmann::json{} : nlohmann::json(label_name(r.label));
    j["text"] = r.text;
    j["generator_model"] = r.generator_model ? nlohmann::json(*r.generator_model) : nlohmann::json{};
    j["source_review_id"] =
        r.source_review_id ? nlohmann::json(*r.source_review_id) : nlohmann::json{};
    return j;
}

inline PaperRecord paper_from_json(const nlohmann::json& j) {
    PaperRecord p;
    p.paper_id = j.at("paper_id").get<std::string>();
    p.venue = j.value("venue", std::string{});
    p.year = j.value("year", 0);
    p.title = j.value("title", std::string{});
    p.body_text = j.at("body_text").get<std::string>();
    p.human_ratings = j.value("human_ratings", std::vector<int>{});
    return p;
}

inline nlohmann::json paper_to_json(const PaperRecord& p) {
    nlohmann::json j;
    j["paper_id"] = p.paper_id;
    j["venue"] = p.venue;
    j["year"] = p.year;
    j["title"] = p.title;
    j["body_text"] = p.body_text;
    j["human_ratings"] = p.human_ratings;
    return j;
}

}  // namespace detail

struct Corpus {
    std::vector<PaperRecord> papers;
    std::vector<ReviewRecord> reviews;
    // Claim-set records travel in the same file, keyed by review_id; the
    // claims module owns their shape, so they stay as raw JSON here.
    std::vector<nlohmann::json> claim_records;
};

// Record kind on a corpus line is distinguished by the presence of body_text.
inline Corpus load_corpus(std::istream& in, const std::string& origin = "<stream>") {
    Corpus c;
    std::set<std::string> review_ids;
    std::set<std::string> paper_ids;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(origin + ":" + std::to_string(lineno) + ": malformed record: " +
                             e.what());
        }
        try {
            if (j.contains("claims")) {
                if (!j.contains("review_id"))
                    throw ValidationError("claim record without review_id");
                c.claim_records.push_back(std::move(j));
            } else if (j.contains("body_text")) {
                PaperRecord p = detail::paper_from_json(j);
                validate_record(p);
                if (!paper_ids.insert(p.paper_id).second)
                    throw ValidationError("duplicate paper_id " + p.paper_id);
                c.papers.push_back(std::move(p));
            } else {
                ReviewRecord r = detail::review_from_json(j);
                validate_record(r);
                if (!review_ids.insert(r.id).second)
                    throw ValidationError("duplicate review id " + r.id);
                c.reviews.push_back(std::move(r));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return c;
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    return load_corpus(in, path);
}

inline void save_corpus(std::ostream& out, const Corpus& c) {
    for (const auto& p : c.papers) out << detail::paper_to_json(p).dump() << '\n';
    for (const auto& r : c.reviews) out << detail::review_to_json(r).dump() << '\n';
    for (const auto& j : c.claim_records) out << j.dump() << '\n';
}

inline void save_corpus(const std::string& path, const Corpus& c) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    save_corpus(out, c);
}

// Paper-level split: every review of a paper lands wholly on one side.
// Papers are shuffled under the seed, then assigned greedily so each side's
// class proportions track the global ones (soft stratification).
inline CorpusSplit split_paper_level(const std::vector<ReviewRecord>& reviews, double fraction,
                                     uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DataError("split fraction must lie in (0,1)");
    // Per-paper class counts, in first-seen order for determinism.
    std::vector<std::string> order;
    std::map<std::string, std::array<size_t, 3>> counts;
    for (const auto& r : reviews) {
        if (r.paper_id.empty()) throw DataError("review " + r.id + " has no paper_id");
        auto [it, fresh] = counts.try_emplace(r.paper_id, std::array<size_t, 3>{0, 0, 0});
        if (fresh) order.push_back(r.paper_id);
        if (r.label != Label::Unlabeled) it->second[static_cast<size_t>(r.label)]++;
    }
    const size_t n_papers = order.size();
    if (n_papers < 2)
        throw DataError("paper-level split needs at least 2 papers, got " +
                        std::to_string(n_papers));
    size_t n_train = static_cast<size_t>(std::lround(fraction * static_cast<double>(n_papers)));
    n_train = std::clamp<size_t>(n_train, 1, n_papers - 1);
    const size_t n_test = n_papers - n_train;

    std::array<double, 3> global{0, 0, 0};
    for (const auto& [id, c] : counts)
        for (size_t k = 0; k < 3; ++k) global[k] += static_cast<double>(c[k]);

    DetRng rng(seed);
    std::sort(order.begin(), order.end());
    rng.shuffle(order);

    // Deviation of a side's class mix from the global mix, in proportion units.
    auto deviation = [&](const std::array<double, 3>& side, double side_total) {
        if (side_total == 0) return 0.0;
        double g_total = global[0] + global[1] + global[2];
        if (g_total == 0) return 0.0;
        double d = 0.0;
        for (size_t k = 0; k < 3; ++k)
            d += std::abs(side[k] / side_total - global[k] / g_total);
        return d;
    };

    CorpusSplit split;
    split.seed = seed;
    std::array<double, 3> train_c{0, 0, 0}, test_c{0, 0, 0};
    double train_n = 0, test_n = 0;
    for (const auto& pid : order) {
        const auto& pc = counts[pid];
        std::array<double, 3> as_train = train_c, as_test = test_c;
        double pn = 0;
        for (size_t k = 0; k < 3; ++k) {
            as_train[k] += static_cast<double>(pc[k]);
            as_test[k] += static_cast<double>(pc[k]);
            pn += static_cast<double>(pc[k]);
        }
        bool train_full = split.train_paper_ids.size() >= n_train;
        bool test_full = split.test_paper_ids.size() >= n_test;
        bool to_train;
        if (train_full) {
            to_train = false;
        } else if (test_full) {
            to_train = true;
        } else {
            double d_train = deviation(as_train, train_n + pn) + deviation(test_c, test_n);
            double d_test = deviation(train_c, train_n) + deviation(as_test, test_n + pn);
            to_train = d_train <= d_test;
        }
        if (to_train) {
            split.train_paper_ids.insert(pid);
            train_c = as_train;
            train_n += pn;
        } else {
            split.test_paper_ids.insert(pid);
            test_c = as_test;
            test_n += pn;
        }
    }
    return split;
}

}  // namespace semdetect
