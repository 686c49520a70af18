// semdetect: attributes peer-review authorship (human / LLM-refined / AI)
// from claim-level semantic comparison against AI reference reviews plus
// token-statistics features.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "semdetect/claims.hpp"
#include "semdetect/corpus.hpp"
#include "semdetect/cv.hpp"
#include "semdetect/eval.hpp"
#include "semdetect/features.hpp"
#include "semdetect/gbdt.hpp"
#include "semdetect/genpipeline.hpp"
#include "semdetect/http_providers.hpp"
#include "semdetect/pipeline.hpp"
#include "semdetect/providers.hpp"
#include "semdetect/stubs.hpp"
#include "semdetect/templates.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace semdetect {

HttpTransport make_httplib_transport() {
    return [](const HttpCall& call) -> HttpResult {
        httplib::Client client(call.url);
        client.set_read_timeout(static_cast<time_t>(call.timeout_seconds));
        client.set_connection_timeout(static_cast<time_t>(call.timeout_seconds));
        httplib::Headers headers;
        if (!call.bearer_token.empty())
            headers.emplace("Authorization", "Bearer " + call.bearer_token);
        auto res = client.Post(call.path, headers, call.body, "application/json");
        if (!res) throw RetryableError("no response from " + call.url + call.path);
        return HttpResult{res->status, res->body};
    };
}

}  // namespace semdetect

namespace {

using namespace semdetect;

struct CliState {
    std::map<std::string, std::string> kv;  // merged config file + flag overrides
    fs::path out_dir = ".";
    std::optional<uint64_t> seed;

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }
    double get_real(const std::string& key, double fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stod(it->second);
    }
    int get_int(const std::string& key, int fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stoi(it->second);
    }
};

void load_config_file(CliState& state, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    auto file_kv = parse_kv_file(in, path);
    // Individual flags override the file, so file entries only fill gaps.
    for (auto& [k, v] : file_kv) state.kv.try_emplace(k, v);
}

FeatureConfig feature_config(const CliState& state) {
    FeatureConfig c;
    c.tau = state.get_real("features.tau", c.tau);
    c.k_refs = state.get_int("features.k_refs", c.k_refs);
    c.top_k = state.get_int("features.top_k", c.top_k);
    std::string mask = state.get("features.mask", "");
    if (!mask.empty()) {
        if (mask.size() != kNumFeatures)
            throw ConfigError("features.mask must be 9 characters of 0/1");
        for (size_t i = 0; i < kNumFeatures; ++i) c.feature_mask[i] = mask[i] == '1';
    }
    c.validate();
    return c;
}

std::shared_ptr<ChatProvider> make_chat(const CliState& state) {
    auto cfg = provider_config_from_kv(state.kv, "chat");
    if (cfg.backend == "stub") return std::make_shared<StubChatProvider>(cfg.stub_seed);
    return std::make_shared<HttpChatProvider>(cfg, make_httplib_transport());
}

std::shared_ptr<EmbeddingProvider> make_embed(const CliState& state) {
    auto cfg = provider_config_from_kv(state.kv, "embed");
    if (cfg.backend == "stub")
        return std::make_shared<StubEmbeddingProvider>(cfg.stub_dim, cfg.stub_seed);
    return std::make_shared<HttpEmbeddingProvider>(cfg, make_httplib_transport());
}

std::shared_ptr<TokenScorer> make_scorer(const CliState& state) {
    auto cfg = provider_config_from_kv(state.kv, "score");
    if (cfg.backend == "stub") return std::make_shared<StubTokenScorer>(cfg.stub_seed);
    return std::make_shared<HttpTokenScorer>(cfg, make_httplib_transport());
}

ProviderSet make_providers(const CliState& state) {
    return ProviderSet{make_chat(state), make_embed(state), make_scorer(state)};
}

std::vector<std::string> generator_models(const CliState& state) {
    std::string raw =
        state.get("models", "stub-model-a,stub-model-b,stub-model-c,stub-model-d");
    std::vector<std::string> models;
    size_t start = 0;
    while (start <= raw.size()) {
        size_t comma = raw.find(',', start);
        if (comma == std::string::npos) comma = raw.size();
        std::string m = trim(raw.substr(start, comma - start));
        if (!m.empty()) models.push_back(m);
        start = comma + 1;
    }
    if (models.empty()) throw ConfigError("models list is empty");
    return models;
}

PromptTemplates templates(const CliState& state) {
    std::string dir = state.get("templates_dir", "");
    return dir.empty() ? PromptTemplates{} : load_templates(dir);
}

// One command owns its output directory; a stale lock means another run is
// active (or crashed) and must be cleared by hand.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : lock_(dir / ".lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(lock_.string().c_str(), "wx");
        if (!f)
            throw DataError("output directory is locked (remove " + lock_.string() +
                            " if no other run is active)");
        std::fclose(f);
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(lock_, ec);
    }

private:
    fs::path lock_;
};

uint64_t require_seed(const CliState& state) {
    if (!state.seed) throw ConfigError("--seed is required for this command");
    return *state.seed;
}

std::map<std::string, std::vector<ReviewRecord>> ai_reviews_by_paper(const Corpus& corpus) {
    std::map<std::string, std::vector<ReviewRecord>> out;
    for (const auto& r : corpus.reviews)
        if (r.label == Label::Ai) out[r.paper_id].push_back(r);
    return out;
}

const PaperRecord* find_paper(const Corpus& corpus, const std::string& paper_id) {
    for (const auto& p : corpus.papers)
        if (p.paper_id == paper_id) return &p;
    return nullptr;
}

int cmd_ingest(const CliState& state, const std::string& corpus_path) {
    OutputLock lock(state.out_dir);
    Corpus corpus = load_corpus(corpus_path);
    save_corpus((state.out_dir / "corpus.jsonl").string(), corpus);
    size_t human = 0, refined = 0, ai = 0, unlabeled = 0;
    for (const auto& r : corpus.reviews) {
        switch (r.label) {
            case Label::Human: ++human; break;
            case Label::Refined: ++refined; break;
            case Label::Ai: ++ai; break;
            default: ++unlabeled; break;
        }
    }
    std::cout << "papers: " << corpus.papers.size() << "\nreviews: " << corpus.reviews.size()
              << " (human " << human << ", refined " << refined << ", ai " << ai
              << ", unlabeled " << unlabeled << ")\n";
    return 0;
}

int cmd_generate(const CliState& state, const std::string& corpus_path, bool skip_clean) {
    OutputLock lock(state.out_dir);
    require_seed(state);
    Corpus corpus = load_corpus(corpus_path);
    auto chat = make_chat(state);
    auto tmpl = templates(state);
    JobPlan plan = build_generation_jobs(corpus.papers, corpus.reviews, generator_models(state));
    for (const auto& w : plan.warnings) std::cerr << "warning: " << w << '\n';

    std::map<std::string, const PaperRecord*> papers;
    for (const auto& p : corpus.papers) papers[p.paper_id] = &p;
    std::map<std::string, const ReviewRecord*> reviews;
    for (const auto& r : corpus.reviews) reviews[r.id] = &r;

    std::vector<ReviewRecord> generated(plan.jobs.size());
    parallel_for(plan.jobs.size(), [&](size_t i) {
        const auto& job = plan.jobs[i];
        ReviewRecord rec;
        if (job.kind == JobKind::FullAi) {
            auto it = papers.find(job.paper_id);
            if (it == papers.end()) throw DataError("job references unknown paper " + job.paper_id);
            rec = generate_ai_review(*it->second, job.target_score, job.generator_model, *chat,
                                     tmpl);
        } else {
            auto it = reviews.find(*job.source_review_id);
            if (it == reviews.end())
                throw DataError("job references unknown review " + *job.source_review_id);
            rec = refine_review(*it->second, job.generator_model, *chat, tmpl);
        }
        if (!skip_clean) rec = clean_review(rec, *chat, tmpl);
        validate_record(rec);
        generated[i] = std::move(rec);
    });

    Corpus out;
    out.reviews = std::move(generated);
    save_corpus((state.out_dir / "generated.jsonl").string(), out);
    std::cout << "generated " << out.reviews.size() << " reviews ("
              << (state.out_dir / "generated.jsonl").string() << ")\n";
    return 0;
}

int cmd_extract_claims(const CliState& state, const std::string& corpus_path) {
    OutputLock lock(state.out_dir);
    Corpus corpus = load_corpus(corpus_path);
    auto chat = make_chat(state);
    auto tmpl = templates(state);
    std::vector<ClaimSet> sets(corpus.reviews.size());
    parallel_for(corpus.reviews.size(), [&](size_t i) {
        sets[i] = extract_claims(corpus.reviews[i], *chat, tmpl);
    });
    std::ofstream out(state.out_dir / "claims.jsonl");
    for (const auto& s : sets) out << claimset_to_json(s).dump() << '\n';
    std::cout << "extracted claims for " << sets.size() << " reviews\n";
    return 0;
}

int cmd_featurize(const CliState& state, const std::string& corpus_path, bool generate_refs) {
    OutputLock lock(state.out_dir);
    Corpus corpus = load_corpus(corpus_path);
    Featurizer featurizer(make_providers(state), feature_config(state), templates(state),
                          generator_models(state));
    auto by_paper = ai_reviews_by_paper(corpus);

    std::vector<const ReviewRecord*> targets;
    for (const auto& r : corpus.reviews)
        if (r.label != Label::Unlabeled) targets.push_back(&r);

    std::vector<FeaturizedRow> rows(targets.size());
    parallel_for(targets.size(), [&](size_t i) {
        const auto& target = *targets[i];
        const PaperRecord* paper = find_paper(corpus, target.paper_id);
        if (!paper) throw DataError("review " + target.id + " references unknown paper");
        auto candidates = by_paper[target.paper_id];
        rows[i] = featurizer.featurize(target, *paper, candidates, generate_refs);
    });
    save_feature_table((state.out_dir / "features.jsonl").string(), rows);
    std::cout << "featurized " << rows.size() << " reviews ("
              << (state.out_dir / "features.jsonl").string() << ")\n";
    return 0;
}

GbdtHyperparams hyperparams_from_config(const CliState& state) {
    GbdtHyperparams hp;
    hp.num_rounds = state.get_int("gbdt.num_rounds", hp.num_rounds);
    hp.learning_rate = state.get_real("gbdt.learning_rate", hp.learning_rate);
    hp.max_depth = state.get_int("gbdt.max_depth", hp.max_depth);
    hp.num_leaves = state.get_int("gbdt.num_leaves", hp.num_leaves);
    hp.subsample = state.get_real("gbdt.subsample", hp.subsample);
    hp.feature_subsample = state.get_real("gbdt.feature_subsample", hp.feature_subsample);
    hp.min_samples_leaf = state.get_int("gbdt.min_samples_leaf", hp.min_samples_leaf);
    hp.min_split_gain = state.get_real("gbdt.min_split_gain", hp.min_split_gain);
    hp.l1 = state.get_real("gbdt.l1", hp.l1);
    hp.l2 = state.get_real("gbdt.l2", hp.l2);
    return hp;
}

struct LabeledRows {
    std::vector<std::array<double, kNumFeatures>> x;
    std::vector<int> y;
    std::vector<std::string> paper_ids;
    std::vector<const SimilarityCache*> caches;
};

LabeledRows labeled_rows(const std::vector<FeaturizedRow>& rows) {
    LabeledRows out;
    for (const auto& row : rows) {
        if (row.label == Label::Unlabeled) continue;
        out.x.push_back(row.features.as_array());
        out.y.push_back(static_cast<int>(row.label));
        out.paper_ids.push_back(row.paper_id);
        out.caches.push_back(&row.cache);
    }
    if (out.x.empty()) throw DataError("no labeled rows in feature table");
    return out;
}

int cmd_train(const CliState& state, const std::string& features_path, int search_trials) {
    OutputLock lock(state.out_dir);
    uint64_t seed = require_seed(state);
    auto rows = load_feature_table(features_path);
    auto data = labeled_rows(rows);
    FeatureConfig fc = feature_config(state);

    GbdtHyperparams hp = hyperparams_from_config(state);
    hp.seed = seed;
    double tau = fc.tau;
    if (search_trials > 0) {
        CvResult cv = cv_search(data.x, data.y, data.paper_ids, data.caches, SearchSpace{},
                                search_trials, seed);
        hp = cv.hyperparams;
        tau = cv.tau;
        std::cout << "search: best cv macro-F1 " << cv.macro_f1 << " at tau " << tau << '\n';
        if (tau != fc.tau) {
            for (size_t i = 0; i < data.x.size(); ++i) {
                if (data.caches[i]->s.empty()) continue;
                auto [f1, f2] = threshold_features(*data.caches[i], tau);
                data.x[i][0] = f1;
                data.x[i][1] = f2;
            }
        }
    }
    GbdtModel model = train(data.x, data.y, hp, fc.feature_mask);
    save_model((state.out_dir / "model.bin").string(), model);
    std::cout << "trained " << model.trees.size() << " rounds; final train log-loss "
              << (model.train_loss_curve.empty() ? 0.0 : model.train_loss_curve.back()) << " ("
              << (state.out_dir / "model.bin").string() << ")\n";
    return 0;
}

int cmd_classify(const CliState& state, const std::string& corpus_path,
                 const std::string& review_id, const std::string& model_path) {
    OutputLock lock(state.out_dir);
    Corpus corpus = load_corpus(corpus_path);
    GbdtModel model = load_model(model_path);
    Featurizer featurizer(make_providers(state), feature_config(state), templates(state),
                          generator_models(state));

    const ReviewRecord* target = nullptr;
    for (const auto& r : corpus.reviews)
        if (r.id == review_id) target = &r;
    if (!target) throw DataError("review not found in corpus: " + review_id);
    const PaperRecord* paper = find_paper(corpus, target->paper_id);
    if (!paper) throw DataError("paper not found in corpus: " + target->paper_id);

    auto candidates = ai_reviews_by_paper(corpus)[target->paper_id];
    FeaturizedRow row = featurizer.featurize(*target, *paper, candidates, true);
    Prediction pred = predict(model, row.features);

    json out;
    out["review_id"] = review_id;
    out["probs"] = {{"human", pred.probs[0]}, {"refined", pred.probs[1]}, {"ai", pred.probs[2]}};
    out["label"] = label_name(pred.label);
    out["confidence"] = pred.confidence;
    out["reference_rating"] = choose_reference_rating(*target, *paper);
    out["features"] = row.features.as_array();
    std::ofstream f(state.out_dir / "prediction.json");
    f << out.dump(2) << '\n';
    std::cout << out.dump(2) << '\n';
    return 0;
}

std::vector<Prediction> predict_rows(const GbdtModel& model,
                                     const std::vector<FeaturizedRow>& rows,
                                     std::vector<int>& labels) {
    std::vector<Prediction> preds;
    for (const auto& row : rows) {
        if (row.label == Label::Unlabeled) continue;
        preds.push_back(predict(model, row.features));
        labels.push_back(static_cast<int>(row.label));
    }
    if (preds.empty()) throw DataError("no labeled rows to evaluate");
    return preds;
}

void write_roc_csv(const fs::path& path, const std::vector<RocPoint>& points) {
    std::ofstream f(path);
    f << "threshold,fpr,tpr\n";
    for (const auto& p : points) f << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
}

void write_theta_csv(const fs::path& path, const std::vector<ThresholdPoint>& curve) {
    std::ofstream f(path);
    f << "theta,coverage,selective_accuracy\n";
    for (const auto& p : curve) {
        f << p.theta << ',' << p.coverage << ',';
        if (p.selective_accuracy) f << *p.selective_accuracy;
        f << '\n';
    }
}

int cmd_evaluate(const CliState& state, const std::string& features_path,
                 const std::string& model_path) {
    OutputLock lock(state.out_dir);
    auto rows = load_feature_table(features_path);
    GbdtModel model = load_model(model_path);
    std::vector<int> labels;
    auto preds = predict_rows(model, rows, labels);
    uint64_t seed = state.seed.value_or(0);
    int iterations = state.get_int("bootstrap.iterations", 1000);

    EvalReport report;
    std::vector<int> hard;
    for (const auto& p : preds) hard.push_back(static_cast<int>(p.label));
    report.macro_f1_score = macro_f1(hard, labels);
    report.confusion = confusion_matrix(hard, labels);
    report.threshold_curve = threshold_sweep(preds, labels, default_theta_grid());

    json j;
    // TPR@FPR reports the maximum TPR at or below the target false-positive
    // rate; no interpolation between thresholds.
    j["tpr_convention"] = "max TPR over thresholds with FPR <= target";
    try {
        auto [scores, binary] = collapse_binary(preds, labels, BinaryMode::AiVsRest);
        report.auc_ai_vs_rest = roc_auc(scores, binary);
        report.roc = roc_points(scores, binary);
        for (double target : {0.001, 0.01}) report.tpr_at[target] = tpr_at_fpr(scores, binary, target);
        auto auc_metric = [&](const std::vector<size_t>& idx) {
            std::vector<double> s;
            std::vector<int> b;
            for (size_t i : idx) {
                s.push_back(scores[i]);
                b.push_back(binary[i]);
            }
            bool pos = false, neg = false;
            for (int v : b) (v ? pos : neg) = true;
            if (!pos || !neg) return 0.5;  // degenerate resample
            return roc_auc(s, b);
        };
        auto bs = bootstrap(auc_metric, scores.size(), iterations, seed);
        report.bootstrap_std["auc_ai_vs_rest"] = bs.std_dev;
        j["auc_ai_vs_rest"] = {{"value", *report.auc_ai_vs_rest},
                               {"bootstrap_std", bs.std_dev},
                               {"ci95", {bs.ci_low, bs.ci_high}}};
    } catch (const DataError&) {
        j["auc_ai_vs_rest"] = nullptr;  // single-class test sets
    }
    try {
        auto [scores, binary] = collapse_binary(preds, labels, BinaryMode::AiVsHumanOnly);
        report.auc_ai_vs_human = roc_auc(scores, binary);
        j["auc_ai_vs_human_only"] = *report.auc_ai_vs_human;
    } catch (const DataError&) {
        j["auc_ai_vs_human_only"] = nullptr;
    }

    auto f1_metric = [&](const std::vector<size_t>& idx) {
        std::vector<int> p, l;
        for (size_t i : idx) {
            p.push_back(hard[i]);
            l.push_back(labels[i]);
        }
        return macro_f1(p, l);
    };
    auto f1_bs = bootstrap(f1_metric, hard.size(), iterations, seed + 1);
    report.bootstrap_std["macro_f1"] = f1_bs.std_dev;

    j["macro_f1"] = {{"value", report.macro_f1_score},
                     {"bootstrap_std", f1_bs.std_dev},
                     {"ci95", {f1_bs.ci_low, f1_bs.ci_high}}};
    for (const auto& [target, tpr] : report.tpr_at)
        j["tpr_at_fpr"][std::to_string(target)] = tpr;
    j["confusion_counts"] = report.confusion.counts;
    j["confusion_percents"] = report.confusion.percents;
    j["n_samples"] = labels.size();

    std::ofstream f(state.out_dir / "report.json");
    f << j.dump(2) << '\n';
    if (!report.roc.empty()) write_roc_csv(state.out_dir / "roc.csv", report.roc);
    write_theta_csv(state.out_dir / "theta.csv", report.threshold_curve);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_sweep_theta(const CliState& state, const std::string& features_path,
                    const std::string& model_path) {
    OutputLock lock(state.out_dir);
    auto rows = load_feature_table(features_path);
    GbdtModel model = load_model(model_path);
    std::vector<int> labels;
    auto preds = predict_rows(model, rows, labels);
    auto curve = threshold_sweep(preds, labels, default_theta_grid());
    write_theta_csv(state.out_dir / "theta.csv", curve);
    std::cout << "theta curve written (" << (state.out_dir / "theta.csv").string() << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"peer-review authorship attribution pipeline"};
    app.require_subcommand(1);

    CliState state;
    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--out", state.out_dir, "output directory")->capture_default_str();
    uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "deterministic seed");
    app.add_option("--set", overrides, "override a config key, e.g. --set features.tau=0.75");

    std::string corpus_path, features_path, model_path, review_id;
    int search_trials = 0;
    bool skip_clean = false, generate_refs = false;

    auto* ingest = app.add_subcommand("ingest", "validate and normalize a corpus file");
    ingest->add_option("--corpus", corpus_path, "corpus jsonl")->required();

    auto* generate = app.add_subcommand("generate", "produce AI and refined reviews");
    generate->add_option("--corpus", corpus_path, "corpus jsonl")->required();
    generate->add_flag("--skip-clean", skip_clean, "skip the post-processing pass");

    auto* extract = app.add_subcommand("extract-claims", "extract claims for every review");
    extract->add_option("--corpus", corpus_path, "corpus jsonl")->required();

    auto* featurize = app.add_subcommand("featurize", "compute the nine-feature table");
    featurize->add_option("--corpus", corpus_path, "corpus jsonl")->required();
    featurize->add_flag("--generate-refs", generate_refs,
                        "generate missing AI references on demand");

    auto* train_cmd = app.add_subcommand("train", "train the classifier");
    train_cmd->add_option("--features", features_path, "features.jsonl")->required();
    train_cmd->add_option("--search", search_trials, "randomized-search trial count");

    auto* classify = app.add_subcommand("classify", "classify a single review");
    classify->add_option("--corpus", corpus_path, "corpus jsonl with the paper and review")
        ->required();
    classify->add_option("--review-id", review_id, "review to classify")->required();
    classify->add_option("--model", model_path, "model file")->required();

    auto* evaluate = app.add_subcommand("evaluate", "metrics over a labeled feature table");
    evaluate->add_option("--features", features_path, "features.jsonl")->required();
    evaluate->add_option("--model", model_path, "model file")->required();

    auto* sweep = app.add_subcommand("sweep-theta", "confidence-threshold curve");
    sweep->add_option("--features", features_path, "features.jsonl")->required();
    sweep->add_option("--model", model_path, "model file")->required();

    // Global options remain usable after the subcommand name.
    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*seed_opt) state.seed = seed_value;
        for (const auto& ov : overrides) {
            size_t eq = ov.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value: " + ov);
            state.kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
        }
        if (!config_path.empty()) load_config_file(state, config_path);

        if (*ingest) return cmd_ingest(state, corpus_path);
        if (*generate) return cmd_generate(state, corpus_path, skip_clean);
        if (*extract) return cmd_extract_claims(state, corpus_path);
        if (*featurize) return cmd_featurize(state, corpus_path, generate_refs);
        if (*train_cmd) return cmd_train(state, features_path, search_trials);
        if (*classify) return cmd_classify(state, corpus_path, review_id, model_path);
        if (*evaluate) return cmd_evaluate(state, features_path, model_path);
        if (*sweep) return cmd_sweep_theta(state, features_path, model_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
