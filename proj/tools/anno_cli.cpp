// Command-line front end: preprocessing, embedding fitting, training/eval
// experiments, and annotator-agreement analysis.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "anno/analysis.hpp"
#include "anno/ctr.hpp"
#include "anno/data.hpp"
#include "anno/embeddings.hpp"
#include "anno/harness.hpp"
#include "anno/lda.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kRuntimeError = 3;

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

// Manifest: artifact list + resolved config; timestamps live only under
// "metadata" so outputs stay byte-comparable otherwise.
void write_manifest(const fs::path& out_dir, const json& resolved_config,
                    const std::vector<std::string>& artifacts) {
    json m;
    m["config"] = resolved_config;
    m["artifacts"] = artifacts;
    m["metadata"] = {{"created", iso_timestamp()}};
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

anno::data::Dataset load_dataset_any(const std::string& path) {
    // Dataset JSON (from preprocess) or raw annotation JSONL.
    if (path.ends_with(".jsonl")) return anno::data::load_annotations(path);
    return anno::data::load_dataset(path);
}

struct SynthFlags {
    bool use_synthetic = false;
    anno::data::SyntheticConfig cfg;
    std::uint64_t seed = 0;
};

void add_synth_flags(CLI::App* cmd, SynthFlags& s) {
    cmd->add_flag("--synthetic", s.use_synthetic, "use a generated synthetic dataset");
    cmd->add_option("--instances", s.cfg.n_instances, "synthetic instance count");
    cmd->add_option("--annotators", s.cfg.n_annotators, "synthetic annotator count");
    cmd->add_option("--annotators-per-instance", s.cfg.annotators_per_instance,
                    "annotators assigned to each instance");
    cmd->add_option("--positive-rate", s.cfg.positive_rate, "target positive base rate");
    cmd->add_option("--blocs", s.cfg.n_blocs, "annotator sensitivity blocs");
}

int run_preprocess(const std::string& input, const std::string& output) {
    auto d = anno::data::load_annotations(input);
    if (d.entries.empty()) {
        std::cerr << "error: no records in " << input << "\n";
        return kUsageError;
    }
    anno::data::save_dataset(d, output);
    std::cout << "wrote " << output << " (" << d.size() << " entries, "
              << d.annotator_ids.size() << " annotators)\n";
    return kOk;
}

struct FitArgs {
    std::string data_path;
    std::string source = "ctr";
    std::size_t dim = 10;
    std::size_t em_iters = 100;
    std::size_t lda_iters = 200;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    bool allow_any_dim = false;
    std::string out_dir = "out";
    SynthFlags synth;
};

int run_fit_embeddings(const FitArgs& a) {
    if (a.source == "ctr" && !a.allow_any_dim && (a.dim < 5 || a.dim > 15)) {
        std::cerr << "error: --dim " << a.dim
                  << " is outside the supported 5-15 grid (pass --allow-any-dim to override)\n";
        return kUsageError;
    }
    anno::data::Dataset d = a.synth.use_synthetic
                                ? anno::data::generate_synthetic(a.synth.cfg, a.synth.seed)
                                : load_dataset_any(a.data_path);
    // embeddings are fitted on the training split only
    auto split = anno::data::split_dataset(d, a.val_fraction, a.seed);
    const auto& train = split.train;

    fs::create_directories(a.out_dir);
    std::vector<std::string> artifacts;
    anno::embeddings::AnnotatorEmbeddingSet set;
    if (a.source == "ctr") {
        std::vector<std::string> texts;
        for (const auto& e : train.entries) texts.push_back(e.text);
        auto lda = anno::lda::fit_lda(anno::lda::tokenize_corpus(texts), a.dim, a.lda_iters,
                                      a.seed);
        anno::ctr::CtrHyperparams hyper;
        hyper.latent_dim = a.dim;
        hyper.em_iterations = a.em_iters;
        auto model = anno::ctr::fit_ctr(lda, anno::ctr::ratings_from_dataset(train), hyper,
                                        train.annotator_ids);
        set = anno::embeddings::from_ctr(model);
        json trace = model.objective_trace;
        write_text(fs::path(a.out_dir) / "objective_trace.json", trace.dump(2) + "\n");
        artifacts.push_back("objective_trace.json");
    } else if (a.source == "history") {
        set = anno::embeddings::build_history_embeddings(anno::embeddings::history_matrix(train),
                                                         train.annotator_ids, a.dim, a.seed);
    } else if (a.source == "learnt") {
        set = anno::embeddings::build_learnt_embeddings(train.annotator_ids, a.dim, a.seed);
    } else {
        std::cerr << "error: unknown --source " << a.source << "\n";
        return kUsageError;
    }
    write_text(fs::path(a.out_dir) / "embeddings.json", anno::embeddings::to_json(set));
    artifacts.push_back("embeddings.json");

    json cfg = {{"source", a.source},   {"dim", a.dim},
                {"em_iters", a.em_iters}, {"lda_iters", a.lda_iters},
                {"seed", a.seed},       {"synthetic", a.synth.use_synthetic},
                {"data", a.data_path},  {"val_fraction", a.val_fraction}};
    write_manifest(a.out_dir, cfg, artifacts);
    std::cout << "wrote " << a.out_dir << "/embeddings.json (" << set.ids.size()
              << " annotators, dim " << set.dim << ")\n";
    return kOk;
}

struct TrainEvalArgs {
    std::string config_path;
    std::string data_path;
    std::string preset = "annobert-ctr";
    std::string label_preset = "hate-not";
    std::string pooling = "mean";
    std::size_t dim = 10;
    bool freeze_annotator = true;
    std::size_t epochs = 4;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t runs = 10;
    std::uint64_t seed = 0;
    std::string subset = "both";  // overall | disagreement | both
    std::string out_dir = "out";
    SynthFlags synth;
};

anno::harness::ExperimentConfig build_experiment_config(const TrainEvalArgs& a, json& resolved) {
    anno::harness::ExperimentConfig cfg;
    // optional structured config file; flags override afterwards
    json file;
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw std::invalid_argument("cannot read config " + a.config_path);
        in >> file;
    }
    auto get = [&](const char* key, auto fallback) {
        using T = decltype(fallback);
        return file.contains(key) ? file.at(key).get<T>() : fallback;
    };
    cfg.use_synthetic = a.synth.use_synthetic || a.data_path.empty();
    cfg.synth = a.synth.cfg;
    cfg.dataset_path = a.data_path;
    cfg.preset = anno::harness::preset_from_string(get("preset", a.preset));
    cfg.label_preset = get("label_preset", a.label_preset);
    cfg.pooling = anno::ctr::pooling_from_string(get("pooling", a.pooling));
    cfg.latent_dim = get("dim", a.dim);
    cfg.freeze_annotator = get("freeze_annotator", a.freeze_annotator);
    cfg.hidden_size = get("hidden_size", std::size_t{64});
    cfg.encoder_layers = get("encoder_layers", std::size_t{2});
    cfg.attention_heads = get("attention_heads", std::size_t{4});
    cfg.feature_layers = get("feature_layers", std::size_t{6});
    cfg.max_seq_len = get("max_seq_len", std::size_t{128});
    cfg.dropout = get("dropout", 0.1);
    cfg.em_iterations = get("em_iterations", std::size_t{100});
    cfg.lda_iterations = get("lda_iterations", std::size_t{200});
    cfg.train.epochs = get("epochs", a.epochs);
    cfg.train.learning_rate = get("lr", a.lr);
    cfg.train.batch_size = get("batch_size", a.batch_size);
    cfg.train.freeze_annotator = cfg.freeze_annotator;
    cfg.train.max_seq_len = cfg.max_seq_len;
    cfg.n_runs = get("runs", a.runs);
    cfg.base_seed = get("seed", a.seed);

    resolved = {{"preset", to_string(cfg.preset)},
                {"label_preset", cfg.label_preset},
                {"pooling", anno::ctr::to_string(cfg.pooling)},
                {"dim", cfg.latent_dim},
                {"freeze_annotator", cfg.freeze_annotator},
                {"hidden_size", cfg.hidden_size},
                {"encoder_layers", cfg.encoder_layers},
                {"attention_heads", cfg.attention_heads},
                {"feature_layers", cfg.feature_layers},
                {"max_seq_len", cfg.max_seq_len},
                {"dropout", cfg.dropout},
                {"em_iterations", cfg.em_iterations},
                {"lda_iterations", cfg.lda_iterations},
                {"epochs", cfg.train.epochs},
                {"lr", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"runs", cfg.n_runs},
                {"seed", cfg.base_seed},
                {"synthetic", cfg.use_synthetic},
                {"data", cfg.dataset_path},
                {"subset", a.subset}};
    return cfg;
}

void print_table(std::ostream& os, const anno::harness::MetricsReport& r) {
    os << r.subset << " (" << r.runs.size() << " runs)\n";
    char line[160];
    std::snprintf(line, sizeof line, "  %-12s %8s %8s\n", "metric", "mean", "se");
    os << line;
    auto rowf = [&](const char* name, double mean, double se) {
        std::snprintf(line, sizeof line, "  %-12s %8.2f %8.2f\n", name, mean, se);
        os << line;
    };
    rowf("macro_f1", r.mean_macro_f1, r.se_macro_f1);
    rowf("sensitivity", r.mean_sensitivity, r.se_sensitivity);
    rowf("specificity", r.mean_specificity, r.se_specificity);
}

int run_train_eval(const TrainEvalArgs& a) {
    json resolved;
    auto cfg = build_experiment_config(a, resolved);
    if (cfg.preset == anno::harness::Preset::baseline)
        std::cout << "baseline preset: annotator embeddings and label text disabled\n";

    auto result = anno::harness::multi_run(cfg);
    fs::create_directories(a.out_dir);
    std::vector<std::string> artifacts;

    std::ostringstream table;
    if (a.subset != "disagreement") {
        write_text(fs::path(a.out_dir) / "metrics_overall.json",
                   anno::harness::to_json(result.overall));
        artifacts.push_back("metrics_overall.json");
        print_table(table, result.overall);
    }
    if (a.subset != "overall" && result.disagreement) {
        write_text(fs::path(a.out_dir) / "metrics_disagreement.json",
                   anno::harness::to_json(*result.disagreement));
        artifacts.push_back("metrics_disagreement.json");
        print_table(table, *result.disagreement);
    }
    write_text(fs::path(a.out_dir) / "metrics_table.txt", table.str());
    artifacts.push_back("metrics_table.txt");
    write_manifest(a.out_dir, resolved, artifacts);
    std::cout << table.str();
    return kOk;
}

struct AnalyzeArgs {
    std::vector<std::string> embedding_paths;
    std::string data_path;
    std::string out_dir = "out";
    std::size_t kmeans_k = 2;
    std::uint64_t seed = 0;
};

int run_analyze(const AnalyzeArgs& a) {
    auto d = load_dataset_any(a.data_path);
    bool any_overlap = false;
    for (const auto& e : d.entries) any_overlap |= e.labels.size() > 1;
    if (!any_overlap) {
        std::cerr << "analysis unavailable: every instance has a single annotator, "
                     "so no agreement pairs exist\n";
        return kDataError;
    }
    fs::create_directories(a.out_dir);
    std::vector<std::string> artifacts;
    json summary = json::array();
    for (const auto& path : a.embedding_paths) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot read " + path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto set = anno::embeddings::embedding_set_from_json(text);
        auto report = anno::analysis::kappa_cosine_correlation(set, d, a.kmeans_k, a.seed);

        Eigen::MatrixXd effective(set.ids.size(), static_cast<int>(set.dim));
        for (std::size_t i = 0; i < set.ids.size(); ++i)
            effective.row(static_cast<int>(i)) = set.vector_for(set.ids[i]).transpose();
        auto pca = anno::analysis::pca_project(effective, 2);

        const std::string tag = anno::embeddings::to_string(set.source);
        const fs::path sub = fs::path(a.out_dir) / tag;
        fs::create_directories(sub);
        write_text(sub / "agreement.json", anno::analysis::to_json(report));
        artifacts.push_back(tag + "/agreement.json");
        for (const auto& p : anno::analysis::emit_plots(report, pca, set.ids, sub.string()))
            artifacts.push_back(tag + "/" + fs::path(p).filename().string());
        summary.push_back({{"source", tag}, {"pearson_r", report.pearson_r},
                           {"pairs", report.pairs.size()}});
        std::cout << tag << ": pearson r = " << report.pearson_r << " over "
                  << report.pairs.size() << " pairs\n";
    }
    write_text(fs::path(a.out_dir) / "analysis_summary.json", summary.dump(2) + "\n");
    artifacts.push_back("analysis_summary.json");
    json cfg = {{"data", a.data_path}, {"embeddings", a.embedding_paths},
                {"kmeans_k", a.kmeans_k}, {"seed", a.seed}};
    write_manifest(a.out_dir, cfg, artifacts);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"annotator-aware hate speech classification toolkit"};
    app.require_subcommand(1);

    // preprocess
    std::string pre_in, pre_out;
    auto* pre = app.add_subcommand("preprocess", "normalize raw annotation JSONL");
    pre->add_option("--input", pre_in, "annotation JSONL")->required();
    pre->add_option("--output", pre_out, "preprocessed dataset JSON")->required();

    // fit-embeddings
    FitArgs fit;
    auto* fitc = app.add_subcommand("fit-embeddings", "fit annotator embeddings on the train split");
    fitc->add_option("--data", fit.data_path, "dataset JSON or annotation JSONL");
    fitc->add_option("--source", fit.source, "ctr | history | learnt");
    fitc->add_option("--dim", fit.dim, "embedding dimension (ctr topics / hidden size)");
    fitc->add_option("--em-iters", fit.em_iters, "CTR EM sweeps");
    fitc->add_option("--lda-iters", fit.lda_iters, "LDA Gibbs sweeps");
    fitc->add_option("--val-fraction", fit.val_fraction, "validation fraction");
    fitc->add_option("--seed", fit.seed, "random seed");
    fitc->add_flag("--allow-any-dim", fit.allow_any_dim, "skip the 5-15 dimension guard");
    fitc->add_option("--out-dir", fit.out_dir, "output directory");
    add_synth_flags(fitc, fit.synth);
    fitc->callback([&] { fit.synth.seed = fit.seed; });

    // train-eval
    TrainEvalArgs te;
    auto* tec = app.add_subcommand("train-eval", "run seeded training/evaluation experiments");
    tec->add_option("--config", te.config_path, "JSON config file (flags override)");
    tec->add_option("--data", te.data_path, "dataset JSON or annotation JSONL");
    tec->add_option("--preset", te.preset,
                    "baseline | annobert-ctr | annobert-history | annobert-learnt");
    tec->add_option("--label-preset", te.label_preset, "label text pair preset");
    tec->add_option("--pooling", te.pooling, "mean | max | sum | concat");
    tec->add_option("--dim", te.dim, "annotator embedding dimension");
    tec->add_flag("--freeze-annotator,!--no-freeze-annotator", te.freeze_annotator,
                  "freeze annotator embeddings during training");
    tec->add_option("--epochs", te.epochs, "training epochs");
    tec->add_option("--lr", te.lr, "learning rate");
    tec->add_option("--batch-size", te.batch_size, "batch size");
    tec->add_option("--runs", te.runs, "number of seeded runs");
    tec->add_option("--seed", te.seed, "base seed");
    tec->add_option("--subset", te.subset, "overall | disagreement | both");
    tec->add_option("--out-dir", te.out_dir, "output directory");
    add_synth_flags(tec, te.synth);

    // analyze
    AnalyzeArgs an;
    auto* anc = app.add_subcommand("analyze", "agreement vs embedding-distance analysis");
    anc->add_option("--embeddings", an.embedding_paths, "embedding JSON file(s)")->required();
    anc->add_option("--data", an.data_path, "dataset JSON or annotation JSONL")->required();
    anc->add_option("--out-dir", an.out_dir, "output directory");
    anc->add_option("--kmeans-k", an.kmeans_k, "cluster count");
    anc->add_option("--seed", an.seed, "random seed");

    // gen-synthetic
    SynthFlags gen;
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    auto* genc = app.add_subcommand("gen-synthetic", "generate a synthetic annotated dataset");
    genc->add_option("--output", gen_out, "dataset JSON path")->required();
    genc->add_option("--seed", gen_seed, "random seed");
    add_synth_flags(genc, gen);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message; 0 for --help
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (pre->parsed()) return run_preprocess(pre_in, pre_out);
        if (fitc->parsed()) {
            if (!fit.synth.use_synthetic && fit.data_path.empty()) {
                std::cerr << "error: pass --data or --synthetic\n";
                return kUsageError;
            }
            return run_fit_embeddings(fit);
        }
        if (tec->parsed()) return run_train_eval(te);
        if (anc->parsed()) return run_analyze(an);
        if (genc->parsed()) {
            auto d = anno::data::generate_synthetic(gen.cfg, gen_seed);
            anno::data::save_dataset(d, gen_out);
            std::cout << "wrote " << gen_out << " (" << d.size() << " entries)\n";
            return kOk;
        }
    } catch (const anno::data::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}
