#include "anno/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "anno/embeddings.hpp"
#include "anno/lda.hpp"

using nlohmann::json;

namespace anno::harness {

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& golds) {
    if (predictions.size() != golds.size())
        throw std::invalid_argument("predictions/golds length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool g = golds[i] == 1;
        if (p && g) ++cm.tp;
        else if (p && !g) ++cm.fp;
        else if (!p && g) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

namespace {

double ratio_percent(double num, double den, bool* warned) {
    if (den == 0.0) {
        if (warned) *warned = true;
        return 0.0;
    }
    return 100.0 * num / den;
}

double class_f1(double tp, double fp, double fn, bool* warned) {
    const double den = 2.0 * tp + fp + fn;
    if (den == 0.0) {
        if (warned) *warned = true;
        return 0.0;
    }
    return 100.0 * 2.0 * tp / den;
}

}  // namespace

double sensitivity(const ConfusionMatrix& cm, bool* warned) {
    return ratio_percent(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fn), warned);
}

double specificity(const ConfusionMatrix& cm, bool* warned) {
    return ratio_percent(static_cast<double>(cm.tn), static_cast<double>(cm.tn + cm.fp), warned);
}

double macro_f1(const ConfusionMatrix& cm, bool* warned) {
    const double pos = class_f1(static_cast<double>(cm.tp), static_cast<double>(cm.fp),
                                static_cast<double>(cm.fn), warned);
    // negative class: swap roles
    const double neg = class_f1(static_cast<double>(cm.tn), static_cast<double>(cm.fn),
                                static_cast<double>(cm.fp), warned);
    return 0.5 * (pos + neg);
}

std::string to_string(Subset s) { return s == Subset::overall ? "overall" : "disagreement"; }

void MetricsReport::finalize() {
    auto stats = [&](auto getter, double& mean, double& se) {
        const double n = static_cast<double>(runs.size());
        mean = 0.0;
        for (const auto& r : runs) mean += getter(r);
        mean /= n;
        if (runs.size() < 2) {
            se = 0.0;
            return;
        }
        double ss = 0.0;
        for (const auto& r : runs) ss += (getter(r) - mean) * (getter(r) - mean);
        se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    };
    stats([](const RunMetrics& r) { return r.macro_f1; }, mean_macro_f1, se_macro_f1);
    stats([](const RunMetrics& r) { return r.sensitivity; }, mean_sensitivity, se_sensitivity);
    stats([](const RunMetrics& r) { return r.specificity; }, mean_specificity, se_specificity);
}

std::string to_json(const MetricsReport& r) {
    json j;
    j["subset"] = r.subset;
    j["seeds"] = r.seeds;
    json runs = json::array();
    for (const auto& m : r.runs)
        runs.push_back({{"macro_f1", m.macro_f1},
                        {"sensitivity", m.sensitivity},
                        {"specificity", m.specificity},
                        {"tp", m.cm.tp},
                        {"fp", m.cm.fp},
                        {"tn", m.cm.tn},
                        {"fn", m.cm.fn},
                        {"degenerate", m.degenerate}});
    j["runs"] = std::move(runs);
    j["mean"] = {{"macro_f1", r.mean_macro_f1},
                 {"sensitivity", r.mean_sensitivity},
                 {"specificity", r.mean_specificity}};
    j["standard_error"] = {{"macro_f1", r.se_macro_f1},
                           {"sensitivity", r.se_sensitivity},
                           {"specificity", r.se_specificity}};
    return j.dump(2);
}

MetricsReport metrics_report_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    MetricsReport r;
    r.subset = j.at("subset").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& jm : j.at("runs")) {
        RunMetrics m;
        m.macro_f1 = jm.at("macro_f1").get<double>();
        m.sensitivity = jm.at("sensitivity").get<double>();
        m.specificity = jm.at("specificity").get<double>();
        m.cm.tp = jm.at("tp").get<std::size_t>();
        m.cm.fp = jm.at("fp").get<std::size_t>();
        m.cm.tn = jm.at("tn").get<std::size_t>();
        m.cm.fn = jm.at("fn").get<std::size_t>();
        m.degenerate = jm.at("degenerate").get<bool>();
        r.runs.push_back(m);
    }
    r.finalize();
    return r;
}

TrainResult train(model::AnnoModel& m, const std::vector<instances::TrainingInstance>& train,
                  const std::vector<instances::EvalInstance>& val,
                  const instances::Tokenizer& tok, const TrainConfig& cfg,
                  ctr::Pooling pooling) {
    if (train.empty()) throw std::invalid_argument("empty training set");
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be > 0");

    nn::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;
    nn::Adam adam(adam_cfg);
    auto params = m.parameters();

    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 drop_rng(cfg.seed ^ 0xd20f0u);

    TrainResult result;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            for (auto* p : params) p->zero_grad();
            for (std::size_t i = start; i < end; ++i) {
                const auto& inst = train[order[i]];
                const auto tokens = instances::render_tokens(inst, tok, cfg.max_seq_len);
                nn::Graph g;
                nn::Node* logits =
                    m.forward(g, tokens, inst.annotator_group, pooling, true, &drop_rng);
                nn::Node* loss = g.cross_entropy_logits(logits, inst.target);
                epoch_loss += loss->val(0, 0);
                g.backward(g.scale(loss, inv_b));
            }
            adam.step(params);
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(train.size()));
        if (!val.empty())
            result.val_macro_f1.push_back(
                evaluate(m, val, tok, cfg.max_seq_len, pooling).macro_f1);
    }
    return result;
}

RunMetrics evaluate(model::AnnoModel& m, const std::vector<instances::EvalInstance>& insts,
                    const instances::Tokenizer& tok, std::size_t max_seq_len,
                    ctr::Pooling pooling) {
    if (insts.empty()) throw std::invalid_argument("empty evaluation set");
    std::vector<int> preds, golds;
    for (const auto& inst : insts) {
        if (inst.input_text != inst.text)
            throw std::logic_error("evaluation instance carries label text");
        const auto tokens = instances::render_tokens(inst, tok, max_seq_len);
        const Eigen::Vector2d logits =
            m.predict_logits(tokens, inst.annotator_group, pooling);
        preds.push_back(logits(1) > logits(0) ? 1 : 0);
        golds.push_back(inst.target);
    }
    RunMetrics r;
    r.cm = confusion(preds, golds);
    bool warned = false;
    r.macro_f1 = macro_f1(r.cm, &warned);
    r.sensitivity = sensitivity(r.cm, &warned);
    r.specificity = specificity(r.cm, &warned);
    r.degenerate = warned;
    return r;
}

std::vector<data::DatasetEntry> select_subset(const std::vector<data::DatasetEntry>& entries,
                                              Subset subset) {
    if (subset == Subset::overall) return entries;
    std::vector<data::DatasetEntry> out;
    for (const auto& e : entries)
        if (!e.unanimous()) out.push_back(e);
    if (out.empty())
        throw std::runtime_error("disagreement subset is empty (all entries unanimous)");
    return out;
}

std::vector<instances::TrainingInstance> build_baseline_training(const data::Dataset& d) {
    std::vector<instances::TrainingInstance> out;
    for (const auto& e : d.entries) {
        instances::TrainingInstance inst;
        inst.instance_id = e.instance_id;
        inst.text = e.text;
        inst.input_text = e.text;  // no label text
        inst.target = e.majority_label();
        out.push_back(std::move(inst));
    }
    return out;
}

Preset preset_from_string(const std::string& s) {
    if (s == "baseline") return Preset::baseline;
    if (s == "annobert-ctr") return Preset::annobert_ctr;
    if (s == "annobert-history") return Preset::annobert_history;
    if (s == "annobert-learnt") return Preset::annobert_learnt;
    throw std::invalid_argument("unknown preset: " + s);
}

std::string to_string(Preset p) {
    switch (p) {
        case Preset::baseline: return "baseline";
        case Preset::annobert_ctr: return "annobert-ctr";
        case Preset::annobert_history: return "annobert-history";
        default: return "annobert-learnt";
    }
}

SingleRunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
    data::Dataset full = cfg.use_synthetic ? data::generate_synthetic(cfg.synth, seed)
                                           : data::load_annotations(cfg.dataset_path);
    auto split = data::split_dataset(full, cfg.val_fraction, seed, cfg.test_fraction);

    const auto label_cfg = instances::label_preset(cfg.label_preset);

    // tokenizer over training text plus the label words
    std::vector<std::string> texts;
    for (const auto& e : split.train.entries) texts.push_back(e.text);
    texts.push_back(label_cfg.positive_text);
    texts.push_back(label_cfg.negative_text);
    auto tok = instances::Tokenizer::build(texts);

    // training / eval instances
    std::vector<instances::TrainingInstance> train_insts;
    if (cfg.preset == Preset::baseline) {
        train_insts = build_baseline_training(split.train);
    } else {
        for (const auto& e : split.train.entries) {
            auto insts = instances::build_training_instances(e, label_cfg, cfg.majority_target);
            train_insts.insert(train_insts.end(), insts.begin(), insts.end());
        }
    }
    std::vector<instances::EvalInstance> val_insts, test_insts;
    for (const auto& e : split.val.entries) val_insts.push_back(instances::build_eval_instance(e));
    for (const auto& e : split.test.entries)
        test_insts.push_back(instances::build_eval_instance(e));

    model::ModelConfig mc;
    mc.hidden_size = cfg.hidden_size;
    mc.encoder_layers = cfg.encoder_layers;
    mc.attention_heads = cfg.attention_heads;
    mc.feature_layers = cfg.feature_layers;
    mc.max_seq_len = cfg.max_seq_len;
    mc.vocab_size = tok.vocab_size();
    mc.dropout = cfg.dropout;
    mc.max_annotators = full.annotator_ids.size();

    std::optional<model::AnnoModel> m;
    if (cfg.preset == Preset::baseline) {
        mc.use_fusion = false;
        m.emplace(mc, seed);
    } else {
        embeddings::AnnotatorEmbeddingSet set;
        if (cfg.preset == Preset::annobert_ctr) {
            std::vector<std::string> train_texts;
            for (const auto& e : split.train.entries) train_texts.push_back(e.text);
            auto lda = lda::fit_lda(lda::tokenize_corpus(train_texts), cfg.latent_dim,
                                    cfg.lda_iterations, seed);
            ctr::CtrHyperparams hyper = cfg.ctr_hyper;
            hyper.latent_dim = cfg.latent_dim;
            hyper.em_iterations = cfg.em_iterations;
            auto ratings = ctr::ratings_from_dataset(split.train);
            auto ctr_model = ctr::fit_ctr(lda, ratings, hyper, split.train.annotator_ids);
            set = embeddings::from_ctr(ctr_model, cfg.freeze_annotator);
        } else if (cfg.preset == Preset::annobert_history) {
            auto hm = embeddings::history_matrix(split.train);
            set = embeddings::build_history_embeddings(hm, split.train.annotator_ids,
                                                       cfg.hidden_size, seed,
                                                       cfg.freeze_annotator);
        } else {
            set = embeddings::build_learnt_embeddings(full.annotator_ids, cfg.hidden_size, seed);
        }
        // test-split annotators may be missing from the train split
        for (const auto& id : full.annotator_ids)
            if (set.index_of(id) < 0)
                throw std::runtime_error("annotator absent from training split: " + id);
        mc.annotator_dim =
            cfg.pooling == ctr::Pooling::concat ? mc.max_annotators * set.dim : set.dim;
        m.emplace(mc, std::move(set), seed);
    }

    TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.max_seq_len = cfg.max_seq_len;

    SingleRunResult result;
    result.training = train(*m, train_insts, val_insts, tok, tc, cfg.pooling);
    result.overall = evaluate(*m, test_insts, tok, cfg.max_seq_len, cfg.pooling);

    bool any_disagreement = false;
    for (const auto& e : split.test.entries)
        if (!e.unanimous()) { any_disagreement = true; break; }
    if (any_disagreement) {
        auto subset_entries = select_subset(split.test.entries, Subset::disagreement);
        std::vector<instances::EvalInstance> subset_insts;
        for (const auto& e : subset_entries)
            subset_insts.push_back(instances::build_eval_instance(e));
        result.disagreement = evaluate(*m, subset_insts, tok, cfg.max_seq_len, cfg.pooling);
    }
    return result;
}

MultiRunResult multi_run(const ExperimentConfig& cfg) {
    if (cfg.n_runs < 1) throw std::invalid_argument("n_runs must be >= 1");
    MultiRunResult out;
    out.overall.subset = to_string(Subset::overall);
    MetricsReport disagreement;
    disagreement.subset = to_string(Subset::disagreement);

    for (std::size_t r = 0; r < cfg.n_runs; ++r) {
        const std::uint64_t seed = cfg.base_seed + r;
        SingleRunResult run;
        try {
            run = run_single(cfg, seed);
        } catch (const std::exception& e) {
            throw std::runtime_error("run " + std::to_string(r) + " failed: " + e.what());
        }
        out.overall.seeds.push_back(seed);
        out.overall.runs.push_back(run.overall);
        if (run.disagreement) {
            disagreement.seeds.push_back(seed);
            disagreement.runs.push_back(*run.disagreement);
        }
    }
    out.overall.finalize();
    if (!disagreement.runs.empty()) {
        disagreement.finalize();
        out.disagreement = std::move(disagreement);
    }
    return out;
}

}  // namespace anno::harness
