#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "anno/ctr.hpp"
#include "anno/data.hpp"
#include "anno/instances.hpp"
#include "anno/model.hpp"

namespace anno::harness {

struct TrainConfig {
    std::size_t epochs = 4;
    double learning_rate = 1e-3;  // toy encoder default; 1e-5 suits pretrained encoders
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool freeze_annotator = true;
    std::size_t max_seq_len = 128;
};

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& golds);

// All metrics in percent. A zero denominator yields 0 and sets *warned.
double sensitivity(const ConfusionMatrix& cm, bool* warned = nullptr);
double specificity(const ConfusionMatrix& cm, bool* warned = nullptr);
double macro_f1(const ConfusionMatrix& cm, bool* warned = nullptr);

struct RunMetrics {
    double macro_f1 = 0.0, sensitivity = 0.0, specificity = 0.0;  // percent
    ConfusionMatrix cm;
    bool degenerate = false;  // some denominator was zero
};

enum class Subset { overall, disagreement };
std::string to_string(Subset s);

struct MetricsReport {
    std::string subset;
    std::vector<std::uint64_t> seeds;
    std::vector<RunMetrics> runs;
    double mean_macro_f1 = 0.0, se_macro_f1 = 0.0;
    double mean_sensitivity = 0.0, se_sensitivity = 0.0;
    double mean_specificity = 0.0, se_specificity = 0.0;

    void finalize();  // fills means and standard errors from runs
};

std::string to_json(const MetricsReport& r);
MetricsReport metrics_report_from_json(const std::string& json_text);

struct TrainResult {
    std::vector<double> epoch_loss;      // mean per-instance train loss per epoch
    std::vector<double> val_macro_f1;    // per epoch
};

// Cross-entropy training over seed-deterministically shuffled batches.
TrainResult train(model::AnnoModel& m, const std::vector<instances::TrainingInstance>& train,
                  const std::vector<instances::EvalInstance>& val,
                  const instances::Tokenizer& tok, const TrainConfig& cfg,
                  ctr::Pooling pooling);

// Argmax evaluation; asserts no instance carries label text.
RunMetrics evaluate(model::AnnoModel& m, const std::vector<instances::EvalInstance>& insts,
                    const instances::Tokenizer& tok, std::size_t max_seq_len,
                    ctr::Pooling pooling);

// Subset selection happens at evaluation time only.
std::vector<data::DatasetEntry> select_subset(const std::vector<data::DatasetEntry>& entries,
                                              Subset subset);

// Baseline training item: plain text, majority target, no label text.
std::vector<instances::TrainingInstance> build_baseline_training(const data::Dataset& d);

enum class Preset { baseline, annobert_ctr, annobert_history, annobert_learnt };
Preset preset_from_string(const std::string& s);
std::string to_string(Preset p);

struct ExperimentConfig {
    // data
    bool use_synthetic = true;
    data::SyntheticConfig synth;
    std::string dataset_path;  // JSONL annotations when use_synthetic is false
    double val_fraction = 0.1;
    double test_fraction = 0.2;

    // embeddings
    Preset preset = Preset::annobert_ctr;
    bool freeze_annotator = true;
    std::size_t latent_dim = 10;  // CTR/LDA topic count
    std::size_t em_iterations = 100;
    std::size_t lda_iterations = 200;
    ctr::CtrHyperparams ctr_hyper;

    // label text + pooling
    std::string label_preset = "hate-not";
    ctr::Pooling pooling = ctr::Pooling::mean;
    bool majority_target = false;

    // model
    std::size_t hidden_size = 64;
    std::size_t encoder_layers = 2;
    std::size_t attention_heads = 4;
    std::size_t feature_layers = 6;
    std::size_t max_seq_len = 128;
    double dropout = 0.1;

    // training / runs
    TrainConfig train;
    std::size_t n_runs = 10;
    std::uint64_t base_seed = 0;
};

struct SingleRunResult {
    RunMetrics overall;
    std::optional<RunMetrics> disagreement;
    TrainResult training;
};

SingleRunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed);

struct MultiRunResult {
    MetricsReport overall;
    std::optional<MetricsReport> disagreement;
};

// Seeds base_seed + 0 .. base_seed + n_runs - 1; any run failure aborts with
// the run index in the error message.
MultiRunResult multi_run(const ExperimentConfig& cfg);

}  // namespace anno::harness
