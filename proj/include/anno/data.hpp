#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anno::data {

// One line of the JSONL input: a single annotator's judgement of one text.
struct AnnotationRecord {
    std::string instance_id;
    std::string text;
    std::string annotator_id;
    int label = 0;  // 1 = hate class, 0 = non-hate
    std::optional<std::string> split;  // "train" or "test" when the source ships official splits
};

struct DatasetEntry {
    std::string instance_id;
    std::string text;  // preprocessed
    std::map<std::string, int> labels;  // annotator_id -> label

    // Majority vote; exact ties resolve according to ties_positive.
    int majority_label(bool ties_positive = true) const;
    bool unanimous() const;
};

enum class SplitTag { train, val, test, unsplit };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

struct Dataset {
    std::vector<DatasetEntry> entries;
    std::vector<std::string> annotator_ids;  // all distinct annotators, first-appearance order
    SplitTag split_tag = SplitTag::unsplit;
    // instance_id -> "train"/"test" when the source carried official split keys
    std::map<std::string, std::string> official_split;

    std::size_t size() const { return entries.size(); }
    void rebuild_annotator_index();
};

// Replaces @mentions and URLs with <user>/<url>, strips non-ASCII,
// collapses whitespace. Idempotent.
std::string preprocess_text(const std::string& raw);

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reads JSONL annotation records, groups them by instance_id, preprocesses text.
// Throws ParseError with a line number on malformed input or duplicate
// (instance_id, annotator_id) pairs.
Dataset load_annotations(const std::string& path);

// Dataset JSON (de)serialization.
std::string to_json(const Dataset& d);
Dataset dataset_from_json(const std::string& json_text);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

struct SplitResult {
    Dataset train, val, test;
};

// Honors official split tags when present (d.official_split); otherwise holds
// out test_fraction for test. Validation is floor(val_fraction * |train|)
// entries sampled uniformly from the training part.
SplitResult split_dataset(const Dataset& d, double val_fraction, std::uint64_t seed,
                          double test_fraction = 0.2);

// Uniform sample without replacement with exact per-class counts by majority label.
Dataset sample_imbalanced(const Dataset& d, std::size_t n_total, std::size_t n_positive,
                          std::uint64_t seed);

struct SyntheticConfig {
    std::size_t n_instances = 2000;
    std::size_t n_annotators = 8;
    std::size_t annotators_per_instance = 3;
    std::size_t n_topics = 5;
    std::size_t vocab_size = 60;
    std::size_t words_per_instance = 12;
    double positive_rate = 0.1;   // target base rate of positive judgements
    double noise_sd = 0.05;       // sd of per-judgement threshold noise
    std::size_t n_blocs = 2;      // annotator blocs with shared sensitivity profiles
    double bloc_spread = 0.05;    // within-bloc sensitivity jitter
};

// Topic-mixture texts over a synthetic vocabulary; each assigned annotator
// labels positive iff mixture . sensitivity exceeds their threshold plus noise.
// Fully deterministic given (cfg, seed).
Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

}  // namespace anno::data
