#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "anno/data.hpp"

namespace anno::instances {

struct LabelTextConfig {
    std::string positive_text;
    std::string negative_text;
};

// The five label-pair presets: hate-not, misogynistic-not, hate-nothate,
// misogynistic-nonmisogynistic, yes-no.
LabelTextConfig label_preset(const std::string& name);
std::vector<std::string> label_preset_names();

struct TrainingInstance {
    std::string instance_id;
    std::string text;        // preprocessed text, no label suffix
    std::string label_text;  // appended after [SEP] when rendering
    std::string input_text;  // text + " [SEP] " + label_text
    std::vector<std::string> annotator_group;
    int target = 0;
};

struct EvalInstance {
    std::string instance_id;
    std::string text;
    std::string input_text;  // == text; label text is never appended
    std::vector<std::string> annotator_group;
    int target = 0;  // aggregated majority label
};

// One instance when the entry is unanimous, else two (one per label-choice
// group). With majority_target the loss target of each split instance is the
// entry's majority label instead of the group's own choice.
std::vector<TrainingInstance> build_training_instances(const data::DatasetEntry& entry,
                                                       const LabelTextConfig& cfg,
                                                       bool majority_target = false);

EvalInstance build_eval_instance(const data::DatasetEntry& entry);

// Lowercasing whitespace tokenizer with per-character fallback for
// out-of-vocabulary words. Ids 0..2 are [PAD], [UNK], [SEP].
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSep = 2;

    static Tokenizer build(const std::vector<std::string>& texts, std::size_t min_count = 1);

    std::vector<int> encode_word(const std::string& word) const;
    std::vector<int> encode(const std::string& text) const;  // no [SEP] handling

    std::size_t vocab_size() const { return id_to_token_.size(); }
    const std::vector<std::string>& vocabulary() const { return id_to_token_; }

    static Tokenizer from_vocabulary(std::vector<std::string> vocab);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Token ids for the instance: text tokens, plus [SEP] + label-text tokens for
// training instances. Truncated to max_len with the label suffix kept intact.
std::vector<int> render_tokens(const TrainingInstance& inst, const Tokenizer& tok,
                               std::size_t max_len = 128);
std::vector<int> render_tokens(const EvalInstance& inst, const Tokenizer& tok,
                               std::size_t max_len = 128);

}  // namespace anno::instances
