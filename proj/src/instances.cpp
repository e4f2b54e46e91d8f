#include "anno/instances.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

namespace anno::instances {

LabelTextConfig label_preset(const std::string& name) {
    if (name == "hate-not") return {"hate", "not"};
    if (name == "misogynistic-not") return {"misogynistic", "not"};
    if (name == "hate-nothate") return {"hate", "not hate"};
    if (name == "misogynistic-nonmisogynistic") return {"misogynistic", "nonmisogynistic"};
    if (name == "yes-no") return {"yes", "no"};
    throw std::invalid_argument("unknown label preset: " + name);
}

std::vector<std::string> label_preset_names() {
    return {"hate-not", "misogynistic-not", "hate-nothate", "misogynistic-nonmisogynistic",
            "yes-no"};
}

namespace {

void check_cfg(const LabelTextConfig& cfg) {
    if (cfg.positive_text.empty() || cfg.negative_text.empty())
        throw std::invalid_argument("label texts must be non-empty");
    if (cfg.positive_text == cfg.negative_text)
        throw std::invalid_argument("label texts must differ");
}

TrainingInstance make_training(const data::DatasetEntry& entry, const LabelTextConfig& cfg,
                               std::vector<std::string> group, int choice, int target) {
    TrainingInstance inst;
    inst.instance_id = entry.instance_id;
    inst.text = entry.text;
    inst.label_text = choice == 1 ? cfg.positive_text : cfg.negative_text;
    inst.input_text = entry.text + " [SEP] " + inst.label_text;
    inst.annotator_group = std::move(group);
    inst.target = target;
    return inst;
}

}  // namespace

std::vector<TrainingInstance> build_training_instances(const data::DatasetEntry& entry,
                                                       const LabelTextConfig& cfg,
                                                       bool majority_target) {
    check_cfg(cfg);
    if (entry.labels.empty()) throw std::invalid_argument("entry has no labels");

    std::vector<std::string> positive, negative;
    for (const auto& [id, label] : entry.labels)
        (label == 1 ? positive : negative).push_back(id);

    const int majority = entry.majority_label();
    std::vector<TrainingInstance> out;
    if (positive.empty() || negative.empty()) {
        const int choice = positive.empty() ? 0 : 1;
        auto group = positive.empty() ? std::move(negative) : std::move(positive);
        out.push_back(make_training(entry, cfg, std::move(group), choice, choice));
    } else {
        out.push_back(make_training(entry, cfg, std::move(positive), 1,
                                    majority_target ? majority : 1));
        out.push_back(make_training(entry, cfg, std::move(negative), 0,
                                    majority_target ? majority : 0));
    }
    return out;
}

EvalInstance build_eval_instance(const data::DatasetEntry& entry) {
    if (entry.labels.empty()) throw std::invalid_argument("entry has no labels");
    EvalInstance inst;
    inst.instance_id = entry.instance_id;
    inst.text = entry.text;
    inst.input_text = entry.text;
    for (const auto& [id, label] : entry.labels) inst.annotator_group.push_back(id);
    inst.target = entry.majority_label();
    return inst;
}

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(lower(w));
    return words;
}

}  // namespace

Tokenizer Tokenizer::build(const std::vector<std::string>& texts, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    std::vector<std::string> order;
    std::vector<std::string> chars;
    std::unordered_map<std::string, bool> char_seen;
    for (const auto& t : texts) {
        for (const auto& w : split_words(t)) {
            if (++counts[w] == 1) order.push_back(w);
            for (char c : w) {
                std::string s(1, c);
                if (!char_seen[s]) {
                    char_seen[s] = true;
                    chars.push_back(s);
                }
            }
        }
    }
    std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[SEP]"};
    for (const auto& w : order)
        if (counts[w] >= min_count) vocab.push_back(w);
    for (const auto& c : chars)
        if (!std::count(vocab.begin(), vocab.end(), c)) vocab.push_back(c);
    return from_vocabulary(std::move(vocab));
}

Tokenizer Tokenizer::from_vocabulary(std::vector<std::string> vocab) {
    Tokenizer tok;
    tok.id_to_token_ = std::move(vocab);
    for (std::size_t i = 0; i < tok.id_to_token_.size(); ++i)
        tok.token_to_id_[tok.id_to_token_[i]] = static_cast<int>(i);
    return tok;
}

std::vector<int> Tokenizer::encode_word(const std::string& word) const {
    const std::string w = lower(word);
    auto it = token_to_id_.find(w);
    if (it != token_to_id_.end()) return {it->second};
    // character fallback
    std::vector<int> ids;
    for (char c : w) {
        auto cit = token_to_id_.find(std::string(1, c));
        ids.push_back(cit != token_to_id_.end() ? cit->second : kUnk);
    }
    if (ids.empty()) ids.push_back(kUnk);
    return ids;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) {
        auto wi = encode_word(w);
        ids.insert(ids.end(), wi.begin(), wi.end());
    }
    return ids;
}

namespace {

std::vector<int> render(const std::string& text, const std::string& label_text,
                        const Tokenizer& tok, std::size_t max_len) {
    std::vector<int> ids = tok.encode(text);
    if (label_text.empty()) {
        if (ids.size() > max_len) ids.resize(max_len);
        return ids;
    }
    std::vector<int> suffix = {Tokenizer::kSep};
    const auto label_ids = tok.encode(label_text);
    suffix.insert(suffix.end(), label_ids.begin(), label_ids.end());
    if (suffix.size() >= max_len)
        throw std::invalid_argument("max_len too small for the label-text suffix");
    if (ids.size() + suffix.size() > max_len) ids.resize(max_len - suffix.size());
    ids.insert(ids.end(), suffix.begin(), suffix.end());
    return ids;
}

}  // namespace

std::vector<int> render_tokens(const TrainingInstance& inst, const Tokenizer& tok,
                               std::size_t max_len) {
    return render(inst.text, inst.label_text, tok, max_len);
}

std::vector<int> render_tokens(const EvalInstance& inst, const Tokenizer& tok,
                               std::size_t max_len) {
    return render(inst.text, "", tok, max_len);
}

}  // namespace anno::instances
