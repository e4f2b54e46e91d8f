#include "anno/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace anno::data {

int DatasetEntry::majority_label(bool ties_positive) const {
    std::size_t pos = 0;
    for (const auto& [id, l] : labels) pos += (l == 1);
    const std::size_t neg = labels.size() - pos;
    if (pos > neg) return 1;
    if (pos < neg) return 0;
    return ties_positive ? 1 : 0;
}

bool DatasetEntry::unanimous() const {
    if (labels.empty()) return true;
    const int first = labels.begin()->second;
    for (const auto& [id, l] : labels)
        if (l != first) return false;
    return true;
}

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::train: return "train";
        case SplitTag::val: return "val";
        case SplitTag::test: return "test";
        default: return "unsplit";
    }
}

SplitTag split_tag_from_string(const std::string& s) {
    if (s == "train") return SplitTag::train;
    if (s == "val") return SplitTag::val;
    if (s == "test") return SplitTag::test;
    if (s == "unsplit") return SplitTag::unsplit;
    throw std::invalid_argument("unknown split tag: " + s);
}

void Dataset::rebuild_annotator_index() {
    annotator_ids.clear();
    std::set<std::string> seen;
    for (const auto& e : entries)
        for (const auto& [id, l] : e.labels)
            if (seen.insert(id).second) annotator_ids.push_back(id);
}

namespace {

bool starts_with(const std::string& s, const char* prefix) {
    return s.rfind(prefix, 0) == 0;
}

}  // namespace

std::string preprocess_text(const std::string& raw) {
    std::istringstream in(raw);
    std::string token;
    std::string out;
    while (in >> token) {
        // strip non-ASCII first so the token-prefix rules see the final bytes
        std::string ascii;
        for (char c : token)
            if (static_cast<unsigned char>(c) < 128) ascii.push_back(c);
        token = std::move(ascii);
        if (!token.empty() && token[0] == '@') {
            token = "<user>";
        } else if (starts_with(token, "http://") || starts_with(token, "https://") ||
                   starts_with(token, "www.")) {
            token = "<url>";
        }
        if (token.empty()) continue;
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

Dataset load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);

    Dataset d;
    std::map<std::string, std::size_t> entry_index;
    std::set<std::pair<std::string, std::string>> seen_pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        AnnotationRecord rec;
        try {
            rec.instance_id = j.at("instance_id").get<std::string>();
            rec.text = j.at("text").get<std::string>();
            rec.annotator_id = j.at("annotator_id").get<std::string>();
            rec.label = j.at("label").get<int>();
            if (j.contains("split")) rec.split = j["split"].get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (rec.instance_id.empty() || rec.annotator_id.empty())
            throw ParseError("line " + std::to_string(line_no) +
                             ": empty instance_id or annotator_id");
        if (rec.label != 0 && rec.label != 1)
            throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1");
        if (!seen_pairs.insert({rec.instance_id, rec.annotator_id}).second)
            throw ParseError("line " + std::to_string(line_no) + ": duplicate (" +
                             rec.instance_id + ", " + rec.annotator_id + ")");

        auto it = entry_index.find(rec.instance_id);
        if (it == entry_index.end()) {
            entry_index[rec.instance_id] = d.entries.size();
            DatasetEntry e;
            e.instance_id = rec.instance_id;
            e.text = preprocess_text(rec.text);
            e.labels[rec.annotator_id] = rec.label;
            d.entries.push_back(std::move(e));
        } else {
            d.entries[it->second].labels[rec.annotator_id] = rec.label;
        }
        if (rec.split) d.official_split[rec.instance_id] = *rec.split;
    }
    d.rebuild_annotator_index();
    return d;
}

std::string to_json(const Dataset& d) {
    json j;
    j["split_tag"] = to_string(d.split_tag);
    j["annotator_ids"] = d.annotator_ids;
    json entries = json::array();
    for (const auto& e : d.entries) {
        json je;
        je["instance_id"] = e.instance_id;
        je["text"] = e.text;
        je["labels"] = e.labels;
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    if (!d.official_split.empty()) j["official_split"] = d.official_split;
    return j.dump(2);
}

Dataset dataset_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    Dataset d;
    d.split_tag = split_tag_from_string(j.at("split_tag").get<std::string>());
    d.annotator_ids = j.at("annotator_ids").get<std::vector<std::string>>();
    for (const auto& je : j.at("entries")) {
        DatasetEntry e;
        e.instance_id = je.at("instance_id").get<std::string>();
        e.text = je.at("text").get<std::string>();
        e.labels = je.at("labels").get<std::map<std::string, int>>();
        d.entries.push_back(std::move(e));
    }
    if (j.contains("official_split"))
        d.official_split = j["official_split"].get<std::map<std::string, std::string>>();
    return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << to_json(d) << "\n";
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return dataset_from_json(buf.str());
}

namespace {

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx, SplitTag tag) {
    Dataset out;
    out.split_tag = tag;
    for (std::size_t i : idx) out.entries.push_back(d.entries[i]);
    out.rebuild_annotator_index();
    return out;
}

}  // namespace

SplitResult split_dataset(const Dataset& d, double val_fraction, std::uint64_t seed,
                          double test_fraction) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("val_fraction must be in (0,1)");

    std::vector<std::size_t> train_pool, test_idx;
    if (!d.official_split.empty()) {
        for (std::size_t i = 0; i < d.entries.size(); ++i) {
            auto it = d.official_split.find(d.entries[i].instance_id);
            if (it != d.official_split.end() && it->second == "test")
                test_idx.push_back(i);
            else
                train_pool.push_back(i);
        }
    } else {
        std::vector<std::size_t> all(d.entries.size());
        std::iota(all.begin(), all.end(), 0);
        std::mt19937_64 rng(seed ^ 0x7e57u);
        std::shuffle(all.begin(), all.end(), rng);
        const std::size_t n_test =
            static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(all.size())));
        test_idx.assign(all.begin(), all.begin() + n_test);
        train_pool.assign(all.begin() + n_test, all.end());
        std::sort(test_idx.begin(), test_idx.end());
        std::sort(train_pool.begin(), train_pool.end());
    }
    if (train_pool.empty()) throw std::invalid_argument("empty train split");

    std::vector<std::size_t> shuffled = train_pool;
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::size_t n_val = static_cast<std::size_t>(
        std::floor(val_fraction * static_cast<double>(train_pool.size())));
    std::set<std::size_t> val_set(shuffled.begin(), shuffled.begin() + n_val);

    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i : train_pool)
        (val_set.count(i) ? val_idx : train_idx).push_back(i);

    return {subset(d, train_idx, SplitTag::train), subset(d, val_idx, SplitTag::val),
            subset(d, test_idx, SplitTag::test)};
}

Dataset sample_imbalanced(const Dataset& d, std::size_t n_total, std::size_t n_positive,
                          std::uint64_t seed) {
    if (n_positive > n_total) throw std::invalid_argument("n_positive > n_total");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < d.entries.size(); ++i)
        (d.entries[i].majority_label() == 1 ? pos : neg).push_back(i);
    const std::size_t n_negative = n_total - n_positive;
    if (pos.size() < n_positive || neg.size() < n_negative)
        throw std::invalid_argument(
            "insufficient entries: have " + std::to_string(pos.size()) + " positive, " +
            std::to_string(neg.size()) + " negative; need " + std::to_string(n_positive) +
            " and " + std::to_string(n_negative));

    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<std::size_t> chosen(pos.begin(), pos.begin() + n_positive);
    chosen.insert(chosen.end(), neg.begin(), neg.begin() + n_negative);
    std::sort(chosen.begin(), chosen.end());
    return subset(d, chosen, d.split_tag);
}

Dataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    if (cfg.annotators_per_instance > cfg.n_annotators)
        throw std::invalid_argument("annotators per instance exceeds annotator count");
    if (cfg.n_topics == 0 || cfg.vocab_size < cfg.n_topics)
        throw std::invalid_argument("need vocab_size >= n_topics >= 1");

    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma(0.3, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const std::size_t K = cfg.n_topics;
    const std::size_t A = cfg.n_annotators;

    // Bloc sensitivity profiles share a common component so that annotators
    // correlate on the bulk of instances and disagree on borderline ones.
    std::vector<double> global(K);
    for (std::size_t k = 0; k < K; ++k) global[k] = 0.5 + 0.5 * (k % 2 == 0);
    std::vector<std::vector<double>> bloc_center(cfg.n_blocs, std::vector<double>(K));
    for (std::size_t b = 0; b < cfg.n_blocs; ++b)
        for (std::size_t k = 0; k < K; ++k)
            bloc_center[b][k] = (k % cfg.n_blocs == b) ? 1.0 : 0.0;

    std::vector<std::vector<double>> sens(A, std::vector<double>(K));
    for (std::size_t i = 0; i < A; ++i) {
        const std::size_t b = i % cfg.n_blocs;
        for (std::size_t k = 0; k < K; ++k)
            sens[i][k] = 0.65 * global[k] + 0.35 * bloc_center[b][k] +
                         cfg.bloc_spread * normal(rng);
    }

    // Topic k owns a contiguous slice of the vocabulary.
    const std::size_t words_per_topic = cfg.vocab_size / K;

    struct Inst {
        std::vector<double> mix;
        std::string text;
        std::vector<std::size_t> annotators;
    };
    std::vector<Inst> insts(cfg.n_instances);
    for (auto& inst : insts) {
        inst.mix.resize(K);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            inst.mix[k] = std::max(gamma(rng), 1e-12);
            total += inst.mix[k];
        }
        for (auto& m : inst.mix) m /= total;

        std::ostringstream text;
        for (std::size_t w = 0; w < cfg.words_per_instance; ++w) {
            double u = unif(rng), acc = 0.0;
            std::size_t topic = K - 1;
            for (std::size_t k = 0; k < K; ++k) {
                acc += inst.mix[k];
                if (u <= acc) { topic = k; break; }
            }
            const std::size_t word =
                topic * words_per_topic +
                static_cast<std::size_t>(unif(rng) * static_cast<double>(words_per_topic));
            if (w) text << ' ';
            text << "w" << std::min(word, cfg.vocab_size - 1);
        }
        inst.text = text.str();

        std::vector<std::size_t> ids(A);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        inst.annotators.assign(ids.begin(), ids.begin() + cfg.annotators_per_instance);
        std::sort(inst.annotators.begin(), inst.annotators.end());
    }

    // Calibrate each annotator's threshold to the (1 - positive_rate) quantile
    // of their score over all instances, so per-judgement positive rates land
    // near the configured base rate.
    std::vector<double> thresholds(A);
    for (std::size_t i = 0; i < A; ++i) {
        std::vector<double> scores(cfg.n_instances);
        for (std::size_t n = 0; n < cfg.n_instances; ++n) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += insts[n].mix[k] * sens[i][k];
            scores[n] = s;
        }
        std::sort(scores.begin(), scores.end());
        const std::size_t q = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(cfg.n_instances - 1),
                             (1.0 - cfg.positive_rate) * static_cast<double>(cfg.n_instances)));
        thresholds[i] = scores[q];
    }

    Dataset d;
    d.split_tag = SplitTag::unsplit;
    for (std::size_t n = 0; n < cfg.n_instances; ++n) {
        DatasetEntry e;
        e.instance_id = "s" + std::to_string(n);
        e.text = preprocess_text(insts[n].text);
        for (std::size_t i : insts[n].annotators) {
            double score = 0.0;
            for (std::size_t k = 0; k < K; ++k) score += insts[n].mix[k] * sens[i][k];
            const double noisy = thresholds[i] + cfg.noise_sd * normal(rng);
            e.labels["a" + std::to_string(i)] = score > noisy ? 1 : 0;
        }
        d.entries.push_back(std::move(e));
    }
    d.rebuild_annotator_index();
    return d;
}

}  // namespace anno::data
