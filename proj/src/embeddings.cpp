#include "anno/embeddings.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace anno::embeddings {

Source source_from_string(const std::string& s) {
    if (s == "ctr") return Source::ctr;
    if (s == "history") return Source::history;
    if (s == "learnt") return Source::learnt;
    throw std::invalid_argument("unknown embedding source: " + s);
}

std::string to_string(Source s) {
    switch (s) {
        case Source::ctr: return "ctr";
        case Source::history: return "history";
        default: return "learnt";
    }
}

int AnnotatorEmbeddingSet::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == id) return static_cast<int>(i);
    return -1;
}

Eigen::VectorXd AnnotatorEmbeddingSet::vector_for(const std::string& id) const {
    const int i = index_of(id);
    if (i < 0) throw std::invalid_argument("unknown annotator: " + id);
    if (source == Source::history) return projection * history.row(i).transpose();
    return vectors.row(i).transpose();
}

Eigen::MatrixXd history_matrix(const data::Dataset& train) {
    if (train.entries.empty()) throw std::invalid_argument("empty training dataset");
    const auto A = static_cast<int>(train.annotator_ids.size());
    const auto N = static_cast<int>(train.entries.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(A, N);
    std::map<std::string, int> aidx;
    for (int i = 0; i < A; ++i) aidx[train.annotator_ids[i]] = i;
    for (int n = 0; n < N; ++n)
        for (const auto& [id, label] : train.entries[n].labels)
            m(aidx.at(id), n) = label == 1 ? 1.0 : -1.0;
    return m;
}

AnnotatorEmbeddingSet build_history_embeddings(const Eigen::MatrixXd& matrix,
                                               const std::vector<std::string>& ids,
                                               std::size_t hidden_size, std::uint64_t seed,
                                               bool frozen) {
    if (hidden_size < 1) throw std::invalid_argument("hidden_size must be >= 1");
    if (static_cast<std::size_t>(matrix.rows()) != ids.size())
        throw std::invalid_argument("history matrix rows != annotator count");
    AnnotatorEmbeddingSet set;
    set.source = Source::history;
    set.dim = hidden_size;
    set.frozen = frozen;
    set.ids = ids;
    set.history = matrix;
    const auto N = matrix.cols();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(N)));
    set.projection.resize(static_cast<int>(hidden_size), N);
    for (int r = 0; r < set.projection.rows(); ++r)
        for (int c = 0; c < set.projection.cols(); ++c) set.projection(r, c) = normal(rng);
    return set;
}

AnnotatorEmbeddingSet build_learnt_embeddings(const std::vector<std::string>& ids,
                                              std::size_t hidden_size, std::uint64_t seed) {
    AnnotatorEmbeddingSet set;
    set.source = Source::learnt;
    set.dim = hidden_size;
    set.frozen = false;
    set.ids = ids;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    set.vectors.resize(static_cast<int>(ids.size()), static_cast<int>(hidden_size));
    for (int r = 0; r < set.vectors.rows(); ++r)
        for (int c = 0; c < set.vectors.cols(); ++c) set.vectors(r, c) = normal(rng);
    return set;
}

AnnotatorEmbeddingSet from_ctr(const ctr::CtrModel& model, bool frozen) {
    AnnotatorEmbeddingSet set;
    set.source = Source::ctr;
    set.dim = model.lda.K;
    set.frozen = frozen;
    set.ids = model.annotator_ids;
    set.vectors = model.U;
    return set;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.size();
    if (rows == 0) return {};
    const auto cols = j.at(0).size();
    Eigen::MatrixXd m(static_cast<int>(rows), static_cast<int>(cols));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<int>(i), static_cast<int>(c)) = j.at(i).at(c).get<double>();
    return m;
}

}  // namespace

std::string to_json(const AnnotatorEmbeddingSet& set) {
    json j;
    j["source"] = to_string(set.source);
    j["dim"] = set.dim;
    j["frozen"] = set.frozen;
    j["annotator_ids"] = set.ids;
    j["vectors"] = matrix_to_json(set.vectors);
    if (set.source == Source::history) {
        j["history"] = matrix_to_json(set.history);
        j["projection"] = matrix_to_json(set.projection);
    }
    return j.dump(2);
}

AnnotatorEmbeddingSet embedding_set_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    AnnotatorEmbeddingSet set;
    set.source = source_from_string(j.at("source").get<std::string>());
    set.dim = j.at("dim").get<std::size_t>();
    set.frozen = j.at("frozen").get<bool>();
    set.ids = j.at("annotator_ids").get<std::vector<std::string>>();
    set.vectors = matrix_from_json(j.at("vectors"));
    if (set.source == Source::history) {
        set.history = matrix_from_json(j.at("history"));
        set.projection = matrix_from_json(j.at("projection"));
    }
    return set;
}

}  // namespace anno::embeddings
