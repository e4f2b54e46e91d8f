#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "anno/ctr.hpp"
#include "anno/data.hpp"

namespace anno::embeddings {

enum class Source { ctr, history, learnt };

Source source_from_string(const std::string& s);
std::string to_string(Source s);

// Per-annotator vectors from one of the three sources. For the history source
// the stored rows are raw +1/0/-1 annotation histories and the effective
// vector is projection * row; ctr and learnt store the vectors directly.
struct AnnotatorEmbeddingSet {
    Source source = Source::ctr;
    std::size_t dim = 0;
    bool frozen = false;
    std::vector<std::string> ids;
    Eigen::MatrixXd vectors;     // A x dim (ctr, learnt)
    Eigen::MatrixXd history;     // A x N (history only)
    Eigen::MatrixXd projection;  // dim x N (history only, bias-free)

    int index_of(const std::string& id) const;  // -1 if unknown
    Eigen::VectorXd vector_for(const std::string& id) const;
};

// A x N matrix of +1 (hate), -1 (non-hate), 0 (not labeled); row order =
// train.annotator_ids, column order = train entry order.
Eigen::MatrixXd history_matrix(const data::Dataset& train);

// Seeded trainable linear reduction N -> hidden_size; weights ~ N(0, 1/N).
AnnotatorEmbeddingSet build_history_embeddings(const Eigen::MatrixXd& matrix,
                                               const std::vector<std::string>& ids,
                                               std::size_t hidden_size, std::uint64_t seed,
                                               bool frozen = false);

// Seeded random per-annotator vectors at hidden size, always trainable.
AnnotatorEmbeddingSet build_learnt_embeddings(const std::vector<std::string>& ids,
                                              std::size_t hidden_size, std::uint64_t seed);

AnnotatorEmbeddingSet from_ctr(const ctr::CtrModel& model, bool frozen = true);

std::string to_json(const AnnotatorEmbeddingSet& set);
AnnotatorEmbeddingSet embedding_set_from_json(const std::string& json_text);

}  // namespace anno::embeddings
