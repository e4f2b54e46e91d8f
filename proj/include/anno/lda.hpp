#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace anno::lda {

struct LdaModel {
    std::size_t K = 0;
    Eigen::MatrixXd phi;    // K x V, rows sum to 1
    Eigen::MatrixXd theta;  // D x K, rows sum to 1
    std::vector<std::string> vocabulary;
    double alpha = 0.0;
    double beta = 0.0;
};

// Words occurring at least min_count times across the corpus, first-appearance order.
std::vector<std::string> build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                                          std::size_t min_count = 2);

// Collapsed Gibbs sampling; phi/theta are smoothed point estimates from the
// final sampler state. Deterministic given seed. Documents that are empty
// after vocabulary filtering get the uniform prior-only theta row.
LdaModel fit_lda(const std::vector<std::vector<std::string>>& corpus, std::size_t K,
                 std::size_t iterations, std::uint64_t seed,
                 std::size_t vocab_min_count = 2);

// Convenience: whitespace-split each text.
std::vector<std::vector<std::string>> tokenize_corpus(const std::vector<std::string>& texts);

}  // namespace anno::lda
