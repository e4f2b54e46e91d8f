#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "anno/data.hpp"
#include "anno/embeddings.hpp"

namespace anno::analysis {

struct PcaResult {
    Eigen::MatrixXd coordinates;          // A x n_components
    std::vector<double> variance_ratios;  // non-increasing, each in [0,1]
};

// Exact eigendecomposition of the centered covariance.
PcaResult pca_project(const Eigen::MatrixXd& embeddings, std::size_t n_components);

// Seeded multi-restart Lloyd's algorithm (10 restarts, best inertia).
std::vector<int> kmeans(const Eigen::MatrixXd& embeddings, std::size_t k, std::uint64_t seed);

// Cohen's kappa over co-annotated instances only; throws when a and b share
// no instance. Returns 1 for the degenerate all-agree case with p_e = 1.
double cohen_kappa(const std::string& a, const std::string& b, const data::Dataset& data);

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct PairRecord {
    std::string annotator_a, annotator_b;
    double kappa = 0.0;
    double cosine_distance = 0.0;
    std::size_t overlap_count = 0;
};

struct AgreementReport {
    std::vector<PairRecord> pairs;  // unordered pairs, each once
    double pearson_r = 0.0;
    std::map<std::string, int> clusters;
    std::map<int, double> per_cluster_r;  // within-cluster correlations (extension)
};

// Pearson's r between kappa and cosine distance over all annotator pairs
// with label overlap. Throws when fewer than 3 valid pairs exist or either
// variable is constant.
AgreementReport kappa_cosine_correlation(const embeddings::AnnotatorEmbeddingSet& set,
                                         const data::Dataset& data, std::size_t kmeans_k = 2,
                                         std::uint64_t seed = 0);

std::string to_json(const AgreementReport& r);
AgreementReport agreement_report_from_json(const std::string& json_text);

// Writes annotators_pca.svg/.json and kappa_cosine.svg/.json under out_dir;
// returns the four paths. Axis labels carry variance-explained percentages.
std::vector<std::string> emit_plots(const AgreementReport& report, const PcaResult& pca,
                                    const std::vector<std::string>& annotator_ids,
                                    const std::string& out_dir);

}  // namespace anno::analysis
