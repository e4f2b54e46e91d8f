#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "anno/data.hpp"
#include "anno/lda.hpp"

namespace anno::ctr {

struct CtrHyperparams {
    double a = 1.0;          // confidence on observed cells
    double b = 0.01;         // confidence on unobserved cells
    double lambda_u = 0.01;  // annotator-latent regularization
    double lambda_v = 100.0; // item-latent pull toward theta
    std::size_t em_iterations = 100;
    std::size_t latent_dim = 10;  // must equal LdaModel.K
};

// Sparse A x D binary rating matrix. r = 1 for a positive label, 0 for a
// negative one; unobserved cells are implicit zeros with confidence b.
struct Ratings {
    std::size_t n_annotators = 0;
    std::size_t n_items = 0;
    // per annotator: (item index, rating)
    std::vector<std::vector<std::pair<int, double>>> by_annotator;
    // per item: (annotator index, rating)
    std::vector<std::vector<std::pair<int, double>>> by_item;

    void add(std::size_t annotator, std::size_t item, double r);
};

// Builds ratings from a dataset; annotator/item order follows
// d.annotator_ids and d.entries.
Ratings ratings_from_dataset(const data::Dataset& d);

struct CtrModel {
    Eigen::MatrixXd U;  // A x K annotator latents
    Eigen::MatrixXd V;  // D x K item latents
    lda::LdaModel lda;
    CtrHyperparams hyper;
    Ratings ratings;
    std::vector<std::string> annotator_ids;
    std::vector<double> objective_trace;  // one value per EM sweep
};

// Alternating ridge sweeps over U then V, theta held fixed. U starts at zero
// and V at theta, so identical rating rows map to identical latents.
CtrModel fit_ctr(const lda::LdaModel& lda, const Ratings& ratings,
                 const CtrHyperparams& hyper,
                 std::vector<std::string> annotator_ids = {});

// Regularized weighted squared loss of the model, by direct summation.
double ctr_objective(const CtrModel& model);

Eigen::VectorXd annotator_vector(const CtrModel& model, const std::string& annotator_id);

enum class Pooling { mean, max, sum, concat };

Pooling pooling_from_string(const std::string& s);
std::string to_string(Pooling p);

// Element-wise mean/max/sum, or concatenation zero-padded to
// max_vectors * dim (concat only).
Eigen::VectorXd pool(const std::vector<Eigen::VectorXd>& vectors, Pooling strategy,
                     std::size_t max_vectors = 0);

// JSON round-trip; phi/theta elided unless include_lda.
std::string to_json(const CtrModel& model, bool include_lda = false);
CtrModel ctr_from_json(const std::string& json_text);

}  // namespace anno::ctr
