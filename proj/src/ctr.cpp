#include "anno/ctr.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace anno::ctr {

void Ratings::add(std::size_t annotator, std::size_t item, double r) {
    if (annotator >= n_annotators || item >= n_items)
        throw std::out_of_range("rating index out of range");
    by_annotator[annotator].emplace_back(static_cast<int>(item), r);
    by_item[item].emplace_back(static_cast<int>(annotator), r);
}

Ratings ratings_from_dataset(const data::Dataset& d) {
    Ratings r;
    r.n_annotators = d.annotator_ids.size();
    r.n_items = d.entries.size();
    r.by_annotator.resize(r.n_annotators);
    r.by_item.resize(r.n_items);
    std::map<std::string, std::size_t> aidx;
    for (std::size_t i = 0; i < d.annotator_ids.size(); ++i) aidx[d.annotator_ids[i]] = i;
    for (std::size_t j = 0; j < d.entries.size(); ++j)
        for (const auto& [id, label] : d.entries[j].labels)
            r.add(aidx.at(id), j, label == 1 ? 1.0 : 0.0);
    return r;
}

namespace {

void check_hyper(const CtrHyperparams& h, const lda::LdaModel& lda) {
    if (!(h.a > h.b && h.b > 0.0)) throw std::invalid_argument("need a > b > 0");
    if (h.lambda_u <= 0.0 || h.lambda_v <= 0.0)
        throw std::invalid_argument("lambda_u, lambda_v must be > 0");
    if (h.latent_dim != lda.K)
        throw std::invalid_argument("latent_dim must equal LDA topic count");
}

}  // namespace

CtrModel fit_ctr(const lda::LdaModel& lda, const Ratings& ratings, const CtrHyperparams& hyper,
                 std::vector<std::string> annotator_ids) {
    check_hyper(hyper, lda);
    const auto A = static_cast<int>(ratings.n_annotators);
    const auto D = static_cast<int>(ratings.n_items);
    const auto K = static_cast<int>(lda.K);
    if (lda.theta.rows() != D) throw std::invalid_argument("theta row count != item count");

    CtrModel model;
    model.lda = lda;
    model.hyper = hyper;
    model.ratings = ratings;
    model.annotator_ids = std::move(annotator_ids);
    if (model.annotator_ids.empty())
        for (int i = 0; i < A; ++i) model.annotator_ids.push_back("a" + std::to_string(i));
    model.U = Eigen::MatrixXd::Zero(A, K);
    model.V = lda.theta;

    const double a = hyper.a, b = hyper.b;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(K, K);

    for (std::size_t sweep = 0; sweep < hyper.em_iterations; ++sweep) {
        // U half-sweep (V fixed): per-row ridge solves, independent of each other.
        const Eigen::MatrixXd VtV = model.V.transpose() * model.V;
        for (int i = 0; i < A; ++i) {
            Eigen::MatrixXd M = b * VtV + hyper.lambda_u * I;
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
            for (const auto& [j, r] : ratings.by_annotator[i]) {
                const Eigen::VectorXd vj = model.V.row(j).transpose();
                M.noalias() += (a - b) * vj * vj.transpose();
                rhs.noalias() += a * r * vj;
            }
            Eigen::LLT<Eigen::MatrixXd> llt(M);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("singular normal-equation matrix in U update");
            model.U.row(i) = llt.solve(rhs).transpose();
        }

        // V half-sweep (U fixed).
        const Eigen::MatrixXd UtU = model.U.transpose() * model.U;
        for (int j = 0; j < D; ++j) {
            Eigen::MatrixXd M = b * UtU + hyper.lambda_v * I;
            Eigen::VectorXd rhs = hyper.lambda_v * lda.theta.row(j).transpose();
            for (const auto& [i, r] : ratings.by_item[j]) {
                const Eigen::VectorXd ui = model.U.row(i).transpose();
                M.noalias() += (a - b) * ui * ui.transpose();
                rhs.noalias() += a * r * ui;
            }
            Eigen::LLT<Eigen::MatrixXd> llt(M);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("singular normal-equation matrix in V update");
            model.V.row(j) = llt.solve(rhs).transpose();
        }

        model.objective_trace.push_back(ctr_objective(model));
    }
    return model;
}

double ctr_objective(const CtrModel& model) {
    const auto& h = model.hyper;
    // b * sum_ij (u_i . v_j)^2 via trace((U'U)(V'V)), then correct observed cells.
    const Eigen::MatrixXd UtU = model.U.transpose() * model.U;
    const Eigen::MatrixXd VtV = model.V.transpose() * model.V;
    double loss = h.b * (UtU.cwiseProduct(VtV)).sum();
    for (std::size_t i = 0; i < model.ratings.by_annotator.size(); ++i) {
        for (const auto& [j, r] : model.ratings.by_annotator[i]) {
            const double pred = model.U.row(static_cast<int>(i)).dot(model.V.row(j));
            loss += h.a * (r - pred) * (r - pred) - h.b * pred * pred;
        }
    }
    loss += h.lambda_u * model.U.squaredNorm();
    loss += h.lambda_v * (model.V - model.lda.theta).squaredNorm();
    return loss;
}

Eigen::VectorXd annotator_vector(const CtrModel& model, const std::string& annotator_id) {
    auto it = std::find(model.annotator_ids.begin(), model.annotator_ids.end(), annotator_id);
    if (it == model.annotator_ids.end())
        throw std::invalid_argument("unknown annotator: " + annotator_id);
    const auto i = static_cast<int>(it - model.annotator_ids.begin());
    return model.U.row(i).transpose();
}

Pooling pooling_from_string(const std::string& s) {
    if (s == "mean") return Pooling::mean;
    if (s == "max") return Pooling::max;
    if (s == "sum") return Pooling::sum;
    if (s == "concat") return Pooling::concat;
    throw std::invalid_argument("unknown pooling: " + s);
}

std::string to_string(Pooling p) {
    switch (p) {
        case Pooling::mean: return "mean";
        case Pooling::max: return "max";
        case Pooling::sum: return "sum";
        default: return "concat";
    }
}

Eigen::VectorXd pool(const std::vector<Eigen::VectorXd>& vectors, Pooling strategy,
                     std::size_t max_vectors) {
    if (vectors.empty()) throw std::invalid_argument("cannot pool an empty list");
    const auto dim = vectors.front().size();
    for (const auto& v : vectors)
        if (v.size() != dim) throw std::invalid_argument("pooled vectors must share dimension");

    switch (strategy) {
        case Pooling::mean: {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
            for (const auto& v : vectors) out += v;
            return out / static_cast<double>(vectors.size());
        }
        case Pooling::sum: {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
            for (const auto& v : vectors) out += v;
            return out;
        }
        case Pooling::max: {
            Eigen::VectorXd out = vectors.front();
            for (const auto& v : vectors) out = out.cwiseMax(v);
            return out;
        }
        case Pooling::concat: {
            const std::size_t cap = max_vectors == 0 ? vectors.size() : max_vectors;
            if (vectors.size() > cap)
                throw std::invalid_argument("concat pooling: more vectors than configured max");
            Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cap) * dim);
            for (std::size_t i = 0; i < vectors.size(); ++i)
                out.segment(static_cast<Eigen::Index>(i) * dim, dim) = vectors[i];
            return out;
        }
    }
    throw std::logic_error("unreachable");
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

std::string to_json(const CtrModel& model, bool include_lda) {
    json j;
    j["K"] = model.lda.K;
    j["hyper"] = {{"a", model.hyper.a},
                  {"b", model.hyper.b},
                  {"lambda_u", model.hyper.lambda_u},
                  {"lambda_v", model.hyper.lambda_v},
                  {"em_iterations", model.hyper.em_iterations},
                  {"latent_dim", model.hyper.latent_dim}};
    j["annotator_ids"] = model.annotator_ids;
    j["U"] = matrix_to_json(model.U);
    j["V"] = matrix_to_json(model.V);
    j["vocabulary"] = model.lda.vocabulary;
    j["objective_trace"] = model.objective_trace;
    if (include_lda) {
        j["phi"] = matrix_to_json(model.lda.phi);
        j["theta"] = matrix_to_json(model.lda.theta);
        j["alpha"] = model.lda.alpha;
        j["beta"] = model.lda.beta;
    }
    return j.dump(2);
}

CtrModel ctr_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    CtrModel model;
    model.lda.K = j.at("K").get<std::size_t>();
    const auto& h = j.at("hyper");
    model.hyper.a = h.at("a").get<double>();
    model.hyper.b = h.at("b").get<double>();
    model.hyper.lambda_u = h.at("lambda_u").get<double>();
    model.hyper.lambda_v = h.at("lambda_v").get<double>();
    model.hyper.em_iterations = h.at("em_iterations").get<std::size_t>();
    model.hyper.latent_dim = h.at("latent_dim").get<std::size_t>();
    model.annotator_ids = j.at("annotator_ids").get<std::vector<std::string>>();
    model.U = matrix_from_json(j.at("U"));
    model.V = matrix_from_json(j.at("V"));
    model.lda.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    model.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    if (j.contains("phi")) {
        model.lda.phi = matrix_from_json(j["phi"]);
        model.lda.theta = matrix_from_json(j["theta"]);
        model.lda.alpha = j.at("alpha").get<double>();
        model.lda.beta = j.at("beta").get<double>();
    }
    return model;
}

}  // namespace anno::ctr
