#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "anno/ctr.hpp"
#include "anno/lda.hpp"

using namespace anno;

namespace {

// naive double-loop objective, the independent oracle
double objective_bruteforce(const ctr::CtrModel& m) {
    const auto A = m.U.rows();
    const auto D = m.V.rows();
    std::vector<std::vector<double>> r(A, std::vector<double>(D, 0.0));
    std::vector<std::vector<bool>> obs(A, std::vector<bool>(D, false));
    for (std::size_t i = 0; i < m.ratings.by_annotator.size(); ++i)
        for (const auto& [j, v] : m.ratings.by_annotator[i]) {
            r[i][j] = v;
            obs[i][j] = true;
        }
    double loss = 0.0;
    for (Eigen::Index i = 0; i < A; ++i)
        for (Eigen::Index j = 0; j < D; ++j) {
            const double c = obs[i][j] ? m.hyper.a : m.hyper.b;
            const double diff = r[i][j] - m.U.row(i).dot(m.V.row(j));
            loss += c * diff * diff;
        }
    loss += m.hyper.lambda_u * m.U.squaredNorm();
    loss += m.hyper.lambda_v * (m.V - m.lda.theta).squaredNorm();
    return loss;
}

lda::LdaModel uniform_theta_lda(std::size_t D, std::size_t K) {
    lda::LdaModel m;
    m.K = K;
    m.theta = Eigen::MatrixXd::Constant(static_cast<int>(D), static_cast<int>(K),
                                        1.0 / static_cast<double>(K));
    m.phi = Eigen::MatrixXd::Constant(static_cast<int>(K), 2, 0.5);
    m.vocabulary = {"x", "y"};
    return m;
}

ctr::Ratings random_ratings(std::size_t A, std::size_t D, double density, std::uint64_t seed) {
    ctr::Ratings r;
    r.n_annotators = A;
    r.n_items = D;
    r.by_annotator.resize(A);
    r.by_item.resize(D);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < A; ++i)
        for (std::size_t j = 0; j < D; ++j)
            if (unif(rng) < density) r.add(i, j, unif(rng) < 0.5 ? 1.0 : 0.0);
    return r;
}

}  // namespace

TEST_CASE("LDA normalization and determinism") {
    std::vector<std::string> texts;
    for (int i = 0; i < 30; ++i)
        texts.push_back(i % 2 ? "apple banana apple fruit banana"
                              : "engine wheel engine brake wheel");
    auto corpus = lda::tokenize_corpus(texts);
    auto m = lda::fit_lda(corpus, 3, 50, 42);
    for (int k = 0; k < m.phi.rows(); ++k) CHECK(m.phi.row(k).sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int d = 0; d < m.theta.rows(); ++d)
        CHECK(m.theta.row(d).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.phi.minCoeff() >= 0.0);
    CHECK(m.theta.minCoeff() >= 0.0);

    auto m2 = lda::fit_lda(corpus, 3, 50, 42);
    CHECK((m.phi - m2.phi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m.theta - m2.theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("LDA K=1 gives all-ones theta") {
    auto corpus = lda::tokenize_corpus({"a b a b", "b a b a"});
    auto m = lda::fit_lda(corpus, 1, 10, 1, 1);
    for (int d = 0; d < m.theta.rows(); ++d) CHECK(m.theta(d, 0) == doctest::Approx(1.0));
}

TEST_CASE("LDA separates disjoint vocabulary groups") {
    // long documents so the smoothed point estimate can concentrate
    std::string doc_a, doc_b;
    for (int i = 0; i < 100; ++i) {
        doc_a += "apple banana cherry ";
        doc_b += "engine wheel brake ";
    }
    std::vector<std::string> texts;
    for (int i = 0; i < 10; ++i) texts.push_back(i % 2 ? doc_a : doc_b);
    auto m = lda::fit_lda(lda::tokenize_corpus(texts), 2, 100, 7);
    for (int d = 0; d < m.theta.rows(); ++d)
        CHECK(m.theta.row(d).maxCoeff() >= 0.9);
}

TEST_CASE("ctr_objective matches brute force") {
    auto lda_model = uniform_theta_lda(12, 4);
    auto ratings = random_ratings(5, 12, 0.4, 3);
    ctr::CtrHyperparams hyper;
    hyper.latent_dim = 4;
    hyper.em_iterations = 3;
    auto m = ctr::fit_ctr(lda_model, ratings, hyper);
    CHECK(ctr_objective(m) == doctest::Approx(objective_bruteforce(m)).epsilon(1e-12));
    CHECK(ctr_objective(m) >= 0.0);

    // U = 0, V = theta plug-in: objective = sum over observed a * r^2 + regularizer 0
    ctr::CtrModel zero = m;
    zero.U.setZero();
    zero.V = zero.lda.theta;
    double expect = 0.0;
    for (const auto& row : ratings.by_annotator)
        for (const auto& [j, r] : row) {
            const double pred = 0.0;
            expect += hyper.a * (r - pred) * (r - pred);
        }
    // unobserved cells contribute b * (0 - u.v)^2 = 0 since U = 0... except
    // observed cells already counted; V=theta makes the V-regularizer vanish
    CHECK(ctr_objective(zero) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(ctr_objective(zero) == doctest::Approx(objective_bruteforce(zero)).epsilon(1e-12));
}

TEST_CASE("EM objective trace is non-increasing") {
    auto lda_model = uniform_theta_lda(40, 5);
    auto ratings = random_ratings(8, 40, 0.3, 11);
    ctr::CtrHyperparams hyper;
    hyper.latent_dim = 5;
    hyper.em_iterations = 30;
    auto m = ctr::fit_ctr(lda_model, ratings, hyper);
    REQUIRE(m.objective_trace.size() == 30);
    for (std::size_t i = 1; i < m.objective_trace.size(); ++i)
        CHECK(m.objective_trace[i] <=
              m.objective_trace[i - 1] * (1.0 + 1e-9) + 1e-12);
}

TEST_CASE("identical rating rows give identical latents") {
    auto lda_model = uniform_theta_lda(20, 3);
    ctr::Ratings r;
    r.n_annotators = 3;
    r.n_items = 20;
    r.by_annotator.resize(3);
    r.by_item.resize(20);
    for (std::size_t j = 0; j < 20; j += 2) {
        r.add(0, j, j % 4 == 0 ? 1.0 : 0.0);
        r.add(1, j, j % 4 == 0 ? 1.0 : 0.0);  // same as annotator 0
        r.add(2, j + 1, 1.0);
    }
    ctr::CtrHyperparams hyper;
    hyper.latent_dim = 3;
    hyper.em_iterations = 10;
    auto m = ctr::fit_ctr(lda_model, r, hyper);
    CHECK((m.U.row(0) - m.U.row(1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.U.row(0) - m.U.row(2)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("K=1 single-cell fixed point") {
    auto lda_model = uniform_theta_lda(1, 1);  // theta = 1
    ctr::Ratings r;
    r.n_annotators = 1;
    r.n_items = 1;
    r.by_annotator.resize(1);
    r.by_item.resize(1);
    r.add(0, 0, 1.0);
    ctr::CtrHyperparams hyper;
    hyper.a = 1.0;
    hyper.b = 0.5;  // irrelevant: no unobserved cells
    hyper.lambda_u = 0.1;
    hyper.lambda_v = 0.2;
    hyper.latent_dim = 1;
    hyper.em_iterations = 200;
    auto m = ctr::fit_ctr(lda_model, r, hyper);

    // independent fixed-point iteration of u = v/(v^2+l_u), v = (u+l_v)/(u^2+l_v)
    double u = 0.0, v = 1.0;
    for (int it = 0; it < 10000; ++it) {
        u = v / (v * v + hyper.lambda_u);
        v = (u + hyper.lambda_v) / (u * u + hyper.lambda_v);
    }
    CHECK(m.U(0, 0) == doctest::Approx(u).epsilon(1e-10));
    CHECK(m.V(0, 0) == doctest::Approx(v).epsilon(1e-10));
}

TEST_CASE("first-sweep U rows match a generic least-squares oracle") {
    const std::size_t A = 4, D = 15, K = 3;
    auto lda_model = uniform_theta_lda(D, K);
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int d = 0; d < lda_model.theta.rows(); ++d) {
        for (int k = 0; k < lda_model.theta.cols(); ++k)
            lda_model.theta(d, k) = std::abs(normal(rng)) + 0.01;
        lda_model.theta.row(d) /= lda_model.theta.row(d).sum();
    }
    auto ratings = random_ratings(A, D, 0.5, 8);
    ctr::CtrHyperparams hyper;
    hyper.latent_dim = K;
    hyper.em_iterations = 1;
    auto m = ctr::fit_ctr(lda_model, ratings, hyper);

    // oracle: weighted ridge as an augmented least-squares problem solved by QR
    const Eigen::MatrixXd& V = lda_model.theta;  // U update ran against V = theta
    for (std::size_t i = 0; i < A; ++i) {
        std::vector<double> conf(D, hyper.b), targ(D, 0.0);
        for (const auto& [j, r] : ratings.by_annotator[i]) {
            conf[static_cast<std::size_t>(j)] = hyper.a;
            targ[static_cast<std::size_t>(j)] = r;
        }
        Eigen::MatrixXd X(D + K, K);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<int>(D + K));
        for (std::size_t j = 0; j < D; ++j) {
            X.row(static_cast<int>(j)) = std::sqrt(conf[j]) * V.row(static_cast<int>(j));
            y(static_cast<int>(j)) = std::sqrt(conf[j]) * targ[j];
        }
        X.bottomRows(static_cast<int>(K)) =
            std::sqrt(hyper.lambda_u) *
            Eigen::MatrixXd::Identity(static_cast<int>(K), static_cast<int>(K));
        const Eigen::VectorXd u = X.colPivHouseholderQr().solve(y);
        CHECK((m.U.row(static_cast<int>(i)).transpose() - u).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("annotator permutation permutes U rows") {
    auto lda_model = uniform_theta_lda(25, 4);
    auto ratings = random_ratings(6, 25, 0.4, 17);
    ctr::CtrHyperparams hyper;
    hyper.latent_dim = 4;
    hyper.em_iterations = 8;
    auto m = ctr::fit_ctr(lda_model, ratings, hyper);

    // reverse annotator order
    ctr::Ratings perm;
    perm.n_annotators = 6;
    perm.n_items = 25;
    perm.by_annotator.resize(6);
    perm.by_item.resize(25);
    for (std::size_t i = 0; i < 6; ++i)
        for (const auto& [j, r] : ratings.by_annotator[i])
            perm.add(5 - i, static_cast<std::size_t>(j), r);
    auto mp = ctr::fit_ctr(lda_model, perm, hyper);
    for (int i = 0; i < 6; ++i)
        CHECK((m.U.row(i) - mp.U.row(5 - i)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("annotator_vector lookup") {
    auto lda_model = uniform_theta_lda(10, 10);
    auto ratings = random_ratings(3, 10, 0.5, 2);
    ctr::CtrHyperparams hyper;
    hyper.em_iterations = 2;
    auto m = ctr::fit_ctr(lda_model, ratings, hyper, {"x", "y", "z"});
    CHECK(annotator_vector(m, "y").size() == 10);
    CHECK_THROWS_AS(annotator_vector(m, "nope"), std::invalid_argument);
    CHECK(annotator_vector(m, "x") == annotator_vector(m, "x"));
}

TEST_CASE("pooling strategies") {
    Eigen::VectorXd a(2), b(2);
    a << 1, 2;
    b << 3, 4;
    const std::vector<Eigen::VectorXd> vs{a, b};

    Eigen::VectorXd mean = ctr::pool(vs, ctr::Pooling::mean);
    CHECK(mean(0) == 2.0);
    CHECK(mean(1) == 3.0);
    Eigen::VectorXd sum = ctr::pool(vs, ctr::Pooling::sum);
    CHECK(sum(0) == 4.0);
    Eigen::VectorXd mx(2), m2(2);
    mx << 1, 5;
    m2 << 4, 2;
    Eigen::VectorXd mp = ctr::pool({mx, m2}, ctr::Pooling::max);
    CHECK(mp(0) == 4.0);
    CHECK(mp(1) == 5.0);

    // single vector identity (non-concat)
    for (auto strat : {ctr::Pooling::mean, ctr::Pooling::max, ctr::Pooling::sum})
        CHECK((ctr::pool({a}, strat) - a).cwiseAbs().maxCoeff() == 0.0);

    // order invariance
    for (auto strat : {ctr::Pooling::mean, ctr::Pooling::max, ctr::Pooling::sum})
        CHECK((ctr::pool({a, b}, strat) - ctr::pool({b, a}, strat)).cwiseAbs().maxCoeff() ==
              0.0);

    Eigen::VectorXd cat = ctr::pool(vs, ctr::Pooling::concat, 3);
    REQUIRE(cat.size() == 6);
    CHECK(cat(0) == 1.0);
    CHECK(cat(3) == 4.0);
    CHECK(cat(4) == 0.0);
    CHECK_THROWS_AS(ctr::pool(vs, ctr::Pooling::concat, 1), std::invalid_argument);
    CHECK_THROWS_AS(ctr::pool({}, ctr::Pooling::mean), std::invalid_argument);
}

TEST_CASE("CTR model JSON round-trip") {
    auto lda_model = uniform_theta_lda(6, 2);
    auto ratings = random_ratings(3, 6, 0.5, 5);
    ctr::CtrHyperparams hyper;
    hyper.latent_dim = 2;
    hyper.em_iterations = 2;
    auto m = ctr::fit_ctr(lda_model, ratings, hyper, {"p", "q", "r"});
    auto m2 = ctr::ctr_from_json(ctr::to_json(m));
    CHECK((m.U - m2.U).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m.V - m2.V).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m2.annotator_ids == m.annotator_ids);
    CHECK(m2.objective_trace == m.objective_trace);
}
