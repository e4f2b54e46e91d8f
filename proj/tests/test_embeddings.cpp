#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "anno/embeddings.hpp"
#include "anno/lda.hpp"

using namespace anno;

namespace {

data::Dataset small_dataset() {
    data::Dataset d;
    auto add = [&](const std::string& id, std::map<std::string, int> labels) {
        data::DatasetEntry e;
        e.instance_id = id;
        e.text = "t " + id;
        e.labels = std::move(labels);
        d.entries.push_back(e);
    };
    add("i0", {{"a", 1}, {"b", 0}});
    add("i1", {{"a", 0}, {"c", 0}});
    add("i2", {{"b", 1}, {"c", 1}});
    d.rebuild_annotator_index();
    return d;
}

}  // namespace

TEST_CASE("history matrix encodes +1/-1/0") {
    auto d = small_dataset();
    Eigen::MatrixXd h = embeddings::history_matrix(d);
    REQUIRE(h.rows() == 3);  // annotators a, b, c
    REQUIRE(h.cols() == 3);  // entries i0, i1, i2
    CHECK(h(0, 0) == 1.0);   // a labeled i0 hate
    CHECK(h(0, 1) == -1.0);  // a labeled i1 non-hate
    CHECK(h(0, 2) == 0.0);   // a did not see i2
    CHECK(h(1, 0) == -1.0);
    CHECK(h(1, 1) == 0.0);
    CHECK(h(1, 2) == 1.0);
    CHECK(h(2, 2) == 1.0);
}

TEST_CASE("history embeddings reduce to hidden size") {
    auto d = small_dataset();
    Eigen::MatrixXd h = embeddings::history_matrix(d);
    auto set = embeddings::build_history_embeddings(h, d.annotator_ids, 16, 3);
    CHECK(set.source == embeddings::Source::history);
    CHECK(set.dim == 16);
    CHECK_FALSE(set.frozen);
    CHECK(set.projection.rows() == 16);
    CHECK(set.projection.cols() == 3);
    Eigen::VectorXd v = set.vector_for("b");
    REQUIRE(v.size() == 16);
    Eigen::VectorXd expect = set.projection * h.row(1).transpose();
    CHECK((v - expect).cwiseAbs().maxCoeff() == 0.0);

    // deterministic per seed
    auto set2 = embeddings::build_history_embeddings(h, d.annotator_ids, 16, 3);
    CHECK((set.projection - set2.projection).cwiseAbs().maxCoeff() == 0.0);
    auto set3 = embeddings::build_history_embeddings(h, d.annotator_ids, 16, 4);
    CHECK((set.projection - set3.projection).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("learnt embeddings are trainable and seeded") {
    auto set = embeddings::build_learnt_embeddings({"a", "b"}, 8, 1);
    CHECK(set.source == embeddings::Source::learnt);
    CHECK_FALSE(set.frozen);
    CHECK(set.vectors.rows() == 2);
    CHECK(set.vectors.cols() == 8);
    CHECK(set.vector_for("a") != set.vector_for("b"));
    auto again = embeddings::build_learnt_embeddings({"a", "b"}, 8, 1);
    CHECK((set.vectors - again.vectors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ctr embeddings carry U rows and freeze by default") {
    lda::LdaModel l;
    l.K = 4;
    l.theta = Eigen::MatrixXd::Constant(5, 4, 0.25);
    l.phi = Eigen::MatrixXd::Constant(4, 2, 0.5);
    l.vocabulary = {"x", "y"};
    ctr::Ratings r;
    r.n_annotators = 2;
    r.n_items = 5;
    r.by_annotator.resize(2);
    r.by_item.resize(5);
    r.add(0, 0, 1.0);
    r.add(1, 1, 0.0);
    ctr::CtrHyperparams hyper;
    hyper.latent_dim = 4;
    hyper.em_iterations = 3;
    auto m = ctr::fit_ctr(l, r, hyper, {"a", "b"});

    auto set = embeddings::from_ctr(m);
    CHECK(set.source == embeddings::Source::ctr);
    CHECK(set.frozen);
    CHECK(set.dim == 4);
    CHECK((set.vector_for("a").transpose() - m.U.row(0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(set.index_of("b") == 1);
    CHECK(set.index_of("zz") == -1);
    CHECK_THROWS_AS(set.vector_for("zz"), std::invalid_argument);
}

TEST_CASE("embedding set JSON round-trip") {
    auto d = small_dataset();
    Eigen::MatrixXd h = embeddings::history_matrix(d);
    auto set = embeddings::build_history_embeddings(h, d.annotator_ids, 6, 9, true);
    auto back = embeddings::embedding_set_from_json(embeddings::to_json(set));
    CHECK(back.source == set.source);
    CHECK(back.dim == set.dim);
    CHECK(back.frozen == set.frozen);
    CHECK(back.ids == set.ids);
    CHECK((back.history - set.history).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.projection - set.projection).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.vector_for("c") - set.vector_for("c")).cwiseAbs().maxCoeff() == 0.0);

    auto learnt = embeddings::build_learnt_embeddings({"p", "q"}, 5, 2);
    auto back2 = embeddings::embedding_set_from_json(embeddings::to_json(learnt));
    CHECK((back2.vectors - learnt.vectors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("source string round-trip") {
    for (auto s : {embeddings::Source::ctr, embeddings::Source::history,
                   embeddings::Source::learnt})
        CHECK(embeddings::source_from_string(embeddings::to_string(s)) == s);
    CHECK_THROWS_AS(embeddings::source_from_string("bogus"), std::invalid_argument);
}
