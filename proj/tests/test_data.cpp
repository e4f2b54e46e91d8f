#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "anno/data.hpp"

using namespace anno::data;

namespace {

std::string write_temp(const std::string& content) {
    static int counter = 0;
    std::string path = "test_data_tmp_" + std::to_string(counter++) + ".jsonl";
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("preprocess_text replacement rules") {
    CHECK(preprocess_text("@bob read https://x.io now") == "<user> read <url> now");
    CHECK(preprocess_text("caf\xc3\xa9  latte") == "caf latte");
    CHECK(preprocess_text("") == "");
    CHECK(preprocess_text("  see www.example.com  ") == "see <url>");
    CHECK(preprocess_text("a   b\t\nc") == "a b c");
    CHECK(preprocess_text("http://a.b c @x") == "<url> c <user>");
}

TEST_CASE("preprocess_text is idempotent") {
    std::mt19937_64 rng(7);
    const std::string alphabet = "ab @:/.wht\xc3\xa9";
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        const auto len = rng() % 40;
        for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
        const std::string once = preprocess_text(s);
        CHECK(preprocess_text(once) == once);
    }
}

TEST_CASE("load_annotations groups by instance") {
    const std::string path = write_temp(
        R"({"instance_id":"i1","text":"hello @a","annotator_id":"a","label":1})"
        "\n"
        R"({"instance_id":"i1","text":"hello @a","annotator_id":"b","label":0})"
        "\n"
        R"({"instance_id":"i1","text":"hello @a","annotator_id":"c","label":1})"
        "\n");
    Dataset d = load_annotations(path);
    REQUIRE(d.entries.size() == 1);
    CHECK(d.entries[0].labels.size() == 3);
    CHECK(d.entries[0].text == "hello <user>");
    CHECK(d.annotator_ids == std::vector<std::string>{"a", "b", "c"});
    std::remove(path.c_str());
}

TEST_CASE("load_annotations rejects duplicates and malformed lines") {
    const std::string dup = write_temp(
        R"({"instance_id":"i1","text":"t","annotator_id":"a","label":1})"
        "\n"
        R"({"instance_id":"i1","text":"t","annotator_id":"a","label":0})"
        "\n");
    CHECK_THROWS_WITH_AS(load_annotations(dup), doctest::Contains("line 2"), ParseError);
    std::remove(dup.c_str());

    const std::string bad = write_temp("not json\n");
    CHECK_THROWS_WITH_AS(load_annotations(bad), doctest::Contains("line 1"), ParseError);
    std::remove(bad.c_str());
}

TEST_CASE("dataset JSON round-trip") {
    const std::string path = write_temp(
        R"({"instance_id":"i1","text":"x y","annotator_id":"a","label":1,"split":"test"})"
        "\n"
        R"({"instance_id":"i2","text":"z","annotator_id":"b","label":0,"split":"train"})"
        "\n");
    Dataset d = load_annotations(path);
    Dataset d2 = dataset_from_json(to_json(d));
    CHECK(d2.entries.size() == d.entries.size());
    CHECK(d2.annotator_ids == d.annotator_ids);
    CHECK(d2.official_split == d.official_split);
    CHECK(d2.entries[0].labels == d.entries[0].labels);
    CHECK(to_json(d2) == to_json(d));
    std::remove(path.c_str());
}

namespace {

Dataset make_plain(std::size_t n) {
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        DatasetEntry e;
        e.instance_id = "i" + std::to_string(i);
        e.text = "t";
        e.labels["a"] = static_cast<int>(i % 2);
        d.entries.push_back(e);
    }
    d.rebuild_annotator_index();
    return d;
}

}  // namespace

TEST_CASE("split_dataset fractions and determinism") {
    Dataset d = make_plain(100);
    // no official split: 20% test holdout leaves 80 train
    auto s = split_dataset(d, 0.1, 42);
    CHECK(s.test.size() == 20);
    CHECK(s.val.size() == 8);  // floor(0.1 * 80)
    CHECK(s.train.size() == 72);

    auto s2 = split_dataset(d, 0.1, 42);
    for (std::size_t i = 0; i < s.train.size(); ++i)
        CHECK(s.train.entries[i].instance_id == s2.train.entries[i].instance_id);

    // disjoint + exhaustive
    std::set<std::string> ids;
    for (const auto& part : {s.train, s.val, s.test})
        for (const auto& e : part.entries) CHECK(ids.insert(e.instance_id).second);
    CHECK(ids.size() == 100);
}

TEST_CASE("split_dataset honors official split and floor rounding") {
    Dataset d = make_plain(6124);
    for (std::size_t i = 0; i < 6124; ++i)
        d.official_split["i" + std::to_string(i)] = i < 4893 ? "train" : "test";
    auto s = split_dataset(d, 0.1, 3);
    CHECK(s.test.size() == 6124 - 4893);
    CHECK(s.val.size() == 489);  // floor(0.1 * 4893)
    CHECK(s.train.size() == 4893 - 489);
}

TEST_CASE("sample_imbalanced exact class counts") {
    Dataset d;
    for (std::size_t i = 0; i < 1000; ++i) {
        DatasetEntry e;
        e.instance_id = "i" + std::to_string(i);
        e.text = "t";
        const int label = i < 600 ? 1 : 0;
        e.labels["a"] = label;
        e.labels["b"] = label;
        e.labels["c"] = label;
        d.entries.push_back(e);
    }
    d.rebuild_annotator_index();

    Dataset s = sample_imbalanced(d, 500, 100, 9);
    std::size_t pos = 0;
    for (const auto& e : s.entries) pos += e.majority_label() == 1;
    CHECK(pos == 100);
    CHECK(s.size() == 500);

    // boundary: all positives
    Dataset all_pos = sample_imbalanced(d, 600, 600, 9);
    CHECK(all_pos.size() == 600);
    for (const auto& e : all_pos.entries) CHECK(e.majority_label() == 1);

    CHECK_THROWS_WITH_AS(sample_imbalanced(d, 700, 650, 9), doctest::Contains("insufficient"),
                         std::invalid_argument);
}

TEST_CASE("majority label tie rule") {
    DatasetEntry e;
    e.labels = {{"a", 1}, {"b", 0}};
    CHECK(e.majority_label() == 1);
    CHECK(e.majority_label(false) == 0);
    e.labels = {{"a", 0}, {"b", 0}, {"c", 1}};
    CHECK(e.majority_label() == 0);
}

TEST_CASE("generate_synthetic determinism") {
    SyntheticConfig cfg;
    cfg.n_instances = 200;
    Dataset a = generate_synthetic(cfg, 5);
    Dataset b = generate_synthetic(cfg, 5);
    CHECK(to_json(a) == to_json(b));
    Dataset c = generate_synthetic(cfg, 6);
    CHECK(to_json(a) != to_json(c));
}

TEST_CASE("generate_synthetic identical annotators, zero noise: no disagreement") {
    SyntheticConfig cfg;
    cfg.n_instances = 300;
    cfg.n_blocs = 1;
    cfg.bloc_spread = 0.0;
    cfg.noise_sd = 0.0;
    Dataset d = generate_synthetic(cfg, 11);
    for (const auto& e : d.entries) CHECK(e.unanimous());
}

TEST_CASE("generate_synthetic base rate lands near target") {
    SyntheticConfig cfg;
    cfg.n_instances = 2000;
    cfg.positive_rate = 0.1;
    Dataset d = generate_synthetic(cfg, 13);
    std::size_t pos = 0;
    for (const auto& e : d.entries) pos += e.majority_label() == 1;
    const double rate = static_cast<double>(pos) / 2000.0;
    CHECK(rate >= 0.06);
    CHECK(rate <= 0.14);
}

TEST_CASE("generate_synthetic rejects oversized groups") {
    SyntheticConfig cfg;
    cfg.n_annotators = 2;
    cfg.annotators_per_instance = 3;
    CHECK_THROWS_AS(generate_synthetic(cfg, 1), std::invalid_argument);
}
