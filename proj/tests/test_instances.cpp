#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "anno/instances.hpp"

using namespace anno;
using namespace anno::instances;

namespace {

data::DatasetEntry entry(std::map<std::string, int> labels, std::string text = "some plain text") {
    data::DatasetEntry e;
    e.instance_id = "e1";
    e.text = std::move(text);
    e.labels = std::move(labels);
    return e;
}

}  // namespace

TEST_CASE("label presets") {
    auto p = label_preset("hate-not");
    CHECK(p.positive_text == "hate");
    CHECK(p.negative_text == "not");
    CHECK(label_preset("yes-no").positive_text == "yes");
    CHECK(label_preset("misogynistic-nonmisogynistic").negative_text == "nonmisogynistic");
    CHECK(label_preset_names().size() == 5);
    CHECK_THROWS_AS(label_preset("nope"), std::invalid_argument);
}

TEST_CASE("unanimous entry yields one instance") {
    auto insts = build_training_instances(entry({{"a", 1}, {"b", 1}}), label_preset("hate-not"));
    REQUIRE(insts.size() == 1);
    CHECK(insts[0].label_text == "hate");
    CHECK(insts[0].input_text == "some plain text [SEP] hate");
    CHECK(insts[0].target == 1);
    std::vector<std::string> group = insts[0].annotator_group;
    std::sort(group.begin(), group.end());
    CHECK(group == std::vector<std::string>{"a", "b"});
}

TEST_CASE("disagreement splits into two group instances") {
    auto insts = build_training_instances(entry({{"a", 1}, {"b", 0}, {"c", 0}}),
                                          label_preset("hate-not"));
    REQUIRE(insts.size() == 2);
    // groups partition annotators; targets match the group's choice
    const auto& pos = insts[0].target == 1 ? insts[0] : insts[1];
    const auto& neg = insts[0].target == 1 ? insts[1] : insts[0];
    CHECK(pos.label_text == "hate");
    CHECK(neg.label_text == "not");
    CHECK(pos.annotator_group == std::vector<std::string>{"a"});
    std::vector<std::string> ng = neg.annotator_group;
    std::sort(ng.begin(), ng.end());
    CHECK(ng == std::vector<std::string>{"b", "c"});
    CHECK(pos.text == neg.text);
    CHECK(pos.input_text != neg.input_text);
}

TEST_CASE("majority_target overrides group targets") {
    auto insts = build_training_instances(entry({{"a", 1}, {"b", 0}, {"c", 0}}),
                                          label_preset("hate-not"), true);
    REQUIRE(insts.size() == 2);
    CHECK(insts[0].target == 0);
    CHECK(insts[1].target == 0);
    // label texts still differ per group
    CHECK(insts[0].label_text != insts[1].label_text);
}

TEST_CASE("corpus size equals unanimous + 2 x disagreement") {
    data::SyntheticConfig cfg;
    cfg.n_instances = 300;
    auto d = data::generate_synthetic(cfg, 4);
    std::size_t unanimous = 0, split = 0;
    std::size_t total = 0;
    for (const auto& e : d.entries) {
        e.unanimous() ? ++unanimous : ++split;
        total += build_training_instances(e, label_preset("hate-not")).size();
    }
    CHECK(total == unanimous + 2 * split);
}

TEST_CASE("eval instances never carry label text") {
    auto ev = build_eval_instance(entry({{"a", 1}, {"b", 0}}));
    CHECK(ev.input_text == ev.text);
    CHECK(ev.input_text.find("[SEP]") == std::string::npos);
    CHECK(ev.target == 1);  // tie -> positive
    CHECK(ev.annotator_group.size() == 2);
}

TEST_CASE("tokenizer basics and char fallback") {
    auto tok = Tokenizer::build({"Alpha beta beta", "gamma"});
    CHECK(tok.vocab_size() > 3);
    auto ids = tok.encode("alpha BETA");
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] >= 3);
    CHECK(ids[0] != ids[1]);
    // unseen word falls back to characters; unseen characters go to [UNK]
    auto fb = tok.encode_word("ab");
    CHECK(fb.size() == 2);
    auto unk = tok.encode_word("##");
    for (int id : fb) CHECK(id != Tokenizer::kPad);
    CHECK(std::all_of(unk.begin(), unk.end(),
                      [](int id) { return id == Tokenizer::kUnk; }));

    auto back = Tokenizer::from_vocabulary(tok.vocabulary());
    CHECK(back.encode("alpha beta gamma") == tok.encode("alpha beta gamma"));
}

TEST_CASE("render keeps the label suffix under truncation") {
    std::string long_text;
    for (int i = 0; i < 300; ++i) long_text += "w" + std::to_string(i % 40) + " ";
    auto insts = build_training_instances(entry({{"a", 1}}, long_text), label_preset("hate-not"));
    REQUIRE(insts.size() == 1);
    auto tok = Tokenizer::build({long_text, "hate", "not"});
    auto ids = render_tokens(insts[0], tok, 128);
    REQUIRE(ids.size() == 128);
    const auto tail = tok.encode("hate");
    REQUIRE(tail.size() == 1);
    CHECK(ids[126] == Tokenizer::kSep);
    CHECK(ids[127] == tail[0]);

    // short text: no truncation, suffix just appended
    auto short_insts =
        build_training_instances(entry({{"a", 0}}, "tiny text"), label_preset("hate-not"));
    auto sids = render_tokens(short_insts[0], tok, 128);
    CHECK(sids.size() == tok.encode("tiny text").size() + 2);
    CHECK(sids[sids.size() - 2] == Tokenizer::kSep);

    // eval render has no separator at all
    auto ev = build_eval_instance(entry({{"a", 1}}, long_text));
    auto eids = render_tokens(ev, tok, 128);
    REQUIRE(eids.size() == 128);
    CHECK(std::find(eids.begin(), eids.end(), Tokenizer::kSep) == eids.end());
}

TEST_CASE("swapping label texts swaps rendered suffixes only") {
    LabelTextConfig cfg{"yes", "no"};
    LabelTextConfig swapped{"no", "yes"};
    auto e = entry({{"a", 1}, {"b", 0}});
    auto orig = build_training_instances(e, cfg);
    auto swap = build_training_instances(e, swapped);
    REQUIRE(orig.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(orig[i].text == swap[i].text);
        CHECK(orig[i].target == swap[i].target);
        CHECK(orig[i].label_text != swap[i].label_text);
    }
}
