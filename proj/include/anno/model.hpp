#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "anno/ctr.hpp"
#include "anno/embeddings.hpp"
#include "anno/instances.hpp"
#include "anno/nn.hpp"

namespace anno::model {

struct ModelConfig {
    std::size_t hidden_size = 64;
    std::size_t encoder_layers = 2;
    std::size_t attention_heads = 4;
    std::size_t feature_layers = 6;
    std::size_t max_seq_len = 128;
    std::size_t vocab_size = 0;
    std::size_t annotator_dim = 10;   // ctr: K; history/learnt: hidden_size
    std::size_t max_annotators = 8;   // concat pooling capacity
    double dropout = 0.1;
    bool use_fusion = true;  // false = plain encoder baseline

    void validate() const;
};

// Toy transformer classifier: token+position embeddings, pre-norm encoder
// blocks, optional annotator fusion (projected embedding prepended as an
// extra sequence position), feature-extraction blocks, tanh head to 2 logits.
class AnnoModel {
public:
    AnnoModel(ModelConfig cfg, std::uint64_t seed);  // baseline, no fusion
    AnnoModel(ModelConfig cfg, embeddings::AnnotatorEmbeddingSet set, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    bool has_fusion() const { return cfg_.use_fusion; }

    // Final-layer contextual representation, L x hidden.
    nn::Node* encode(nn::Graph& g, const std::vector<int>& tokens, bool train_mode = false,
                     std::mt19937_64* drop_rng = nullptr);
    // Prepend the projected annotator embedding to the contextual matrix.
    nn::Node* fuse(nn::Graph& g, nn::Node* contextual, nn::Node* annotator_embedding);
    // Feature-extraction stack + classification head over the first position.
    nn::Node* classify(nn::Graph& g, nn::Node* fused, bool train_mode = false,
                       std::mt19937_64* drop_rng = nullptr);
    // Pooled annotator-group embedding as a 1 x annotator_dim graph node.
    nn::Node* group_embedding(nn::Graph& g, const std::vector<std::string>& group,
                              ctr::Pooling pooling);

    // Full composition; 1 x 2 logits.
    nn::Node* forward(nn::Graph& g, const std::vector<int>& tokens,
                      const std::vector<std::string>& group, ctr::Pooling pooling,
                      bool train_mode = false, std::mt19937_64* drop_rng = nullptr);

    Eigen::Vector2d predict_logits(const std::vector<int>& tokens,
                                   const std::vector<std::string>& group,
                                   ctr::Pooling pooling);

    std::vector<nn::Parameter*> parameters();
    // Coarse groups: token_emb, pos_emb, encoder, annotator_projection,
    // annotator_embedding (when trainable), feature_stack, head.
    std::map<std::string, std::vector<nn::Parameter*>> parameter_groups();
    nn::Parameter* find_parameter(const std::string& name);

    // Embedding set with any trained annotator parameters written back.
    embeddings::AnnotatorEmbeddingSet current_embedding_set() const;

    void save(const std::string& path, const instances::Tokenizer& tok,
              const instances::LabelTextConfig& label_cfg) const;
    struct Loaded;
    static Loaded load(const std::string& path);

private:
    struct Block {
        nn::Parameter *ln1_g, *ln1_b;
        nn::Parameter *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
        nn::Parameter *ln2_g, *ln2_b;
        nn::Parameter *w1, *b1, *w2, *b2;
    };

    void init_params(std::uint64_t seed);
    nn::Parameter* add_param(const std::string& name, int rows, int cols, double sd,
                             std::mt19937_64& rng);
    Block add_block(const std::string& prefix, std::mt19937_64& rng);
    nn::Node* run_block(nn::Graph& g, nn::Node* x, const Block& blk, bool train_mode,
                        std::mt19937_64* drop_rng);

    ModelConfig cfg_;
    std::optional<embeddings::AnnotatorEmbeddingSet> set_;
    std::deque<nn::Parameter> params_;
    std::map<std::string, nn::Parameter*> by_name_;

    nn::Parameter* tok_emb_ = nullptr;
    nn::Parameter* pos_emb_ = nullptr;
    std::vector<Block> enc_blocks_;
    nn::Parameter *enc_ln_g_ = nullptr, *enc_ln_b_ = nullptr;
    nn::Parameter* anno_proj_ = nullptr;  // hidden x annotator_dim, bias-free
    nn::Parameter* anno_emb_ = nullptr;   // trainable annotator vectors (ctr/learnt, unfrozen)
    nn::Parameter* anno_hist_proj_ = nullptr;  // trainable history reduction (unfrozen)
    std::vector<Block> feat_blocks_;
    nn::Parameter *feat_ln_g_ = nullptr, *feat_ln_b_ = nullptr;
    nn::Parameter *head_w1_ = nullptr, *head_b1_ = nullptr;
    nn::Parameter *head_w2_ = nullptr, *head_b2_ = nullptr;
};

struct AnnoModel::Loaded {
    AnnoModel model;
    instances::Tokenizer tokenizer;
    instances::LabelTextConfig label_cfg;
};

struct GradCheckItem {
    std::vector<int> tokens;
    std::vector<std::string> group;
    int target = 0;
};

// Central finite differences against analytic gradients on a random
// coordinate subsample of every parameter group. Returns max relative error
// (|a - n| / max(1e-3, |a| + |n|), floored so FD noise on zero-gradient
// coordinates does not register)
// per group. Run with dropout disabled.
std::map<std::string, double> grad_check(AnnoModel& model,
                                         const std::vector<GradCheckItem>& batch,
                                         ctr::Pooling pooling, double epsilon = 1e-5,
                                         std::size_t coords_per_group = 50,
                                         std::uint64_t seed = 0);

}  // namespace anno::model
