#include "anno/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace anno::model {

void ModelConfig::validate() const {
    if (hidden_size == 0 || hidden_size % attention_heads != 0)
        throw std::invalid_argument("hidden_size must be divisible by attention_heads");
    if (feature_layers < 1) throw std::invalid_argument("feature_layers must be >= 1");
    if (vocab_size == 0) throw std::invalid_argument("vocab_size must be set");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
}

AnnoModel::AnnoModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.use_fusion = false;
    cfg_.validate();
    init_params(seed);
}

AnnoModel::AnnoModel(ModelConfig cfg, embeddings::AnnotatorEmbeddingSet set, std::uint64_t seed)
    : cfg_(std::move(cfg)), set_(std::move(set)) {
    cfg_.use_fusion = true;
    // annotator_dim equals the set dimension, or max_annotators times it
    // when concat pooling is in use
    if (cfg_.annotator_dim != set_->dim &&
        cfg_.annotator_dim != cfg_.max_annotators * set_->dim)
        throw std::invalid_argument("annotator_dim incompatible with embedding set");
    cfg_.validate();
    init_params(seed);
}

nn::Parameter* AnnoModel::add_param(const std::string& name, int rows, int cols, double sd,
                                    std::mt19937_64& rng) {
    params_.emplace_back();
    nn::Parameter& p = params_.back();
    p.name = name;
    p.value.resize(rows, cols);
    if (sd == 0.0) {
        p.value.setZero();
    } else {
        std::normal_distribution<double> normal(0.0, sd);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) p.value(r, c) = normal(rng);
    }
    by_name_[name] = &p;
    return &p;
}

AnnoModel::Block AnnoModel::add_block(const std::string& prefix, std::mt19937_64& rng) {
    const auto h = static_cast<int>(cfg_.hidden_size);
    const int ff = 4 * h;
    Block b{};
    b.ln1_g = add_param(prefix + ".ln1_g", 1, h, 0.0, rng);
    b.ln1_g->value.setOnes();
    b.ln1_b = add_param(prefix + ".ln1_b", 1, h, 0.0, rng);
    b.wq = add_param(prefix + ".wq", h, h, 0.02, rng);
    b.bq = add_param(prefix + ".bq", 1, h, 0.0, rng);
    b.wk = add_param(prefix + ".wk", h, h, 0.02, rng);
    b.bk = add_param(prefix + ".bk", 1, h, 0.0, rng);
    b.wv = add_param(prefix + ".wv", h, h, 0.02, rng);
    b.bv = add_param(prefix + ".bv", 1, h, 0.0, rng);
    b.wo = add_param(prefix + ".wo", h, h, 0.02, rng);
    b.bo = add_param(prefix + ".bo", 1, h, 0.0, rng);
    b.ln2_g = add_param(prefix + ".ln2_g", 1, h, 0.0, rng);
    b.ln2_g->value.setOnes();
    b.ln2_b = add_param(prefix + ".ln2_b", 1, h, 0.0, rng);
    b.w1 = add_param(prefix + ".w1", h, ff, 0.02, rng);
    b.b1 = add_param(prefix + ".b1", 1, ff, 0.0, rng);
    b.w2 = add_param(prefix + ".w2", ff, h, 0.02, rng);
    b.b2 = add_param(prefix + ".b2", 1, h, 0.0, rng);
    return b;
}

void AnnoModel::init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto h = static_cast<int>(cfg_.hidden_size);
    tok_emb_ = add_param("token_emb", static_cast<int>(cfg_.vocab_size), h, 0.02, rng);
    pos_emb_ = add_param("pos_emb", static_cast<int>(cfg_.max_seq_len), h, 0.02, rng);
    for (std::size_t i = 0; i < cfg_.encoder_layers; ++i)
        enc_blocks_.push_back(add_block("enc" + std::to_string(i), rng));
    enc_ln_g_ = add_param("enc_ln_g", 1, h, 0.0, rng);
    enc_ln_g_->value.setOnes();
    enc_ln_b_ = add_param("enc_ln_b", 1, h, 0.0, rng);

    if (cfg_.use_fusion) {
        anno_proj_ =
            add_param("anno_proj", h, static_cast<int>(cfg_.annotator_dim), 0.02, rng);
        if (!set_->frozen) {
            if (set_->source == embeddings::Source::history) {
                anno_hist_proj_ = add_param("anno_hist_proj",
                                            static_cast<int>(set_->projection.rows()),
                                            static_cast<int>(set_->projection.cols()), 0.0, rng);
                anno_hist_proj_->value = set_->projection;
            } else {
                anno_emb_ = add_param("anno_emb", static_cast<int>(set_->vectors.rows()),
                                      static_cast<int>(set_->vectors.cols()), 0.0, rng);
                anno_emb_->value = set_->vectors;
            }
        }
    }

    for (std::size_t i = 0; i < cfg_.feature_layers; ++i)
        feat_blocks_.push_back(add_block("feat" + std::to_string(i), rng));
    feat_ln_g_ = add_param("feat_ln_g", 1, h, 0.0, rng);
    feat_ln_g_->value.setOnes();
    feat_ln_b_ = add_param("feat_ln_b", 1, h, 0.0, rng);

    head_w1_ = add_param("head_w1", h, h, 0.02, rng);
    head_b1_ = add_param("head_b1", 1, h, 0.0, rng);
    head_w2_ = add_param("head_w2", h, 2, 0.02, rng);
    head_b2_ = add_param("head_b2", 1, 2, 0.0, rng);
}

nn::Node* AnnoModel::run_block(nn::Graph& g, nn::Node* x, const Block& blk, bool train_mode,
                               std::mt19937_64* drop_rng) {
    const auto h = static_cast<int>(cfg_.hidden_size);
    const int heads = static_cast<int>(cfg_.attention_heads);
    const int dh = h / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // attention sublayer
    nn::Node* n1 = g.layernorm_rows(x, g.param(*blk.ln1_g), g.param(*blk.ln1_b));
    nn::Node* q = g.add_rowvec(g.matmul(n1, g.param(*blk.wq)), g.param(*blk.bq));
    nn::Node* k = g.add_rowvec(g.matmul(n1, g.param(*blk.wk)), g.param(*blk.bk));
    nn::Node* v = g.add_rowvec(g.matmul(n1, g.param(*blk.wv)), g.param(*blk.bv));
    std::vector<nn::Node*> head_outs;
    for (int i = 0; i < heads; ++i) {
        nn::Node* qi = g.col_block(q, i * dh, dh);
        nn::Node* ki = g.col_block(k, i * dh, dh);
        nn::Node* vi = g.col_block(v, i * dh, dh);
        nn::Node* att = g.softmax_rows(g.scale(g.matmul_nt(qi, ki), att_scale));
        head_outs.push_back(g.matmul(att, vi));
    }
    nn::Node* att_out =
        g.add_rowvec(g.matmul(g.hstack(head_outs), g.param(*blk.wo)), g.param(*blk.bo));
    if (train_mode && drop_rng) att_out = g.dropout(att_out, cfg_.dropout, *drop_rng);
    x = g.add(x, att_out);

    // feed-forward sublayer
    nn::Node* n2 = g.layernorm_rows(x, g.param(*blk.ln2_g), g.param(*blk.ln2_b));
    nn::Node* ff = g.add_rowvec(
        g.matmul(g.relu(g.add_rowvec(g.matmul(n2, g.param(*blk.w1)), g.param(*blk.b1))),
                 g.param(*blk.w2)),
        g.param(*blk.b2));
    if (train_mode && drop_rng) ff = g.dropout(ff, cfg_.dropout, *drop_rng);
    return g.add(x, ff);
}

nn::Node* AnnoModel::encode(nn::Graph& g, const std::vector<int>& tokens, bool train_mode,
                            std::mt19937_64* drop_rng) {
    if (tokens.empty()) throw std::invalid_argument("empty token sequence");
    if (tokens.size() > cfg_.max_seq_len)
        throw std::invalid_argument("token sequence exceeds max_seq_len");
    for (int t : tokens)
        if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size)
            throw std::out_of_range("token id out of vocabulary range");

    std::vector<int> positions(tokens.size());
    std::iota(positions.begin(), positions.end(), 0);
    nn::Node* x = g.add(g.gather_rows(g.param(*tok_emb_), tokens),
                        g.gather_rows(g.param(*pos_emb_), positions));
    if (train_mode && drop_rng) x = g.dropout(x, cfg_.dropout, *drop_rng);
    for (const auto& blk : enc_blocks_) x = run_block(g, x, blk, train_mode, drop_rng);
    return g.layernorm_rows(x, g.param(*enc_ln_g_), g.param(*enc_ln_b_));
}

nn::Node* AnnoModel::fuse(nn::Graph& g, nn::Node* contextual, nn::Node* annotator_embedding) {
    if (!cfg_.use_fusion) throw std::logic_error("fuse called on a baseline model");
    if (annotator_embedding->val.cols() != static_cast<Eigen::Index>(cfg_.annotator_dim))
        throw std::invalid_argument("annotator embedding dimension mismatch");
    nn::Node* projected = g.matmul_nt(annotator_embedding, g.param(*anno_proj_));
    return g.vstack({projected, contextual});
}

nn::Node* AnnoModel::classify(nn::Graph& g, nn::Node* fused, bool train_mode,
                              std::mt19937_64* drop_rng) {
    nn::Node* x = fused;
    for (const auto& blk : feat_blocks_) x = run_block(g, x, blk, train_mode, drop_rng);
    x = g.layernorm_rows(x, g.param(*feat_ln_g_), g.param(*feat_ln_b_));
    nn::Node* pooled = g.row(x, 0);
    nn::Node* hidden = g.tanh_act(
        g.add_rowvec(g.matmul(pooled, g.param(*head_w1_)), g.param(*head_b1_)));
    if (train_mode && drop_rng) hidden = g.dropout(hidden, cfg_.dropout, *drop_rng);
    nn::Node* logits = g.add_rowvec(g.matmul(hidden, g.param(*head_w2_)), g.param(*head_b2_));
    if (!logits->val.allFinite()) throw std::runtime_error("non-finite activations");
    return logits;
}

nn::Node* AnnoModel::group_embedding(nn::Graph& g, const std::vector<std::string>& group,
                                     ctr::Pooling pooling) {
    if (!cfg_.use_fusion) throw std::logic_error("group_embedding on a baseline model");
    if (group.empty()) throw std::invalid_argument("empty annotator group");
    std::vector<int> idx;
    for (const auto& id : group) {
        const int i = set_->index_of(id);
        if (i < 0) throw std::invalid_argument("unknown annotator: " + id);
        idx.push_back(i);
    }

    nn::Node* vectors;
    if (set_->source == embeddings::Source::history) {
        nn::Node* hist = g.gather_rows(g.constant(set_->history), idx);
        nn::Node* proj =
            anno_hist_proj_ ? g.param(*anno_hist_proj_) : g.constant(set_->projection);
        vectors = g.matmul_nt(hist, proj);  // g x dim
    } else {
        nn::Node* table = anno_emb_ ? g.param(*anno_emb_) : g.constant(set_->vectors);
        vectors = g.gather_rows(table, idx);
    }

    switch (pooling) {
        case ctr::Pooling::mean: return g.mean_rows(vectors);
        case ctr::Pooling::sum: return g.sum_rows(vectors);
        case ctr::Pooling::max: return g.max_rows(vectors);
        case ctr::Pooling::concat: {
            if (group.size() > cfg_.max_annotators)
                throw std::invalid_argument("concat pooling: group exceeds max_annotators");
            std::vector<nn::Node*> rows;
            for (std::size_t i = 0; i < group.size(); ++i)
                rows.push_back(g.row(vectors, static_cast<int>(i)));
            const auto pad = static_cast<Eigen::Index>(
                (cfg_.max_annotators - group.size()) * set_->dim);
            if (pad > 0) rows.push_back(g.constant(Eigen::MatrixXd::Zero(1, pad)));
            return g.hstack(rows);
        }
    }
    throw std::logic_error("unreachable");
}

nn::Node* AnnoModel::forward(nn::Graph& g, const std::vector<int>& tokens,
                             const std::vector<std::string>& group, ctr::Pooling pooling,
                             bool train_mode, std::mt19937_64* drop_rng) {
    nn::Node* contextual = encode(g, tokens, train_mode, drop_rng);
    if (!cfg_.use_fusion) return classify(g, contextual, train_mode, drop_rng);
    nn::Node* emb = group_embedding(g, group, pooling);
    return classify(g, fuse(g, contextual, emb), train_mode, drop_rng);
}

Eigen::Vector2d AnnoModel::predict_logits(const std::vector<int>& tokens,
                                          const std::vector<std::string>& group,
                                          ctr::Pooling pooling) {
    nn::Graph g;
    nn::Node* logits = forward(g, tokens, group, pooling, false, nullptr);
    return Eigen::Vector2d(logits->val(0, 0), logits->val(0, 1));
}

std::vector<nn::Parameter*> AnnoModel::parameters() {
    std::vector<nn::Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

std::map<std::string, std::vector<nn::Parameter*>> AnnoModel::parameter_groups() {
    std::map<std::string, std::vector<nn::Parameter*>> groups;
    for (auto& p : params_) {
        std::string group;
        if (p.name == "token_emb") group = "token_emb";
        else if (p.name == "pos_emb") group = "pos_emb";
        else if (p.name.rfind("enc", 0) == 0) group = "encoder";
        else if (p.name == "anno_proj") group = "annotator_projection";
        else if (p.name == "anno_emb" || p.name == "anno_hist_proj")
            group = "annotator_embedding";
        else if (p.name.rfind("feat", 0) == 0) group = "feature_stack";
        else group = "head";
        groups[group].push_back(&p);
    }
    return groups;
}

nn::Parameter* AnnoModel::find_parameter(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

embeddings::AnnotatorEmbeddingSet AnnoModel::current_embedding_set() const {
    if (!set_) throw std::logic_error("baseline model has no embedding set");
    embeddings::AnnotatorEmbeddingSet out = *set_;
    if (anno_emb_) out.vectors = anno_emb_->value;
    if (anno_hist_proj_) out.projection = anno_hist_proj_->value;
    return out;
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

void AnnoModel::save(const std::string& path, const instances::Tokenizer& tok,
                     const instances::LabelTextConfig& label_cfg) const {
    json j;
    j["config"] = {{"hidden_size", cfg_.hidden_size},
                   {"encoder_layers", cfg_.encoder_layers},
                   {"attention_heads", cfg_.attention_heads},
                   {"feature_layers", cfg_.feature_layers},
                   {"max_seq_len", cfg_.max_seq_len},
                   {"vocab_size", cfg_.vocab_size},
                   {"annotator_dim", cfg_.annotator_dim},
                   {"max_annotators", cfg_.max_annotators},
                   {"dropout", cfg_.dropout},
                   {"use_fusion", cfg_.use_fusion}};
    json params = json::object();
    for (const auto& p : params_) params[p.name] = matrix_to_json(p.value);
    j["parameters"] = std::move(params);
    j["vocabulary"] = tok.vocabulary();
    j["label_text"] = {{"positive", label_cfg.positive_text},
                       {"negative", label_cfg.negative_text}};
    if (set_) j["embedding_set"] = json::parse(embeddings::to_json(current_embedding_set()));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump(2) << "\n";
}

AnnoModel::Loaded AnnoModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    json j = json::parse(buf.str());

    ModelConfig cfg;
    const auto& c = j.at("config");
    cfg.hidden_size = c.at("hidden_size").get<std::size_t>();
    cfg.encoder_layers = c.at("encoder_layers").get<std::size_t>();
    cfg.attention_heads = c.at("attention_heads").get<std::size_t>();
    cfg.feature_layers = c.at("feature_layers").get<std::size_t>();
    cfg.max_seq_len = c.at("max_seq_len").get<std::size_t>();
    cfg.vocab_size = c.at("vocab_size").get<std::size_t>();
    cfg.annotator_dim = c.at("annotator_dim").get<std::size_t>();
    cfg.max_annotators = c.at("max_annotators").get<std::size_t>();
    cfg.dropout = c.at("dropout").get<double>();
    cfg.use_fusion = c.at("use_fusion").get<bool>();

    auto build = [&]() -> AnnoModel {
        if (cfg.use_fusion) {
            auto set = embeddings::embedding_set_from_json(j.at("embedding_set").dump());
            return AnnoModel(cfg, std::move(set), 0);
        }
        return AnnoModel(cfg, 0);
    };
    AnnoModel model = build();
    for (auto& [name, value] : j.at("parameters").items()) {
        nn::Parameter* p = model.find_parameter(name);
        if (!p) throw std::runtime_error("checkpoint parameter not in model: " + name);
        Eigen::MatrixXd m = matrix_from_json(value);
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        p->value = std::move(m);
    }
    instances::Tokenizer tok =
        instances::Tokenizer::from_vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
    instances::LabelTextConfig label_cfg{
        j.at("label_text").at("positive").get<std::string>(),
        j.at("label_text").at("negative").get<std::string>()};
    return Loaded{std::move(model), std::move(tok), std::move(label_cfg)};
}

std::map<std::string, double> grad_check(AnnoModel& model,
                                         const std::vector<GradCheckItem>& batch,
                                         ctr::Pooling pooling, double epsilon,
                                         std::size_t coords_per_group, std::uint64_t seed) {
    if (batch.empty()) throw std::invalid_argument("empty grad-check batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    auto loss_value = [&]() {
        double total = 0.0;
        for (const auto& item : batch) {
            nn::Graph g;
            nn::Node* logits = model.forward(g, item.tokens, item.group, pooling, false, nullptr);
            total += g.cross_entropy_logits(logits, item.target)->val(0, 0);
        }
        return total * inv_b;
    };

    for (auto* p : model.parameters()) p->zero_grad();
    for (const auto& item : batch) {
        nn::Graph g;
        nn::Node* logits = model.forward(g, item.tokens, item.group, pooling, false, nullptr);
        nn::Node* loss = g.scale(g.cross_entropy_logits(logits, item.target), inv_b);
        g.backward(loss);
    }

    std::mt19937_64 rng(seed);
    std::map<std::string, double> max_err;
    for (auto& [group, params] : model.parameter_groups()) {
        double worst = 0.0;
        std::size_t total_coords = 0;
        for (auto* p : params) total_coords += static_cast<std::size_t>(p->value.size());
        const std::size_t n_samples = std::min(coords_per_group, total_coords);
        std::uniform_int_distribution<std::size_t> pick(0, total_coords - 1);
        for (std::size_t s = 0; s < n_samples; ++s) {
            std::size_t flat = pick(rng);
            nn::Parameter* p = nullptr;
            for (auto* cand : params) {
                const auto sz = static_cast<std::size_t>(cand->value.size());
                if (flat < sz) { p = cand; break; }
                flat -= sz;
            }
            double* coeff = p->value.data() + flat;
            const double orig = *coeff;
            *coeff = orig + epsilon;
            const double lp = loss_value();
            *coeff = orig - epsilon;
            const double lm = loss_value();
            *coeff = orig;
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double analytic = p->grad.size() ? *(p->grad.data() + flat) : 0.0;
            // floor keeps FD roundoff noise on near-zero gradients (e.g. unused
            // embedding rows) from masquerading as relative error
            const double denom = std::max(1e-3, std::abs(numeric) + std::abs(analytic));
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
        max_err[group] = worst;
    }
    return max_err;
}

}  // namespace anno::model
