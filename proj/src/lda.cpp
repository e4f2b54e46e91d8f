#include "anno/lda.hpp"

#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace anno::lda {

std::vector<std::vector<std::string>> tokenize_corpus(const std::vector<std::string>& texts) {
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(texts.size());
    for (const auto& t : texts) {
        std::istringstream in(t);
        std::vector<std::string> tokens;
        std::string tok;
        while (in >> tok) tokens.push_back(tok);
        corpus.push_back(std::move(tokens));
    }
    return corpus;
}

std::vector<std::string> build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                                          std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    std::vector<std::string> order;
    for (const auto& doc : corpus)
        for (const auto& w : doc)
            if (++counts[w] == 1) order.push_back(w);
    std::vector<std::string> vocab;
    for (const auto& w : order)
        if (counts[w] >= min_count) vocab.push_back(w);
    return vocab;
}

LdaModel fit_lda(const std::vector<std::vector<std::string>>& corpus, std::size_t K,
                 std::size_t iterations, std::uint64_t seed, std::size_t vocab_min_count) {
    if (corpus.empty()) throw std::invalid_argument("empty corpus");
    if (K < 1) throw std::invalid_argument("K must be >= 1");

    auto vocab = build_vocabulary(corpus, vocab_min_count);
    if (vocab.empty()) throw std::invalid_argument("empty vocabulary after filtering");
    std::unordered_map<std::string, int> word_id;
    for (std::size_t i = 0; i < vocab.size(); ++i) word_id[vocab[i]] = static_cast<int>(i);

    const std::size_t D = corpus.size();
    const std::size_t V = vocab.size();
    const double alpha = 50.0 / static_cast<double>(K);
    const double beta = 0.01;

    std::vector<std::vector<int>> docs(D);
    for (std::size_t d = 0; d < D; ++d)
        for (const auto& w : corpus[d]) {
            auto it = word_id.find(w);
            if (it != word_id.end()) docs[d].push_back(it->second);
        }

    // count tables
    Eigen::MatrixXi n_dk = Eigen::MatrixXi::Zero(static_cast<int>(D), static_cast<int>(K));
    Eigen::MatrixXi n_kw = Eigen::MatrixXi::Zero(static_cast<int>(K), static_cast<int>(V));
    Eigen::VectorXi n_k = Eigen::VectorXi::Zero(static_cast<int>(K));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<int>> z(D);
    for (std::size_t d = 0; d < D; ++d) {
        z[d].resize(docs[d].size());
        for (std::size_t n = 0; n < docs[d].size(); ++n) {
            const int k = static_cast<int>(unif(rng) * static_cast<double>(K));
            const int kk = std::min<int>(k, static_cast<int>(K) - 1);
            z[d][n] = kk;
            n_dk(static_cast<int>(d), kk) += 1;
            n_kw(kk, docs[d][n]) += 1;
            n_k(kk) += 1;
        }
    }

    std::vector<double> probs(K);
    const double vbeta = static_cast<double>(V) * beta;
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t d = 0; d < D; ++d) {
            for (std::size_t n = 0; n < docs[d].size(); ++n) {
                const int w = docs[d][n];
                const int old_k = z[d][n];
                n_dk(static_cast<int>(d), old_k) -= 1;
                n_kw(old_k, w) -= 1;
                n_k(old_k) -= 1;

                double total = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    const double p =
                        (n_dk(static_cast<int>(d), static_cast<int>(k)) + alpha) *
                        (n_kw(static_cast<int>(k), w) + beta) /
                        (n_k(static_cast<int>(k)) + vbeta);
                    probs[k] = p;
                    total += p;
                }
                double u = unif(rng) * total;
                int new_k = static_cast<int>(K) - 1;
                for (std::size_t k = 0; k < K; ++k) {
                    u -= probs[k];
                    if (u <= 0.0) { new_k = static_cast<int>(k); break; }
                }
                z[d][n] = new_k;
                n_dk(static_cast<int>(d), new_k) += 1;
                n_kw(new_k, w) += 1;
                n_k(new_k) += 1;
            }
        }
    }

    LdaModel model;
    model.K = K;
    model.alpha = alpha;
    model.beta = beta;
    model.vocabulary = std::move(vocab);
    model.phi.resize(static_cast<int>(K), static_cast<int>(V));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t w = 0; w < V; ++w)
            model.phi(static_cast<int>(k), static_cast<int>(w)) =
                (n_kw(static_cast<int>(k), static_cast<int>(w)) + beta) / (n_k(static_cast<int>(k)) + vbeta);
    model.theta.resize(static_cast<int>(D), static_cast<int>(K));
    for (std::size_t d = 0; d < D; ++d) {
        const double nd = static_cast<double>(docs[d].size());
        for (std::size_t k = 0; k < K; ++k)
            model.theta(static_cast<int>(d), static_cast<int>(k)) =
                (n_dk(static_cast<int>(d), static_cast<int>(k)) + alpha) /
                (nd + static_cast<double>(K) * alpha);
    }
    return model;
}

}  // namespace anno::lda
