#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace anno::nn {

struct Parameter {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    Eigen::MatrixXd adam_m, adam_v;  // lazily sized by the optimizer
    bool trainable = true;

    void zero_grad() { grad = Eigen::MatrixXd::Zero(value.rows(), value.cols()); }
};

// One node of a dynamically built computation graph. Nodes live inside a
// Graph and are valid only for its lifetime.
struct Node {
    Eigen::MatrixXd val;
    Eigen::MatrixXd grad;  // empty until backward reaches this node
    bool needs_grad = false;
    std::function<void(Node&)> backward;  // adds into parents' grads

    void accumulate(const Eigen::MatrixXd& g) {
        if (grad.size() == 0) grad = Eigen::MatrixXd::Zero(val.rows(), val.cols());
        grad += g;
    }
};

// Reverse-mode tape. Creation order is a topological order, so backward just
// walks the node list in reverse.
class Graph {
public:
    Node* constant(Eigen::MatrixXd v);
    Node* param(Parameter& p);

    Node* matmul(Node* a, Node* b);     // a * b
    Node* matmul_nt(Node* a, Node* b);  // a * b^T
    Node* add(Node* a, Node* b);        // same shape
    Node* add_rowvec(Node* a, Node* bias);  // bias is 1 x cols, broadcast over rows
    Node* scale(Node* a, double s);
    Node* relu(Node* a);
    Node* tanh_act(Node* a);
    Node* softmax_rows(Node* a);
    Node* layernorm_rows(Node* a, Node* gain, Node* bias);  // gain/bias 1 x cols
    Node* col_block(Node* a, int c0, int n);
    Node* hstack(const std::vector<Node*>& parts);
    Node* vstack(const std::vector<Node*>& parts);
    Node* row(Node* a, int i);
    Node* gather_rows(Node* a, std::vector<int> indices);
    Node* mean_rows(Node* a);  // 1 x cols
    Node* sum_rows(Node* a);
    Node* max_rows(Node* a);
    Node* dropout(Node* a, double p, std::mt19937_64& rng);  // inverted dropout
    // scalar (1x1) cross-entropy of a 1 x C logit row against a class index
    Node* cross_entropy_logits(Node* logits, int target);

    void backward(Node* loss);

private:
    Node* make(Eigen::MatrixXd val, bool needs_grad);
    std::deque<Node> nodes_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(const std::vector<Parameter*>& params);

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

}  // namespace anno::nn
