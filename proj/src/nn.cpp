#include "anno/nn.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace anno::nn {

Node* Graph::make(Eigen::MatrixXd val, bool needs_grad) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    return &n;
}

Node* Graph::constant(Eigen::MatrixXd v) { return make(std::move(v), false); }

Node* Graph::param(Parameter& p) {
    Node* n = make(p.value, p.trainable);
    if (p.trainable) {
        Parameter* pp = &p;
        n->backward = [pp](Node& self) {
            if (pp->grad.size() == 0) pp->zero_grad();
            pp->grad += self.grad;
        };
    }
    return n;
}

Node* Graph::matmul(Node* a, Node* b) {
    Node* out = make(a->val * b->val, a->needs_grad || b->needs_grad);
    if (out->needs_grad)
        out->backward = [a, b](Node& self) {
            if (a->needs_grad) a->accumulate(self.grad * b->val.transpose());
            if (b->needs_grad) b->accumulate(a->val.transpose() * self.grad);
        };
    return out;
}

Node* Graph::matmul_nt(Node* a, Node* b) {
    Node* out = make(a->val * b->val.transpose(), a->needs_grad || b->needs_grad);
    if (out->needs_grad)
        out->backward = [a, b](Node& self) {
            if (a->needs_grad) a->accumulate(self.grad * b->val);
            if (b->needs_grad) b->accumulate(self.grad.transpose() * a->val);
        };
    return out;
}

Node* Graph::add(Node* a, Node* b) {
    if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols())
        throw std::invalid_argument("add: shape mismatch");
    Node* out = make(a->val + b->val, a->needs_grad || b->needs_grad);
    if (out->needs_grad)
        out->backward = [a, b](Node& self) {
            if (a->needs_grad) a->accumulate(self.grad);
            if (b->needs_grad) b->accumulate(self.grad);
        };
    return out;
}

Node* Graph::add_rowvec(Node* a, Node* bias) {
    if (bias->val.rows() != 1 || bias->val.cols() != a->val.cols())
        throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
    Eigen::MatrixXd v = a->val;
    v.rowwise() += bias->val.row(0);
    Node* out = make(std::move(v), a->needs_grad || bias->needs_grad);
    if (out->needs_grad)
        out->backward = [a, bias](Node& self) {
            if (a->needs_grad) a->accumulate(self.grad);
            if (bias->needs_grad) bias->accumulate(self.grad.colwise().sum());
        };
    return out;
}

Node* Graph::scale(Node* a, double s) {
    Node* out = make(a->val * s, a->needs_grad);
    if (out->needs_grad)
        out->backward = [a, s](Node& self) { a->accumulate(self.grad * s); };
    return out;
}

Node* Graph::relu(Node* a) {
    Node* out = make(a->val.cwiseMax(0.0), a->needs_grad);
    if (out->needs_grad)
        out->backward = [a](Node& self) {
            a->accumulate(
                (a->val.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
        };
    return out;
}

Node* Graph::tanh_act(Node* a) {
    Node* out = make(a->val.array().tanh().matrix(), a->needs_grad);
    if (out->needs_grad)
        out->backward = [a, out](Node& self) {
            a->accumulate(
                ((1.0 - out->val.array().square()).matrix()).cwiseProduct(self.grad));
        };
    return out;
}

Node* Graph::softmax_rows(Node* a) {
    Eigen::MatrixXd y = a->val;
    for (int i = 0; i < y.rows(); ++i) {
        const double mx = y.row(i).maxCoeff();
        y.row(i) = (y.row(i).array() - mx).exp();
        y.row(i) /= y.row(i).sum();
    }
    Node* out = make(std::move(y), a->needs_grad);
    if (out->needs_grad)
        out->backward = [a, out](Node& self) {
            Eigen::MatrixXd dx(out->val.rows(), out->val.cols());
            for (int i = 0; i < out->val.rows(); ++i) {
                const double dot = self.grad.row(i).dot(out->val.row(i));
                dx.row(i) =
                    out->val.row(i).cwiseProduct(self.grad.row(i).array().matrix() -
                                                 Eigen::RowVectorXd::Constant(out->val.cols(), dot));
            }
            a->accumulate(dx);
        };
    return out;
}

Node* Graph::layernorm_rows(Node* a, Node* gain, Node* bias) {
    constexpr double eps = 1e-5;
    const int rows = static_cast<int>(a->val.rows());
    const int cols = static_cast<int>(a->val.cols());
    Eigen::MatrixXd xhat(rows, cols);
    Eigen::VectorXd inv_sd(rows);
    for (int i = 0; i < rows; ++i) {
        const double mu = a->val.row(i).mean();
        const double var = (a->val.row(i).array() - mu).square().mean();
        inv_sd(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (a->val.row(i).array() - mu) * inv_sd(i);
    }
    Eigen::MatrixXd y = xhat;
    for (int i = 0; i < rows; ++i)
        y.row(i) = y.row(i).cwiseProduct(gain->val.row(0)) + bias->val.row(0);
    Node* out = make(std::move(y), a->needs_grad || gain->needs_grad || bias->needs_grad);
    if (out->needs_grad) {
        auto xhat_s = std::make_shared<Eigen::MatrixXd>(std::move(xhat));
        auto inv_sd_s = std::make_shared<Eigen::VectorXd>(std::move(inv_sd));
        out->backward = [a, gain, bias, xhat_s, inv_sd_s, cols](Node& self) {
            if (gain->needs_grad)
                gain->accumulate(self.grad.cwiseProduct(*xhat_s).colwise().sum());
            if (bias->needs_grad) bias->accumulate(self.grad.colwise().sum());
            if (a->needs_grad) {
                Eigen::MatrixXd dx(self.grad.rows(), cols);
                const double n = static_cast<double>(cols);
                for (int i = 0; i < self.grad.rows(); ++i) {
                    const Eigen::RowVectorXd dxhat =
                        self.grad.row(i).cwiseProduct(gain->val.row(0));
                    const double sum_dxhat = dxhat.sum();
                    const double sum_dxhat_xhat = dxhat.dot(xhat_s->row(i));
                    dx.row(i) = (*inv_sd_s)(i) / n *
                                (n * dxhat.array() - sum_dxhat -
                                 xhat_s->row(i).array() * sum_dxhat_xhat)
                                    .matrix();
                }
                a->accumulate(dx);
            }
        };
    }
    return out;
}

Node* Graph::col_block(Node* a, int c0, int n) {
    Node* out = make(a->val.middleCols(c0, n), a->needs_grad);
    if (out->needs_grad)
        out->backward = [a, c0, n](Node& self) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a->val.rows(), a->val.cols());
            g.middleCols(c0, n) = self.grad;
            a->accumulate(g);
        };
    return out;
}

Node* Graph::hstack(const std::vector<Node*>& parts) {
    if (parts.empty()) throw std::invalid_argument("hstack: empty list");
    const auto rows = parts.front()->val.rows();
    Eigen::Index cols = 0;
    bool needs = false;
    for (auto* p : parts) {
        if (p->val.rows() != rows) throw std::invalid_argument("hstack: row mismatch");
        cols += p->val.cols();
        needs = needs || p->needs_grad;
    }
    Eigen::MatrixXd v(rows, cols);
    Eigen::Index c = 0;
    for (auto* p : parts) {
        v.middleCols(c, p->val.cols()) = p->val;
        c += p->val.cols();
    }
    Node* out = make(std::move(v), needs);
    if (needs) {
        auto parts_copy = parts;
        out->backward = [parts_copy](Node& self) {
            Eigen::Index c = 0;
            for (auto* p : parts_copy) {
                if (p->needs_grad) p->accumulate(self.grad.middleCols(c, p->val.cols()));
                c += p->val.cols();
            }
        };
    }
    return out;
}

Node* Graph::vstack(const std::vector<Node*>& parts) {
    if (parts.empty()) throw std::invalid_argument("vstack: empty list");
    const auto cols = parts.front()->val.cols();
    Eigen::Index rows = 0;
    bool needs = false;
    for (auto* p : parts) {
        if (p->val.cols() != cols) throw std::invalid_argument("vstack: column mismatch");
        rows += p->val.rows();
        needs = needs || p->needs_grad;
    }
    Eigen::MatrixXd v(rows, cols);
    Eigen::Index r = 0;
    for (auto* p : parts) {
        v.middleRows(r, p->val.rows()) = p->val;
        r += p->val.rows();
    }
    Node* out = make(std::move(v), needs);
    if (needs) {
        auto parts_copy = parts;
        out->backward = [parts_copy](Node& self) {
            Eigen::Index r = 0;
            for (auto* p : parts_copy) {
                if (p->needs_grad) p->accumulate(self.grad.middleRows(r, p->val.rows()));
                r += p->val.rows();
            }
        };
    }
    return out;
}

Node* Graph::row(Node* a, int i) {
    Node* out = make(a->val.row(i), a->needs_grad);
    if (out->needs_grad)
        out->backward = [a, i](Node& self) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a->val.rows(), a->val.cols());
            g.row(i) = self.grad;
            a->accumulate(g);
        };
    return out;
}

Node* Graph::gather_rows(Node* a, std::vector<int> indices) {
    Eigen::MatrixXd v(static_cast<Eigen::Index>(indices.size()), a->val.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= a->val.rows())
            throw std::out_of_range("gather_rows: index out of range");
        v.row(static_cast<Eigen::Index>(i)) = a->val.row(indices[i]);
    }
    Node* out = make(std::move(v), a->needs_grad);
    if (out->needs_grad) {
        auto idx = std::make_shared<std::vector<int>>(std::move(indices));
        out->backward = [a, idx](Node& self) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a->val.rows(), a->val.cols());
            for (std::size_t i = 0; i < idx->size(); ++i)
                g.row((*idx)[i]) += self.grad.row(static_cast<Eigen::Index>(i));
            a->accumulate(g);
        };
    }
    return out;
}

Node* Graph::mean_rows(Node* a) {
    Node* out = make(a->val.colwise().mean(), a->needs_grad);
    if (out->needs_grad)
        out->backward = [a](Node& self) {
            const double inv = 1.0 / static_cast<double>(a->val.rows());
            Eigen::MatrixXd g(a->val.rows(), a->val.cols());
            for (int i = 0; i < g.rows(); ++i) g.row(i) = self.grad.row(0) * inv;
            a->accumulate(g);
        };
    return out;
}

Node* Graph::sum_rows(Node* a) {
    Node* out = make(a->val.colwise().sum(), a->needs_grad);
    if (out->needs_grad)
        out->backward = [a](Node& self) {
            Eigen::MatrixXd g(a->val.rows(), a->val.cols());
            for (int i = 0; i < g.rows(); ++i) g.row(i) = self.grad.row(0);
            a->accumulate(g);
        };
    return out;
}

Node* Graph::max_rows(Node* a) {
    Eigen::RowVectorXd v(a->val.cols());
    std::vector<int> argmax(static_cast<std::size_t>(a->val.cols()));
    for (int c = 0; c < a->val.cols(); ++c) {
        int best = 0;
        for (int r = 1; r < a->val.rows(); ++r)
            if (a->val(r, c) > a->val(best, c)) best = r;
        argmax[static_cast<std::size_t>(c)] = best;
        v(c) = a->val(best, c);
    }
    Node* out = make(v, a->needs_grad);
    if (out->needs_grad) {
        auto am = std::make_shared<std::vector<int>>(std::move(argmax));
        out->backward = [a, am](Node& self) {
            Eigen::MatrixXd g = Eigen::MatrixXd::Zero(a->val.rows(), a->val.cols());
            for (int c = 0; c < a->val.cols(); ++c)
                g((*am)[static_cast<std::size_t>(c)], c) = self.grad(0, c);
            a->accumulate(g);
        };
    }
    return out;
}

Node* Graph::dropout(Node* a, double p, std::mt19937_64& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd mask(a->val.rows(), a->val.cols());
    const double keep = 1.0 - p;
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c)
            mask(r, c) = unif(rng) < keep ? 1.0 / keep : 0.0;
    Node* out = make(a->val.cwiseProduct(mask), a->needs_grad);
    if (out->needs_grad) {
        auto mask_s = std::make_shared<Eigen::MatrixXd>(std::move(mask));
        out->backward = [a, mask_s](Node& self) {
            a->accumulate(self.grad.cwiseProduct(*mask_s));
        };
    }
    return out;
}

Node* Graph::cross_entropy_logits(Node* logits, int target) {
    if (logits->val.rows() != 1) throw std::invalid_argument("logits must be a single row");
    if (target < 0 || target >= logits->val.cols())
        throw std::invalid_argument("target class out of range");
    const double mx = logits->val.row(0).maxCoeff();
    const Eigen::RowVectorXd shifted = logits->val.row(0).array() - mx;
    const double lse = std::log(shifted.array().exp().sum());
    Eigen::MatrixXd loss(1, 1);
    loss(0, 0) = lse - shifted(target);
    Node* out = make(std::move(loss), logits->needs_grad);
    if (out->needs_grad) {
        Eigen::RowVectorXd probs = (shifted.array() - lse).exp();
        auto probs_s = std::make_shared<Eigen::RowVectorXd>(std::move(probs));
        out->backward = [logits, probs_s, target](Node& self) {
            Eigen::MatrixXd g = *probs_s;
            g(0, target) -= 1.0;
            logits->accumulate(g * self.grad(0, 0));
        };
    }
    return out;
}

void Graph::backward(Node* loss) {
    if (loss->val.rows() != 1 || loss->val.cols() != 1)
        throw std::invalid_argument("backward: loss must be a 1x1 scalar");
    loss->grad = Eigen::MatrixXd::Ones(1, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->grad.size() == 0 || !it->backward) continue;
        it->backward(*it);
    }
}

void Adam::step(const std::vector<Parameter*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
        if (!p->trainable || p->grad.size() == 0) continue;
        if (p->adam_m.size() == 0) {
            p->adam_m = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
            p->adam_v = Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols());
        }
        p->adam_m = cfg_.beta1 * p->adam_m + (1.0 - cfg_.beta1) * p->grad;
        p->adam_v =
            cfg_.beta2 * p->adam_v + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
        const Eigen::MatrixXd mhat = p->adam_m / bc1;
        const Eigen::MatrixXd vhat = p->adam_v / bc2;
        p->value -=
            cfg_.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
    }
}

}  // namespace anno::nn
