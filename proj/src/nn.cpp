#include "oasis/nn.hpp"

#include "oasis/error.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace oasis::nn {

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

void Var::zero_grad() {
    if (node_) node_->grad.resize(0, 0);
}

Var constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var parameter(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

namespace {

Var make_result(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& in : inputs) {
        if (in.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
        for (auto& in : inputs) n->parents.push_back(in.node());
        n->backward_fn = std::move(fn);
    }
    return Var(std::move(n));
}

void push(const std::shared_ptr<Node>& p, const Matrix& g) {
    if (p->requires_grad) p->accumulate(g);
}

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_kind(const Var& a, const Var& b, const char* op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": cannot broadcast " +
                                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                                              " onto " + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()));
}

Matrix expand(const Matrix& b, Broadcast kind, Index rows, Index cols) {
    switch (kind) {
        case Broadcast::Same: return b;
        case Broadcast::Row: return b.replicate(rows, 1);
        case Broadcast::Scalar: return Matrix::Constant(rows, cols, b(0, 0));
    }
    return b;
}

Matrix reduce(const Matrix& g, Broadcast kind) {
    switch (kind) {
        case Broadcast::Same: return g;
        case Broadcast::Row: return g.colwise().sum();
        case Broadcast::Scalar: return Matrix::Constant(1, 1, g.sum());
    }
    return g;
}

}  // namespace

void backward(const Var& root) {
    if (!root.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->accumulate(Matrix::Ones(root.rows(), root.cols()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
}

Var add(const Var& a, const Var& b) {
    auto kind = broadcast_kind(a, b, "add");
    Matrix out = a.value() + expand(b.value(), kind, a.rows(), a.cols());
    return make_result(std::move(out), {a, b}, [kind](Node& n) {
        push(n.parents[0], n.grad);
        push(n.parents[1], reduce(n.grad, kind));
    });
}

Var sub(const Var& a, const Var& b) {
    auto kind = broadcast_kind(a, b, "sub");
    Matrix out = a.value() - expand(b.value(), kind, a.rows(), a.cols());
    return make_result(std::move(out), {a, b}, [kind](Node& n) {
        push(n.parents[0], n.grad);
        push(n.parents[1], -reduce(n.grad, kind));
    });
}

Var mul(const Var& a, const Var& b) {
    auto kind = broadcast_kind(a, b, "mul");
    Matrix bx = expand(b.value(), kind, a.rows(), a.cols());
    Matrix out = a.value().cwiseProduct(bx);
    return make_result(std::move(out), {a, b}, [kind, bx](Node& n) {
        push(n.parents[0], n.grad.cwiseProduct(bx));
        if (n.parents[1]->requires_grad) push(n.parents[1], reduce(n.grad.cwiseProduct(n.parents[0]->value), kind));
    });
}

Var div(const Var& a, const Var& b) {
    auto kind = broadcast_kind(a, b, "div");
    Matrix bx = expand(b.value(), kind, a.rows(), a.cols());
    Matrix out = a.value().cwiseQuotient(bx);
    return make_result(std::move(out), {a, b}, [kind, bx](Node& n) {
        push(n.parents[0], n.grad.cwiseQuotient(bx));
        if (n.parents[1]->requires_grad) {
            Matrix g = -n.grad.cwiseProduct(n.value).cwiseQuotient(bx);
            push(n.parents[1], reduce(g, kind));
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "matmul: inner dimensions " + std::to_string(a.cols()) +
                                                  " and " + std::to_string(b.rows()));
    }
    Matrix out = a.value() * b.value();
    return make_result(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) push(n.parents[0], n.grad * n.parents[1]->value.transpose());
        if (n.parents[1]->requires_grad) push(n.parents[1], n.parents[0]->value.transpose() * n.grad);
    });
}

Var scale(const Var& a, double s) {
    return make_result(a.value() * s, {a}, [s](Node& n) { push(n.parents[0], n.grad * s); });
}

Var add_scalar(const Var& a, double s) {
    return make_result(a.value().array() + s, {a}, [](Node& n) { push(n.parents[0], n.grad); });
}

Var relu(const Var& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return make_result(std::move(out), {a}, [](Node& n) {
        const Matrix& x = n.parents[0]->value;
        push(n.parents[0], (x.array() > 0.0).select(n.grad, 0.0));
    });
}

Var leaky_relu(const Var& a, double slope) {
    Matrix out = (a.value().array() > 0.0).select(a.value(), a.value() * slope);
    return make_result(std::move(out), {a}, [slope](Node& n) {
        const Matrix& x = n.parents[0]->value;
        push(n.parents[0], (x.array() > 0.0).select(n.grad, n.grad * slope));
    });
}

Var sigmoid(const Var& a) {
    Matrix out = a.value().unaryExpr([](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    });
    return make_result(std::move(out), {a}, [](Node& n) {
        Matrix d = n.value.array() * (1.0 - n.value.array());
        push(n.parents[0], n.grad.cwiseProduct(d));
    });
}

Var tanh(const Var& a) {
    Matrix out = a.value().array().tanh();
    return make_result(std::move(out), {a}, [](Node& n) {
        Matrix d = 1.0 - n.value.array().square();
        push(n.parents[0], n.grad.cwiseProduct(d));
    });
}

Var square(const Var& a) {
    return make_result(a.value().array().square(), {a}, [](Node& n) {
        push(n.parents[0], 2.0 * n.grad.cwiseProduct(n.parents[0]->value));
    });
}

Var abs(const Var& a) {
    return make_result(a.value().cwiseAbs(), {a}, [](Node& n) {
        Matrix sgn = n.parents[0]->value.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
        push(n.parents[0], n.grad.cwiseProduct(sgn));
    });
}

Var sum(const Var& a) {
    return make_result(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& n) {
        const Matrix& x = n.parents[0]->value;
        push(n.parents[0], Matrix::Constant(x.rows(), x.cols(), n.grad(0, 0)));
    });
}

Var mean(const Var& a) {
    double count = static_cast<double>(a.value().size());
    return make_result(Matrix::Constant(1, 1, a.value().sum() / count), {a}, [count](Node& n) {
        const Matrix& x = n.parents[0]->value;
        push(n.parents[0], Matrix::Constant(x.rows(), x.cols(), n.grad(0, 0) / count));
    });
}

Var mean_rows(const Var& a) {
    double rows = static_cast<double>(a.rows());
    Matrix out = a.value().colwise().sum() / rows;
    return make_result(std::move(out), {a}, [rows](Node& n) {
        push(n.parents[0], (n.grad / rows).replicate(n.parents[0]->value.rows(), 1));
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    Index rows = parts.front().rows();
    Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw Error(ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<Index> widths;
    Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        widths.push_back(p.cols());
        c += p.cols();
    }
    return make_result(std::move(out), parts, [widths](Node& n) {
        Index c0 = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            if (n.parents[i]->requires_grad) push(n.parents[i], n.grad.middleCols(c0, widths[i]));
            c0 += widths[i];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    Index cols = parts.front().cols();
    Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw Error(ErrorCode::ShapeMismatch, "concat_rows: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::vector<Index> heights;
    Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        heights.push_back(p.rows());
        r += p.rows();
    }
    return make_result(std::move(out), parts, [heights](Node& n) {
        Index r0 = 0;
        for (std::size_t i = 0; i < heights.size(); ++i) {
            if (n.parents[i]->requires_grad) push(n.parents[i], n.grad.middleRows(r0, heights[i]));
            r0 += heights[i];
        }
    });
}

Var slice_cols(const Var& a, Index start, Index count) {
    if (start < 0 || start + count > a.cols()) throw Error(ErrorCode::ShapeMismatch, "slice_cols out of range");
    return make_result(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
        const Matrix& x = n.parents[0]->value;
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        g.middleCols(start, count) = n.grad;
        push(n.parents[0], g);
    });
}

Var slice_rows(const Var& a, Index start, Index count) {
    if (start < 0 || start + count > a.rows()) throw Error(ErrorCode::ShapeMismatch, "slice_rows out of range");
    return make_result(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
        const Matrix& x = n.parents[0]->value;
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        g.middleRows(start, count) = n.grad;
        push(n.parents[0], g);
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Matrix& in = x.value();
    const Index rows = in.rows();
    const Index cols = in.cols();
    if (gain.cols() != cols || bias.cols() != cols) throw Error(ErrorCode::ShapeMismatch, "layer_norm: gain/bias width");
    Matrix xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Index r = 0; r < rows; ++r) {
        double mu = in.row(r).mean();
        double var = (in.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (in.row(r).array() - mu) * inv_std(r);
    }
    Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
    out.array().rowwise() += bias.value().row(0).array();
    return make_result(std::move(out), {x, gain, bias}, [xhat, inv_std](Node& n) {
        const Matrix& g = n.grad;
        const Matrix& gamma = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Matrix dxhat = g.array().rowwise() * gamma.row(0).array();
            Matrix dx(dxhat.rows(), dxhat.cols());
            for (Index r = 0; r < dxhat.rows(); ++r) {
                double m1 = dxhat.row(r).mean();
                double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
            }
            push(n.parents[0], dx);
        }
        if (n.parents[1]->requires_grad) push(n.parents[1], g.cwiseProduct(xhat).colwise().sum());
        if (n.parents[2]->requires_grad) push(n.parents[2], g.colwise().sum());
    });
}

Var bce_with_logits(const Var& logits, double label) {
    const Matrix& z = logits.value();
    // log(1 + e^{-|z|}) + max(z, 0) - z*y
    Matrix per = z.unaryExpr([label](double v) {
        return std::log1p(std::exp(-std::abs(v))) + std::max(v, 0.0) - v * label;
    });
    double count = static_cast<double>(z.size());
    return make_result(Matrix::Constant(1, 1, per.sum() / count), {logits}, [label, count](Node& n) {
        const Matrix& zz = n.parents[0]->value;
        Matrix g = zz.unaryExpr([label](double v) {
            double p = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            return p - label;
        });
        push(n.parents[0], g * (n.grad(0, 0) / count));
    });
}

Var attention_core(const Var& q, const Var& k, const Var& v, const std::vector<Segment>& segments, int n_heads,
                   std::vector<Matrix>* weights) {
    const Index rows = q.rows();
    const Index d = q.cols();
    if (k.rows() != rows || v.rows() != rows || k.cols() != d || v.cols() != d) {
        throw Error(ErrorCode::ShapeMismatch, "attention: Q, K, V shapes differ");
    }
    if (n_heads <= 0 || d % n_heads != 0) {
        throw Error(ErrorCode::ShapeMismatch, "attention: d_model not divisible by head count");
    }
    const Index dk = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    auto probs = std::make_shared<std::vector<Matrix>>();
    probs->reserve(segments.size() * static_cast<std::size_t>(n_heads));
    Matrix out = Matrix::Zero(rows, d);
    for (const auto& seg : segments) {
        if (seg.length <= 0 || seg.start < 0 || seg.start + seg.length > rows) {
            throw Error(ErrorCode::ShapeMismatch, "attention: segment outside the batch");
        }
        for (int h = 0; h < n_heads; ++h) {
            auto qs = q.value().block(seg.start, h * dk, seg.length, dk);
            auto ks = k.value().block(seg.start, h * dk, seg.length, dk);
            auto vs = v.value().block(seg.start, h * dk, seg.length, dk);
            Matrix logits = (qs * ks.transpose()) * inv_sqrt;
            if (!logits.allFinite()) throw Error(ErrorCode::NonFiniteLogits, "attention logits are not finite");
            for (Index r = 0; r < logits.rows(); ++r) {
                double mx = logits.row(r).maxCoeff();
                logits.row(r) = (logits.row(r).array() - mx).exp();
                logits.row(r) /= logits.row(r).sum();
            }
            out.block(seg.start, h * dk, seg.length, dk) = logits * vs;
            probs->push_back(std::move(logits));
        }
    }
    if (weights) *weights = *probs;

    return make_result(std::move(out), {q, k, v}, [segments, n_heads, dk, inv_sqrt, probs](Node& n) {
        const Matrix& Q = n.parents[0]->value;
        const Matrix& K = n.parents[1]->value;
        const Matrix& V = n.parents[2]->value;
        Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
        Matrix dK = Matrix::Zero(K.rows(), K.cols());
        Matrix dV = Matrix::Zero(V.rows(), V.cols());
        std::size_t idx = 0;
        for (const auto& seg : segments) {
            for (int h = 0; h < n_heads; ++h) {
                const Matrix& A = (*probs)[idx++];
                auto go = n.grad.block(seg.start, h * dk, seg.length, dk);
                auto qs = Q.block(seg.start, h * dk, seg.length, dk);
                auto ks = K.block(seg.start, h * dk, seg.length, dk);
                auto vs = V.block(seg.start, h * dk, seg.length, dk);
                Matrix dA = go * vs.transpose();
                dV.block(seg.start, h * dk, seg.length, dk) += A.transpose() * go;
                Eigen::VectorXd rowdot = (dA.cwiseProduct(A)).rowwise().sum();
                Matrix dS = A.cwiseProduct(dA.colwise() - rowdot) * inv_sqrt;
                dQ.block(seg.start, h * dk, seg.length, dk) += dS * ks;
                dK.block(seg.start, h * dk, seg.length, dk) += dS.transpose() * qs;
            }
        }
        push(n.parents[0], dQ);
        push(n.parents[1], dK);
        push(n.parents[2], dV);
    });
}

Linear make_linear(Index in, Index out, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, out);
    for (Index i = 0; i < in; ++i)
        for (Index j = 0; j < out; ++j) w(i, j) = rng.uniform(-bound, bound);
    return {parameter(std::move(w)), parameter(Matrix::Zero(1, out))};
}

Linear make_zero_linear(Index in, Index out) {
    return {parameter(Matrix::Zero(in, out)), parameter(Matrix::Zero(1, out))};
}

Var activate(const Var& x, Activation act) {
    switch (act) {
        case Activation::None: return x;
        case Activation::Relu: return relu(x);
        case Activation::LeakyRelu: return leaky_relu(x, 0.01);
        case Activation::Tanh: return tanh(x);
        case Activation::Sigmoid: return sigmoid(x);
    }
    return x;
}

Adam::Adam(std::vector<Var> params, Options opts) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (p.grad().size() == 0) continue;
        m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * p.grad();
        v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * p.grad().cwiseAbs2();
        Matrix mhat = m_[i] / c1;
        Matrix vhat = v_[i] / c2;
        p.mutable_value().array() -= opts_.lr * mhat.array() / (vhat.array().sqrt() + opts_.eps);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace oasis::nn
