#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// Every value is a 2-D Eigen matrix. Graphs are built eagerly by the free
// functions below and released when the last Var referencing them goes
// away; parameters are leaf Vars that persist across steps.

#include "oasis/random.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

namespace oasis::nn {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix& g);
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    double item() const { return node_->value(0, 0); }
    void zero_grad();
    bool defined() const { return static_cast<bool>(node_); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);

/// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf that
/// requires a gradient. Gradients accumulate; call zero_grad between steps.
void backward(const Var& root);

// Elementwise binary ops broadcast `b` over `a` when b is 1xC (per column)
// or 1x1 (scalar); otherwise shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.01);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Column means, 1xC.
Var mean_rows(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);

/// Row-wise layer normalization with per-column gain/bias (both 1xC).
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Mean binary cross entropy of sigmoid(logits) against a constant label,
/// computed in the numerically stable logit form.
Var bce_with_logits(const Var& logits, double label);

/// Contiguous block of rows that attend to each other.
struct Segment {
    Index start = 0;
    Index length = 0;
};

/// Multi-head scaled dot-product attention without projections. Q, K, V are
/// (rows x d_model); heads split the columns into n_heads blocks of width
/// d_model / n_heads. Attention is restricted to rows of the same segment.
/// When `weights` is non-null it receives one (len x len) matrix per
/// (segment, head), segment-major.
Var attention_core(const Var& q, const Var& k, const Var& v, const std::vector<Segment>& segments,
                   int n_heads, std::vector<Matrix>* weights = nullptr);

/// Dense layer parameters: y = x W + b.
struct Linear {
    Var weight;  // in x out
    Var bias;    // 1 x out

    Var operator()(const Var& x) const { return add(matmul(x, weight), bias); }
    Index in_features() const { return weight.rows(); }
    Index out_features() const { return weight.cols(); }
};

/// Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
Linear make_linear(Index in, Index out, Rng& rng);
Linear make_zero_linear(Index in, Index out);

enum class Activation { None, Relu, LeakyRelu, Tanh, Sigmoid };
Var activate(const Var& x, Activation act);

class Adam {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam(std::vector<Var> params, Options opts);

    void step();
    void zero_grad();
    const std::vector<Var>& params() const { return params_; }

private:
    std::vector<Var> params_;
    Options opts_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
};

}  // namespace oasis::nn
