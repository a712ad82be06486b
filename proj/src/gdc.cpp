#include "oasis/gdc.hpp"

#include "oasis/error.hpp"

#include <cmath>
#include <string>

namespace oasis::gdc {

void AttentionConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
        throw Error(ErrorCode::ShapeMismatch, "n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                                                  std::to_string(d_model) + ")");
    }
}

std::vector<nn::Segment> SequenceBatch::segments() const {
    std::vector<nn::Segment> out;
    for (int b = 0; b < batch; ++b) out.push_back({static_cast<nn::Index>(b) * N, N});
    return out;
}

Matrix positional_encoding(int N, int d_model) {
    if (N < 1) throw Error(ErrorCode::ShapeMismatch, "positional encoding needs N >= 1");
    if (d_model < 2 || d_model % 2 != 0) {
        throw Error(ErrorCode::OddDimension, "d_model must be even and >= 2, got " + std::to_string(d_model));
    }
    Matrix pe(N, d_model);
    for (int p = 0; p < N; ++p) {
        for (int i = 0; i < d_model / 2; ++i) {
            const double angle = p / std::pow(10000.0, 2.0 * i / d_model);
            pe(p, 2 * i) = std::sin(angle);
            pe(p, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

SequenceBatch add_pe(const SequenceBatch& x, const Matrix& pe) {
    if (pe.rows() != x.N || pe.cols() != x.values.cols() || x.values.rows() != static_cast<nn::Index>(x.batch) * x.N) {
        throw Error(ErrorCode::ShapeMismatch, "positional table does not match (N, d_model)");
    }
    SequenceBatch out = x;
    for (int b = 0; b < x.batch; ++b) out.values.middleRows(static_cast<nn::Index>(b) * x.N, x.N) += pe;
    return out;
}

Matrix QKV::head(const Matrix& m, int b, int h) const {
    const nn::Index dk = m.cols() / n_heads;
    return m.block(static_cast<nn::Index>(b) * N, h * dk, N, dk);
}

QKV project_qkv(const SequenceBatch& x, const Matrix& W_Q, const Matrix& W_K, const Matrix& W_V, int n_heads) {
    const auto d = x.values.cols();
    for (const Matrix* w : {&W_Q, &W_K, &W_V}) {
        if (w->rows() != d || w->cols() != d) throw Error(ErrorCode::ShapeMismatch, "projection must be d_model x d_model");
    }
    AttentionConfig{static_cast<int>(d), n_heads}.validate();
    return {x.values * W_Q, x.values * W_K, x.values * W_V, n_heads, x.batch, x.N};
}

AttentionResult attention(const QKV& qkv) {
    std::vector<nn::Segment> segs;
    for (int b = 0; b < qkv.batch; ++b) segs.push_back({static_cast<nn::Index>(b) * qkv.N, qkv.N});
    AttentionResult r;
    r.output = nn::attention_core(nn::constant(qkv.Q), nn::constant(qkv.K), nn::constant(qkv.V), segs, qkv.n_heads,
                                  &r.weights)
                   .value();
    return r;
}

Matrix segment_positional_encoding(const std::vector<nn::Segment>& segments, nn::Index rows, int d_model) {
    nn::Index longest = 1;
    for (const auto& s : segments) longest = std::max(longest, s.length);
    Matrix table = positional_encoding(static_cast<int>(longest), d_model);
    Matrix out = Matrix::Zero(rows, d_model);
    for (const auto& s : segments) out.middleRows(s.start, s.length) = table.topRows(s.length);
    return out;
}

GdcBlock::GdcBlock(const AttentionConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    auto init = [&] {
        Matrix w(cfg.d_model, cfg.d_model);
        for (nn::Index i = 0; i < w.rows(); ++i)
            for (nn::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
        return nn::parameter(std::move(w));
    };
    W_Q = init();
    W_K = init();
    W_V = init();
    W_O = init();
    ln_gain = nn::parameter(Matrix::Ones(1, cfg.d_model));
    ln_bias = nn::parameter(Matrix::Zero(1, cfg.d_model));
}

nn::Var GdcBlock::forward(const nn::Var& x, const std::vector<nn::Segment>& segments, bool with_pe,
                          std::vector<Matrix>* weights) const {
    if (x.cols() != cfg_.d_model) throw Error(ErrorCode::ShapeMismatch, "GDC input width differs from d_model");
    nn::Var h = x;
    if (with_pe) h = nn::add(h, nn::constant(segment_positional_encoding(segments, x.rows(), cfg_.d_model)));
    nn::Var q = nn::matmul(h, W_Q);
    nn::Var k = nn::matmul(h, W_K);
    nn::Var v = nn::matmul(h, W_V);
    nn::Var attn = nn::attention_core(q, k, v, segments, cfg_.n_heads, weights);
    return nn::layer_norm(nn::add(h, nn::matmul(attn, W_O)), ln_gain, ln_bias);
}

}  // namespace oasis::gdc
