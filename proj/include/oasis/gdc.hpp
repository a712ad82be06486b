#pragma once

// Global dependency capturing: sinusoidal positional encoding followed by
// multi-head self-attention with a residual connection and layer norm.

#include "oasis/nn.hpp"
#include "oasis/random.hpp"

#include <vector>

namespace oasis::gdc {

using nn::Matrix;

struct AttentionConfig {
    int d_model = 64;
    int n_heads = 4;

    int d_k() const { return d_model / n_heads; }
    /// Throws ShapeMismatch unless n_heads divides d_model.
    void validate() const;
};

/// A batch of equally long token sequences stored as (batch * N) x d_model,
/// sequence-major.
struct SequenceBatch {
    int batch = 1;
    int N = 1;
    Matrix values;

    std::vector<nn::Segment> segments() const;
};

/// PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(same angle).
/// Throws OddDimension for odd d_model.
Matrix positional_encoding(int N, int d_model);

/// x + PE, broadcast over the batch. Throws ShapeMismatch.
SequenceBatch add_pe(const SequenceBatch& x, const Matrix& pe);

struct QKV {
    Matrix Q, K, V;  // (batch * N) x d_model
    int n_heads = 1;
    int batch = 1;
    int N = 1;

    /// Rows of sequence b, columns of head h: an N x d_k view.
    Matrix head(const Matrix& m, int b, int h) const;
};

QKV project_qkv(const SequenceBatch& x, const Matrix& W_Q, const Matrix& W_K, const Matrix& W_V, int n_heads);

struct AttentionResult {
    Matrix output;                // (batch * N) x d_model, heads concatenated
    std::vector<Matrix> weights;  // one N x N matrix per (sequence, head)
};

/// Scaled dot-product attention per head: softmax(Q K^T / sqrt(d_k)) V.
AttentionResult attention(const QKV& qkv);

/// Trainable block: LayerNorm(x + concat_heads(attention) W_O).
class GdcBlock {
public:
    GdcBlock() = default;
    GdcBlock(const AttentionConfig& cfg, Rng& rng);

    /// `x` is (rows x d_model); tokens attend within each segment. With
    /// `with_pe` the positional table is added per segment first.
    nn::Var forward(const nn::Var& x, const std::vector<nn::Segment>& segments, bool with_pe = true,
                    std::vector<Matrix>* weights = nullptr) const;

    std::vector<nn::Var> parameters() const { return {W_Q, W_K, W_V, W_O, ln_gain, ln_bias}; }

    const AttentionConfig& config() const { return cfg_; }

    nn::Var W_Q, W_K, W_V, W_O;
    nn::Var ln_gain, ln_bias;

private:
    AttentionConfig cfg_;
};

/// Positional table rows laid out to match `segments` (position restarts
/// at 0 in each segment).
Matrix segment_positional_encoding(const std::vector<nn::Segment>& segments, nn::Index rows, int d_model);

}  // namespace oasis::gdc
