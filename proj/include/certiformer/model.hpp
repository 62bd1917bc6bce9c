#pragma once

#include <string>
#include <vector>

#include "certiformer/matrix.hpp"

namespace certiformer {

// Layer normalization variants. Standard divides by the standard deviation;
// Modified drops that division (y = w * (x - mean) + b), which keeps the
// whole sub-layer affine and is dramatically friendlier to certification.
enum class LayerNormMode { Standard, Modified, None };

std::string layernorm_name(LayerNormMode m);
LayerNormMode parse_layernorm(const std::string& s);

struct LayerNormParams {
    Vec w, b;
};

struct FeedForward {
    Matrix w1;  // [d_ff x d_model]
    Vec b1;
    Matrix w2;  // [d_model x d_ff]
    Vec b2;
};

struct TransformerLayer {
    Matrix wq, wk, wv, wo;  // [d_model x d_model]
    Vec bq, bk, bv, bo;
    LayerNormParams ln1, ln2;
    FeedForward ffn;
};

struct ModelHyper {
    int num_layers = 1;
    int heads = 1;
    int d_model = 8;
    int d_ff = 16;
    int d_qk = 8;  // per-head query/key/value width, d_model / heads
    int max_len = 16;
    int vocab_size = 16;
    int num_classes = 2;
    LayerNormMode layernorm = LayerNormMode::Modified;
    double ln_eps = 1e-3;  // variance floor of standard layer norm
};

// A small post-norm Transformer encoder for text classification.
//
// Per layer: h = LN1(x); r = h + Wo*Attn(q,k,v of h); g = LN2(r);
// out = g + FFN(g). Residual adds take the preceding normalization output
// as their skip source, so every LN sees "x + sublayer(x)". Logits are an
// affine head on the mean over positions of the last layer's output.
struct TransformerModel {
    ModelHyper hyper;
    Matrix embed;    // [vocab x d_model]
    Matrix pos_enc;  // [max_len x d_model], fixed sinusoidal constants
    std::vector<TransformerLayer> layers;
    Matrix head_w;  // [num_classes x d_model]
    Vec head_b;

    // Shape/finiteness checks; throws ShapeError or FormatError.
    void validate() const;

    // Clean input embeddings for a token sequence: embed row + positional
    // constant, [n x d_model].
    Matrix input_embeddings(const std::vector<int>& ids) const;
};

// Standard fixed sinusoidal position table.
Matrix sinusoidal_positions(int max_len, int d_model);

}  // namespace certiformer
