#pragma once

#include <string>
#include <vector>

#include "certiformer/bounds.hpp"
#include "certiformer/model.hpp"

namespace certiformer {

// Primitive sub-layer kinds. Every op produces an [n x width] activation
// (n = sequence positions); all except Scores and WeightedSum act on each
// position independently.
enum class OpKind {
    Input,        // the word embeddings themselves
    Affine,       // out[p] = W * a[p] + b
    Unary,        // out[p][j] = fn(a[p][j])
    Residual,     // out[p] = a[p] + b[p]
    Multiply,     // out[p][j] = a[p][a_index[j]] * b[p][b_index[j]]
    Scores,       // out[p][(h,j)] = sum_c q[p][h*dqk+c] * k[j][h*dqk+c]
    WeightedSum,  // out[p][(h,c)] = sum_k s[p][h*n+k] * v[k][h*dqk+c]
};

// Position of an op inside a self-attention block. Everything from the
// score product up to the weighted sum is bounded by the forward process in
// backward/forward mode; AttnOutput marks the block boundary the backward
// pass substitutes at.
enum class AttnRole { None, Score, ExpScore, SumExp, Recip, Prob, AttnOutput };

struct OpNode {
    OpKind kind = OpKind::Input;
    int width = 0;
    int in_a = -1;
    int in_b = -1;
    Matrix W;
    Vec b;
    UnaryKind fn = UnaryKind::Relu;
    std::vector<int> a_index, b_index;  // Multiply operand maps
    int heads = 0;
    int head_dim = 0;
    AttnRole role = AttnRole::None;
    std::string label;
};

// The model lowered to a flat op list for one sequence length. Op 0 is the
// Input; op inputs always refer to earlier ids, residual skip sources
// included, so a single reverse sweep visits producers after consumers.
struct SublayerProgram {
    int n = 0;
    int d_model = 0;
    std::vector<OpNode> ops;

    int output_id() const { return static_cast<int>(ops.size()) - 1; }
    int size() const { return static_cast<int>(ops.size()); }
};

// Lowers the model for sequences of length n. Emits, per layer:
//   LN -> q,k,v affine -> score product -> exp -> key sum -> reciprocal ->
//   probability product -> weighted value sum -> output affine -> residual
//   -> LN -> FFN affine -> ReLU -> affine -> residual
// Modified LN lowers to one affine (diag(w)(I - 11^T/d) plus bias); Standard
// LN additionally emits square -> mean -> sqrt -> reciprocal -> multiply.
SublayerProgram compile(const TransformerModel& model, int n);

// Plain evaluation of every op; index matches program op ids.
using Activations = std::vector<Matrix>;

Activations eval_program(const SublayerProgram& prog, const Matrix& X);

// Mean-over-positions pooling followed by the classifier head.
Vec pool_mean(const Matrix& final_act);
Vec logits_from_embeddings(const TransformerModel& model, const SublayerProgram& prog,
                           const Matrix& X);
Vec forward_eval(const TransformerModel& model, const SublayerProgram& prog,
                 const std::vector<int>& ids);

int argmax(const Vec& v);

// Central finite-difference gradient of the margin logits[c] - logits[other]
// with respect to every input embedding entry; [n x d_model].
Matrix input_gradients(const TransformerModel& model, const SublayerProgram& prog,
                       const Matrix& X, int c, int other, double h = 1e-4);

}  // namespace certiformer
