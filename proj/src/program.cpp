#include "certiformer/program.hpp"

#include <cmath>

#include "certiformer/errors.hpp"
#include "certiformer/kernels.hpp"

namespace certiformer {

namespace {

int push(SublayerProgram& prog, OpNode op) {
    prog.ops.push_back(std::move(op));
    return prog.size() - 1;
}

int emit_affine(SublayerProgram& prog, int in, Matrix W, Vec b, const std::string& label) {
    OpNode op;
    op.kind = OpKind::Affine;
    op.in_a = in;
    op.width = W.rows;
    op.W = std::move(W);
    op.b = std::move(b);
    op.label = label;
    return push(prog, std::move(op));
}

int emit_unary(SublayerProgram& prog, int in, UnaryKind fn, AttnRole role,
               const std::string& label) {
    OpNode op;
    op.kind = OpKind::Unary;
    op.in_a = in;
    op.width = prog.ops[in].width;
    op.fn = fn;
    op.role = role;
    op.label = label;
    return push(prog, std::move(op));
}

// Lowers one layer-norm application. Returns the id of its output (or the
// input id untouched when normalization is disabled).
int emit_layernorm(SublayerProgram& prog, int in, const LayerNormParams& ln, LayerNormMode mode,
                   double ln_eps, const std::string& label) {
    if (mode == LayerNormMode::None) return in;
    const int d = prog.ops[in].width;
    if (mode == LayerNormMode::Modified) {
        Matrix W(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) W(i, j) = ln.w[i] * ((i == j ? 1.0 : 0.0) - 1.0 / d);
        return emit_affine(prog, in, std::move(W), ln.b, label);
    }
    // Standard layer norm: center, then assemble 1/std via
    // square -> mean(+eps) -> sqrt -> reciprocal, multiply it back in and
    // apply the gain.
    Matrix C(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) C(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / d;
    const int centered = emit_affine(prog, in, std::move(C), Vec(d, 0.0), label + ".center");
    const int squared =
        emit_unary(prog, centered, UnaryKind::Square, AttnRole::None, label + ".square");
    Matrix M(1, d);
    for (int j = 0; j < d; ++j) M(0, j) = 1.0 / d;
    const int var = emit_affine(prog, squared, std::move(M), Vec(1, ln_eps), label + ".var");
    const int sd = emit_unary(prog, var, UnaryKind::Sqrt, AttnRole::None, label + ".std");
    const int rinv =
        emit_unary(prog, sd, UnaryKind::Reciprocal, AttnRole::None, label + ".rstd");
    OpNode mul;
    mul.kind = OpKind::Multiply;
    mul.in_a = centered;
    mul.in_b = rinv;
    mul.width = d;
    mul.a_index.resize(d);
    mul.b_index.assign(d, 0);
    for (int j = 0; j < d; ++j) mul.a_index[j] = j;
    mul.label = label + ".normalize";
    const int normed = push(prog, std::move(mul));
    Matrix G(d, d);
    for (int i = 0; i < d; ++i) G(i, i) = ln.w[i];
    return emit_affine(prog, normed, std::move(G), ln.b, label + ".scale");
}

}  // namespace

SublayerProgram compile(const TransformerModel& model, int n) {
    model.validate();
    if (n < 1) throw EmptyInput("cannot compile a program for zero positions");
    if (n > model.hyper.max_len) throw ShapeError("sequence length exceeds max_len");

    const int d = model.hyper.d_model;
    const int H = model.hyper.heads;
    const int dqk = model.hyper.d_qk;

    SublayerProgram prog;
    prog.n = n;
    prog.d_model = d;

    OpNode input;
    input.kind = OpKind::Input;
    input.width = d;
    input.label = "input";
    int cur = push(prog, std::move(input));

    for (int li = 0; li < model.hyper.num_layers; ++li) {
        const TransformerLayer& L = model.layers[li];
        const std::string base = "layers." + std::to_string(li);
        const int ln1 = emit_layernorm(prog, cur, L.ln1, model.hyper.layernorm,
                                       model.hyper.ln_eps, base + ".ln1");
        const int q = emit_affine(prog, ln1, L.wq, L.bq, base + ".q");
        const int k = emit_affine(prog, ln1, L.wk, L.bk, base + ".k");
        const int v = emit_affine(prog, ln1, L.wv, L.bv, base + ".v");

        OpNode sc;
        sc.kind = OpKind::Scores;
        sc.in_a = q;
        sc.in_b = k;
        sc.width = H * n;
        sc.heads = H;
        sc.head_dim = dqk;
        sc.role = AttnRole::Score;
        sc.label = base + ".scores";
        const int scores = push(prog, std::move(sc));

        const int expd =
            emit_unary(prog, scores, UnaryKind::Exp, AttnRole::ExpScore, base + ".exp");

        Matrix S(H, H * n);
        for (int h = 0; h < H; ++h)
            for (int j = 0; j < n; ++j) S(h, h * n + j) = 1.0;
        const int sums = emit_affine(prog, expd, std::move(S), Vec(H, 0.0), base + ".sumexp");
        prog.ops[sums].role = AttnRole::SumExp;

        const int rec =
            emit_unary(prog, sums, UnaryKind::Reciprocal, AttnRole::Recip, base + ".recip");

        OpNode pm;
        pm.kind = OpKind::Multiply;
        pm.in_a = expd;
        pm.in_b = rec;
        pm.width = H * n;
        pm.a_index.resize(H * n);
        pm.b_index.resize(H * n);
        for (int h = 0; h < H; ++h)
            for (int j = 0; j < n; ++j) {
                pm.a_index[h * n + j] = h * n + j;
                pm.b_index[h * n + j] = h;
            }
        pm.role = AttnRole::Prob;
        pm.label = base + ".probs";
        const int probs = push(prog, std::move(pm));

        OpNode ws;
        ws.kind = OpKind::WeightedSum;
        ws.in_a = probs;
        ws.in_b = v;
        ws.width = d;
        ws.heads = H;
        ws.head_dim = dqk;
        ws.role = AttnRole::AttnOutput;
        ws.label = base + ".attn";
        const int attn = push(prog, std::move(ws));

        const int wo = emit_affine(prog, attn, L.wo, L.bo, base + ".wo");

        OpNode r1;
        r1.kind = OpKind::Residual;
        r1.in_a = wo;
        r1.in_b = ln1;
        r1.width = d;
        r1.label = base + ".res1";
        const int res1 = push(prog, std::move(r1));

        const int ln2 = emit_layernorm(prog, res1, L.ln2, model.hyper.layernorm,
                                       model.hyper.ln_eps, base + ".ln2");
        const int f1 = emit_affine(prog, ln2, L.ffn.w1, L.ffn.b1, base + ".ffn1");
        const int act = emit_unary(prog, f1, UnaryKind::Relu, AttnRole::None, base + ".relu");
        const int f2 = emit_affine(prog, act, L.ffn.w2, L.ffn.b2, base + ".ffn2");

        OpNode r2;
        r2.kind = OpKind::Residual;
        r2.in_a = f2;
        r2.in_b = ln2;
        r2.width = d;
        r2.label = base + ".res2";
        cur = push(prog, std::move(r2));
    }
    return prog;
}

Activations eval_program(const SublayerProgram& prog, const Matrix& X) {
    const int n = prog.n;
    X.check_shape(n, prog.d_model, "eval input");
    Activations act(prog.size());
    for (int id = 0; id < prog.size(); ++id) {
        const OpNode& op = prog.ops[id];
        Matrix out(n, op.width);
        switch (op.kind) {
        case OpKind::Input:
            out = X;
            break;
        case OpKind::Affine: {
            const Matrix& a = act[op.in_a];
            for (int p = 0; p < n; ++p)
                for (int i = 0; i < op.width; ++i)
                    out(p, i) = dot(op.W.row(i), a.row(p), op.W.cols) + op.b[i];
            break;
        }
        case OpKind::Unary: {
            const Matrix& a = act[op.in_a];
            for (int p = 0; p < n; ++p)
                for (int j = 0; j < op.width; ++j) out(p, j) = eval_unary(op.fn, a(p, j));
            break;
        }
        case OpKind::Residual: {
            const Matrix& a = act[op.in_a];
            const Matrix& b = act[op.in_b];
            for (int p = 0; p < n; ++p)
                for (int j = 0; j < op.width; ++j) out(p, j) = a(p, j) + b(p, j);
            break;
        }
        case OpKind::Multiply: {
            const Matrix& a = act[op.in_a];
            const Matrix& b = act[op.in_b];
            for (int p = 0; p < n; ++p)
                for (int j = 0; j < op.width; ++j)
                    out(p, j) = a(p, op.a_index[j]) * b(p, op.b_index[j]);
            break;
        }
        case OpKind::Scores: {
            const Matrix& q = act[op.in_a];
            const Matrix& k = act[op.in_b];
            for (int p = 0; p < n; ++p)
                for (int h = 0; h < op.heads; ++h)
                    for (int j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (int c = 0; c < op.head_dim; ++c)
                            s += q(p, h * op.head_dim + c) * k(j, h * op.head_dim + c);
                        out(p, h * n + j) = s;
                    }
            break;
        }
        case OpKind::WeightedSum: {
            const Matrix& s = act[op.in_a];
            const Matrix& v = act[op.in_b];
            for (int p = 0; p < n; ++p)
                for (int h = 0; h < op.heads; ++h)
                    for (int c = 0; c < op.head_dim; ++c) {
                        double acc = 0.0;
                        for (int k = 0; k < n; ++k)
                            acc += s(p, h * n + k) * v(k, h * op.head_dim + c);
                        out(p, h * op.head_dim + c) = acc;
                    }
            break;
        }
        }
        act[id] = std::move(out);
    }
    return act;
}

Vec pool_mean(const Matrix& final_act) {
    Vec z(final_act.cols, 0.0);
    for (int p = 0; p < final_act.rows; ++p)
        for (int j = 0; j < final_act.cols; ++j) z[j] += final_act(p, j);
    for (double& x : z) x /= final_act.rows;
    return z;
}

Vec logits_from_embeddings(const TransformerModel& model, const SublayerProgram& prog,
                           const Matrix& X) {
    const Activations act = eval_program(prog, X);
    const Vec z = pool_mean(act.back());
    Vec logits(model.hyper.num_classes);
    for (int c = 0; c < model.hyper.num_classes; ++c)
        logits[c] = dot(model.head_w.row(c), z.data(), model.hyper.d_model) + model.head_b[c];
    return logits;
}

Vec forward_eval(const TransformerModel& model, const SublayerProgram& prog,
                 const std::vector<int>& ids) {
    return logits_from_embeddings(model, prog, model.input_embeddings(ids));
}

int argmax(const Vec& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

Matrix input_gradients(const TransformerModel& model, const SublayerProgram& prog,
                       const Matrix& X, int c, int other, double h) {
    Matrix g(X.rows, X.cols);
    Matrix probe = X;
    for (int p = 0; p < X.rows; ++p)
        for (int j = 0; j < X.cols; ++j) {
            probe(p, j) = X(p, j) + h;
            const Vec up = logits_from_embeddings(model, prog, probe);
            probe(p, j) = X(p, j) - h;
            const Vec dn = logits_from_embeddings(model, prog, probe);
            probe(p, j) = X(p, j);
            g(p, j) = ((up[c] - up[other]) - (dn[c] - dn[other])) / (2.0 * h);
        }
    return g;
}

}  // namespace certiformer
