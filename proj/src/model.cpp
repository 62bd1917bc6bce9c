#include "certiformer/model.hpp"

#include <cmath>

#include "certiformer/errors.hpp"

namespace certiformer {

std::string layernorm_name(LayerNormMode m) {
    switch (m) {
    case LayerNormMode::Standard: return "standard";
    case LayerNormMode::Modified: return "modified";
    case LayerNormMode::None: return "none";
    }
    return "?";
}

LayerNormMode parse_layernorm(const std::string& s) {
    if (s == "standard") return LayerNormMode::Standard;
    if (s == "modified") return LayerNormMode::Modified;
    if (s == "none") return LayerNormMode::None;
    throw ConfigError("unknown layernorm mode '" + s + "'");
}

namespace {

void check_finite(const Matrix& m, const std::string& name) {
    if (!all_finite(m)) throw FormatError("tensor " + name + " contains NaN or inf");
}

void check_finite(const Vec& v, const std::string& name) {
    if (!all_finite(v)) throw FormatError("tensor " + name + " contains NaN or inf");
}

void check_ln(const LayerNormParams& ln, LayerNormMode mode, int d, const std::string& name) {
    if (mode == LayerNormMode::None) return;
    if (static_cast<int>(ln.w.size()) != d || static_cast<int>(ln.b.size()) != d)
        throw ShapeError(name + ": expected gain/bias of width " + std::to_string(d));
    check_finite(ln.w, name + ".w");
    check_finite(ln.b, name + ".b");
}

}  // namespace

void TransformerModel::validate() const {
    const int d = hyper.d_model;
    if (hyper.num_layers < 1 || hyper.heads < 1 || d < 1)
        throw ShapeError("model hyperparameters must be positive");
    if (d % hyper.heads != 0 || hyper.d_qk * hyper.heads != d)
        throw ShapeError("d_model must equal heads * d_qk");
    if (hyper.num_classes < 2) throw ShapeError("need at least two classes");
    if (hyper.layernorm == LayerNormMode::Standard && hyper.ln_eps <= 0.0)
        throw ShapeError("standard layernorm needs a positive variance floor");
    embed.check_shape(hyper.vocab_size, d, "embed");
    pos_enc.check_shape(hyper.max_len, d, "pos_enc");
    check_finite(embed, "embed");
    check_finite(pos_enc, "pos_enc");
    if (static_cast<int>(layers.size()) != hyper.num_layers)
        throw ShapeError("layer count does not match num_layers");
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& L = layers[i];
        const std::string nm = "layers." + std::to_string(i);
        L.wq.check_shape(d, d, (nm + ".wq").c_str());
        L.wk.check_shape(d, d, (nm + ".wk").c_str());
        L.wv.check_shape(d, d, (nm + ".wv").c_str());
        L.wo.check_shape(d, d, (nm + ".wo").c_str());
        if (static_cast<int>(L.bq.size()) != d || static_cast<int>(L.bk.size()) != d ||
            static_cast<int>(L.bv.size()) != d || static_cast<int>(L.bo.size()) != d)
            throw ShapeError(nm + ": projection bias width mismatch");
        L.ffn.w1.check_shape(hyper.d_ff, d, (nm + ".ffn.w1").c_str());
        L.ffn.w2.check_shape(d, hyper.d_ff, (nm + ".ffn.w2").c_str());
        if (static_cast<int>(L.ffn.b1.size()) != hyper.d_ff ||
            static_cast<int>(L.ffn.b2.size()) != d)
            throw ShapeError(nm + ": ffn bias width mismatch");
        check_ln(L.ln1, hyper.layernorm, d, nm + ".ln1");
        check_ln(L.ln2, hyper.layernorm, d, nm + ".ln2");
        for (const Matrix* m : {&L.wq, &L.wk, &L.wv, &L.wo, &L.ffn.w1, &L.ffn.w2})
            check_finite(*m, nm);
        for (const Vec* v : {&L.bq, &L.bk, &L.bv, &L.bo, &L.ffn.b1, &L.ffn.b2})
            check_finite(*v, nm);
    }
    head_w.check_shape(hyper.num_classes, d, "head_w");
    if (static_cast<int>(head_b.size()) != hyper.num_classes)
        throw ShapeError("head bias width mismatch");
    check_finite(head_w, "head_w");
    check_finite(head_b, "head_b");
}

Matrix TransformerModel::input_embeddings(const std::vector<int>& ids) const {
    const int n = static_cast<int>(ids.size());
    if (n == 0) throw EmptyInput("no tokens");
    if (n > hyper.max_len)
        throw ShapeError("sequence of length " + std::to_string(n) + " exceeds max_len " +
                         std::to_string(hyper.max_len));
    Matrix X(n, hyper.d_model);
    for (int i = 0; i < n; ++i) {
        if (ids[i] < 0 || ids[i] >= hyper.vocab_size)
            throw ShapeError("token id " + std::to_string(ids[i]) + " outside vocabulary");
        for (int j = 0; j < hyper.d_model; ++j) X(i, j) = embed(ids[i], j) + pos_enc(i, j);
    }
    return X;
}

Matrix sinusoidal_positions(int max_len, int d_model) {
    Matrix P(max_len, d_model);
    for (int p = 0; p < max_len; ++p) {
        for (int i = 0; i < d_model; i += 2) {
            const double rate = std::pow(10000.0, -static_cast<double>(i) / d_model);
            P(p, i) = std::sin(p * rate);
            if (i + 1 < d_model) P(p, i + 1) = std::cos(p * rate);
        }
    }
    return P;
}

}  // namespace certiformer
