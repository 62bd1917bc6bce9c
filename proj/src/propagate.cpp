#include "certiformer/propagate.hpp"

#include <cmath>

#include "certiformer/errors.hpp"
#include "certiformer/kernels.hpp"
#include "certiformer/parallel.hpp"

namespace certiformer {

namespace {

void ensure_block(Matrix& m, int rows, int cols) {
    if (m.rows == 0) m = Matrix(rows, cols);
}

void add_matrix(Matrix& dst, const Matrix& src) {
    for (size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += src.a[i];
}

// Interval accessors tolerate the hairline lower>upper inversions that pure
// float rounding can produce on degenerate bounds.
void op_interval(const IntervalBounds& iv, int pos, int j, double& l, double& u) {
    l = iv.lo(pos, j);
    u = std::max(l, iv.up(pos, j));
}

}  // namespace

const char* method_name(Method m) {
    switch (m) {
    case Method::BackwardForward: return "bf";
    case Method::FullyForward: return "ff";
    case Method::FullyBackward: return "fb";
    case Method::IBP: return "ibp";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "bf") return Method::BackwardForward;
    if (s == "ff") return Method::FullyForward;
    if (s == "fb") return Method::FullyBackward;
    if (s == "ibp") return Method::IBP;
    throw ConfigError("unknown method '" + s + "' (expected bf, ff, fb or ibp)");
}

BoundEngine::BoundEngine(const SublayerProgram& prog, const PerturbationSpec& spec,
                         const Matrix& x0, Method method)
    : prog_(prog), spec_(spec), x0_(x0), method_(method) {
    spec_.validate(prog_.n);
    x0_.check_shape(prog_.n, prog_.d_model, "clean embeddings");
    t_ = spec_.t();
    ref_width_ = t_ * prog_.d_model;
    pos_index_.assign(prog_.n, -1);
    x_r0_.assign(ref_width_, 0.0);
    for (int r = 0; r < t_; ++r) {
        const int pos = spec_.positions[r] - 1;
        pos_index_[pos] = r;
        for (int j = 0; j < prog_.d_model; ++j) x_r0_[r * prog_.d_model + j] = x0_(pos, j);
    }
}

Counters BoundEngine::counters() const {
    Counters c;
    c.backward_blocks = backward_blocks_.load(std::memory_order_relaxed);
    c.forward_rows = forward_rows_.load(std::memory_order_relaxed);
    return c;
}

// ---------------------------------------------------------------------------
// relaxation caches

void BoundEngine::build_relaxations(int id) {
    const OpNode& op = prog_.ops[id];
    const int n = prog_.n;
    switch (op.kind) {
    case OpKind::Unary: {
        const IntervalBounds& in = iv_[op.in_a];
        auto& cache = relax_u_[id];
        cache.resize(static_cast<size_t>(n) * op.width);
        for (int pos = 0; pos < n; ++pos)
            for (int j = 0; j < op.width; ++j) {
                double l, u;
                op_interval(in, pos, j, l, u);
                cache[static_cast<size_t>(pos) * op.width + j] = relax_unary(op.fn, l, u);
            }
        break;
    }
    case OpKind::Multiply: {
        const IntervalBounds& a = iv_[op.in_a];
        const IntervalBounds& b = iv_[op.in_b];
        auto& cache = relax_b_[id];
        cache.resize(static_cast<size_t>(n) * op.width);
        for (int pos = 0; pos < n; ++pos)
            for (int j = 0; j < op.width; ++j) {
                double la, ua, lb, ub;
                op_interval(a, pos, op.a_index[j], la, ua);
                op_interval(b, pos, op.b_index[j], lb, ub);
                cache[static_cast<size_t>(pos) * op.width + j] = bound_multiply(la, ua, lb, ub);
            }
        break;
    }
    case OpKind::Scores: {
        const IntervalBounds& q = iv_[op.in_a];
        const IntervalBounds& k = iv_[op.in_b];
        const int H = op.heads, dqk = op.head_dim;
        auto& cache = relax_s_[id];
        cache.resize(static_cast<size_t>(n) * H * n * dqk);
        for (int i = 0; i < n; ++i)
            for (int h = 0; h < H; ++h)
                for (int j = 0; j < n; ++j)
                    for (int c = 0; c < dqk; ++c) {
                        double lq, uq, lk, uk;
                        op_interval(q, i, h * dqk + c, lq, uq);
                        op_interval(k, j, h * dqk + c, lk, uk);
                        cache[((static_cast<size_t>(i) * H + h) * n + j) * dqk + c] =
                            bound_multiply(lq, uq, lk, uk);
                    }
        break;
    }
    case OpKind::WeightedSum: {
        const IntervalBounds& s = iv_[op.in_a];
        const IntervalBounds& v = iv_[op.in_b];
        const int H = op.heads, dqk = op.head_dim;
        auto& cache = relax_s_[id];
        cache.resize(static_cast<size_t>(n) * H * dqk * n);
        for (int i = 0; i < n; ++i)
            for (int h = 0; h < H; ++h)
                for (int c = 0; c < dqk; ++c)
                    for (int k = 0; k < n; ++k) {
                        double ls, us, lv, uv;
                        op_interval(s, i, h * n + k, ls, us);
                        op_interval(v, k, h * dqk + c, lv, uv);
                        cache[((static_cast<size_t>(i) * H + h) * dqk + c) * n + k] =
                            bound_multiply(ls, us, lv, uv);
                    }
        break;
    }
    default: break;
    }
}

// ---------------------------------------------------------------------------
// IBP

IntervalBounds BoundEngine::ibp_image(int id) const {
    const OpNode& op = prog_.ops[id];
    const int n = prog_.n;
    switch (op.kind) {
    case OpKind::Affine:
        return ibp_affine(iv_[op.in_a], op.W, op.b);
    case OpKind::Unary:
        return ibp_elementwise(iv_[op.in_a], op.fn);
    case OpKind::Residual: {
        const IntervalBounds& a = iv_[op.in_a];
        const IntervalBounds& b = iv_[op.in_b];
        IntervalBounds out(n, op.width);
        for (int p = 0; p < n; ++p)
            for (int j = 0; j < op.width; ++j) {
                out.lo(p, j) = a.lo(p, j) + b.lo(p, j);
                out.up(p, j) = a.up(p, j) + b.up(p, j);
            }
        return out;
    }
    case OpKind::Multiply: {
        const IntervalBounds& a = iv_[op.in_a];
        const IntervalBounds& b = iv_[op.in_b];
        IntervalBounds out(n, op.width);
        for (int p = 0; p < n; ++p)
            for (int j = 0; j < op.width; ++j)
                interval_multiply(a.lo(p, op.a_index[j]), a.up(p, op.a_index[j]),
                                  b.lo(p, op.b_index[j]), b.up(p, op.b_index[j]), out.lo(p, j),
                                  out.up(p, j));
        return out;
    }
    case OpKind::Scores: {
        const IntervalBounds& q = iv_[op.in_a];
        const IntervalBounds& k = iv_[op.in_b];
        const int H = op.heads, dqk = op.head_dim;
        IntervalBounds out(n, op.width);
        for (int i = 0; i < n; ++i)
            for (int h = 0; h < H; ++h)
                for (int j = 0; j < n; ++j) {
                    double lo = 0.0, up = 0.0;
                    for (int c = 0; c < dqk; ++c) {
                        double pl, pu;
                        interval_multiply(q.lo(i, h * dqk + c), q.up(i, h * dqk + c),
                                          k.lo(j, h * dqk + c), k.up(j, h * dqk + c), pl, pu);
                        lo += pl;
                        up += pu;
                    }
                    out.lo(i, h * n + j) = lo;
                    out.up(i, h * n + j) = up;
                }
        return out;
    }
    case OpKind::WeightedSum: {
        const IntervalBounds& s = iv_[op.in_a];
        const IntervalBounds& v = iv_[op.in_b];
        const int H = op.heads, dqk = op.head_dim;
        IntervalBounds out(n, op.width);
        for (int i = 0; i < n; ++i)
            for (int h = 0; h < H; ++h)
                for (int c = 0; c < dqk; ++c) {
                    double lo = 0.0, up = 0.0;
                    for (int k = 0; k < n; ++k) {
                        double pl, pu;
                        interval_multiply(s.lo(i, h * n + k), s.up(i, h * n + k),
                                          v.lo(k, h * dqk + c), v.up(k, h * dqk + c), pl, pu);
                        lo += pl;
                        up += pu;
                    }
                    out.lo(i, h * dqk + c) = lo;
                    out.up(i, h * dqk + c) = up;
                }
        return out;
    }
    case OpKind::Input: break;
    }
    return iv_[id];
}

void BoundEngine::ibp_op(int id) { iv_[id] = ibp_image(id); }

// Tightens a linear-mode op's cached interval by intersecting it with the
// interval image of its (already bounded) operands, plus the structural
// [0,1] range of attention probabilities. Both enclose the reachable set,
// so the intersection does too; the result is a tighter relaxation domain
// for downstream ops. Skipped wholesale if the image itself is not
// evaluable, which can only lose tightness, never soundness.
void BoundEngine::refine_intervals(int id) {
    const OpNode& op = prog_.ops[id];
    if (op.kind == OpKind::Input) return;
    IntervalBounds& cur = iv_[id];
    try {
        const IntervalBounds img = ibp_image(id);
        for (int p = 0; p < prog_.n; ++p)
            for (int j = 0; j < op.width; ++j) {
                const double lo = std::max(cur.lo(p, j), img.lo(p, j));
                const double up = std::min(cur.up(p, j), img.up(p, j));
                if (lo <= up) {
                    cur.lo(p, j) = lo;
                    cur.up(p, j) = up;
                }
            }
    } catch (const VerifyError&) {
    }
    if (op.role == AttnRole::Prob) {
        for (int p = 0; p < prog_.n; ++p)
            for (int j = 0; j < op.width; ++j) {
                cur.lo(p, j) = std::max(cur.lo(p, j), 0.0);
                cur.up(p, j) = std::min(cur.up(p, j), 1.0);
            }
    }
}

// ---------------------------------------------------------------------------
// forward process (attention spans in bf mode; every op in ff mode)

LinearBounds BoundEngine::rows_as_linear(const ForwardRows& fr, int pos, int row_begin,
                                         int row_count) const {
    LinearBounds lb;
    lb.frame = RefFrame::InputPerturbed;
    lb.lower_coeff = Matrix(row_count, ref_width_);
    lb.upper_coeff = Matrix(row_count, ref_width_);
    lb.lower_bias.assign(row_count, 0.0);
    lb.upper_bias.assign(row_count, 0.0);
    for (int r = 0; r < row_count; ++r) {
        const int src = row_begin + r;
        for (int qy = 0; qy < ref_width_; ++qy) {
            lb.lower_coeff(r, qy) = fr.lo[pos](src, qy);
            lb.upper_coeff(r, qy) = fr.up[pos](src, qy);
        }
        lb.lower_bias[r] = fr.theta_lo(pos, src);
        lb.upper_bias[r] = fr.theta_up(pos, src);
    }
    return lb;
}

void BoundEngine::intervals_from_rows(int id) {
    const OpNode& op = prog_.ops[id];
    const ForwardRows& fr = fwd_[id];
    IntervalBounds out(prog_.n, op.width);
    par::for_each(prog_.n, [&](int pos) {
        const LinearBounds lb = rows_as_linear(fr, pos, 0, op.width);
        const IntervalBounds c = concretize(lb, spec_, x_r0_);
        for (int j = 0; j < op.width; ++j) {
            out.lo(pos, j) = c.lo(0, j);
            out.up(pos, j) = c.up(0, j);
        }
    });
    iv_[id] = std::move(out);
}

void BoundEngine::forward_op(int id) {
    const OpNode& op = prog_.ops[id];
    const int n = prog_.n;
    const int w = op.width;

    ForwardRows out;
    out.lo.assign(n, Matrix());
    out.up.assign(n, Matrix());
    out.theta_lo = Matrix(n, w);
    out.theta_up = Matrix(n, w);

    const ForwardRows* A = op.in_a >= 0 ? &fwd_[op.in_a] : nullptr;
    const ForwardRows* B = op.in_b >= 0 ? &fwd_[op.in_b] : nullptr;

    par::for_each(n, [&](int pos) {
        Matrix lo(w, ref_width_), up(w, ref_width_);
        double* tlo = out.theta_lo.row(pos);
        double* tup = out.theta_up.row(pos);

        // Adds c * (row of src at position spos, index j) into the output
        // row dst, picking src's lower or upper side per the sign of c;
        // low selects which output side is being built.
        auto accum = [&](bool low, double c, const ForwardRows& src, int spos, int j, double* dst,
                         double& dst_theta) {
            if (c == 0.0) return;
            const bool take_lo = low ? (c >= 0.0) : (c < 0.0);
            const Matrix& m = take_lo ? src.lo[spos] : src.up[spos];
            const double* srow = m.row(j);
            for (int qy = 0; qy < ref_width_; ++qy) dst[qy] += c * srow[qy];
            dst_theta += c * (take_lo ? src.theta_lo(spos, j) : src.theta_up(spos, j));
        };

        switch (op.kind) {
        case OpKind::Affine: {
            kern::sign_split_matmul_serial(op.W, op.W, A->lo[pos], A->up[pos], lo, up);
            Vec blo = op.b, bup = op.b;
            Vec alo(op.W.cols), aup(op.W.cols);
            for (int j = 0; j < op.W.cols; ++j) {
                alo[j] = A->theta_lo(pos, j);
                aup[j] = A->theta_up(pos, j);
            }
            kern::sign_split_matvec(op.W, op.W, alo, aup, blo, bup);
            for (int j = 0; j < w; ++j) {
                tlo[j] = blo[j];
                tup[j] = bup[j];
            }
            break;
        }
        case OpKind::Unary: {
            for (int j = 0; j < w; ++j) {
                const UnaryRelaxation& u = relax_u_[id][static_cast<size_t>(pos) * w + j];
                accum(true, u.alpha_lo, *A, pos, j, lo.row(j), tlo[j]);
                tlo[j] += u.beta_lo;
                accum(false, u.alpha_up, *A, pos, j, up.row(j), tup[j]);
                tup[j] += u.beta_up;
            }
            break;
        }
        case OpKind::Residual: {
            for (int j = 0; j < w; ++j) {
                accum(true, 1.0, *A, pos, j, lo.row(j), tlo[j]);
                accum(true, 1.0, *B, pos, j, lo.row(j), tlo[j]);
                accum(false, 1.0, *A, pos, j, up.row(j), tup[j]);
                accum(false, 1.0, *B, pos, j, up.row(j), tup[j]);
            }
            break;
        }
        case OpKind::Multiply: {
            if (op.role == AttnRole::Prob && n == 1) {
                // softmax over a single key is identically one
                for (int j = 0; j < w; ++j) {
                    tlo[j] = 1.0;
                    tup[j] = 1.0;
                }
                break;
            }
            for (int j = 0; j < w; ++j) {
                const BilinearRelaxation& m = relax_b_[id][static_cast<size_t>(pos) * w + j];
                accum(true, m.alpha_lo, *A, pos, op.a_index[j], lo.row(j), tlo[j]);
                accum(true, m.beta_lo, *B, pos, op.b_index[j], lo.row(j), tlo[j]);
                tlo[j] += m.gamma_lo;
                accum(false, m.alpha_up, *A, pos, op.a_index[j], up.row(j), tup[j]);
                accum(false, m.beta_up, *B, pos, op.b_index[j], up.row(j), tup[j]);
                tup[j] += m.gamma_up;
            }
            break;
        }
        case OpKind::Scores: {
            const int H = op.heads, dqk = op.head_dim;
            for (int h = 0; h < H; ++h)
                for (int j = 0; j < n; ++j) {
                    const int col = h * n + j;
                    for (int c = 0; c < dqk; ++c) {
                        const BilinearRelaxation& m =
                            relax_s_[id][((static_cast<size_t>(pos) * H + h) * n + j) * dqk + c];
                        const int qc = h * dqk + c;
                        accum(true, m.alpha_lo, *A, pos, qc, lo.row(col), tlo[col]);
                        accum(true, m.beta_lo, *B, j, qc, lo.row(col), tlo[col]);
                        tlo[col] += m.gamma_lo;
                        accum(false, m.alpha_up, *A, pos, qc, up.row(col), tup[col]);
                        accum(false, m.beta_up, *B, j, qc, up.row(col), tup[col]);
                        tup[col] += m.gamma_up;
                    }
                }
            break;
        }
        case OpKind::WeightedSum: {
            const int H = op.heads, dqk = op.head_dim;
            for (int h = 0; h < H; ++h)
                for (int c = 0; c < dqk; ++c) {
                    const int col = h * dqk + c;
                    for (int k = 0; k < n; ++k) {
                        const BilinearRelaxation& m =
                            relax_s_[id][((static_cast<size_t>(pos) * H + h) * dqk + c) * n + k];
                        accum(true, m.alpha_lo, *A, pos, h * n + k, lo.row(col), tlo[col]);
                        accum(true, m.beta_lo, *B, k, col, lo.row(col), tlo[col]);
                        tlo[col] += m.gamma_lo;
                        accum(false, m.alpha_up, *A, pos, h * n + k, up.row(col), tup[col]);
                        accum(false, m.beta_up, *B, k, col, up.row(col), tup[col]);
                        tup[col] += m.gamma_up;
                    }
                }
            break;
        }
        case OpKind::Input: break;
        }

        out.lo[pos] = std::move(lo);
        out.up[pos] = std::move(up);
        forward_rows_.fetch_add(1, std::memory_order_relaxed);
    });

    fwd_[id] = std::move(out);
}

// ---------------------------------------------------------------------------
// backward process

BoundEngine::Walk BoundEngine::make_walk(int rows) const {
    Walk w;
    w.rows = rows;
    w.pending.assign(prog_.size(), std::vector<BlockPair>(prog_.n));
    w.in_lo = Matrix(rows, ref_width_);
    w.in_up = Matrix(rows, ref_width_);
    w.bias_lo.assign(rows, 0.0);
    w.bias_up.assign(rows, 0.0);
    return w;
}

void BoundEngine::seed(Walk& w, int op, int pos, const Matrix& rows_lo, const Matrix& rows_up) {
    BlockPair& dst = w.pending[op][pos];
    ensure_block(dst.lo, w.rows, prog_.ops[op].width);
    ensure_block(dst.up, w.rows, prog_.ops[op].width);
    add_matrix(dst.lo, rows_lo);
    add_matrix(dst.up, rows_up);
    w.top = std::max(w.top, op);
}

void BoundEngine::settle_input_block(Walk& w, int pos, const BlockPair& blk) {
    const int d = prog_.d_model;
    const int pi = pos_index_[pos];
    if (pi >= 0) {
        for (int r = 0; r < w.rows; ++r)
            for (int j = 0; j < d; ++j) {
                w.in_lo(r, pi * d + j) += blk.lo(r, j);
                w.in_up(r, pi * d + j) += blk.up(r, j);
            }
    } else {
        // unperturbed position: the embedding is a constant
        const double* x = x0_.row(pos);
        for (int r = 0; r < w.rows; ++r) {
            w.bias_lo[r] += dot(blk.lo.row(r), x, d);
            w.bias_up[r] += dot(blk.up.row(r), x, d);
        }
    }
}

void BoundEngine::apply_block(Walk& w, int id, int pos, const BlockPair& blk) {
    const OpNode& op = prog_.ops[id];
    const int n = prog_.n;

    // In backward/forward mode the walk treats a whole self-attention block
    // as a single already-bounded unit: its input-frame rows substitute in
    // directly, and the walk does not descend into the span.
    if (method_ == Method::BackwardForward && op.role != AttnRole::None) {
        const ForwardRows& fr = fwd_[id];
        kern::sign_split_matmul(blk.lo, blk.up, fr.lo[pos], fr.up[pos], w.in_lo, w.in_up, true);
        Vec th_lo(op.width), th_up(op.width);
        for (int j = 0; j < op.width; ++j) {
            th_lo[j] = fr.theta_lo(pos, j);
            th_up[j] = fr.theta_up(pos, j);
        }
        kern::sign_split_matvec(blk.lo, blk.up, th_lo, th_up, w.bias_lo, w.bias_up);
        return;
    }

    switch (op.kind) {
    case OpKind::Affine: {
        BlockPair& dst = w.pending[op.in_a][pos];
        ensure_block(dst.lo, w.rows, op.W.cols);
        ensure_block(dst.up, w.rows, op.W.cols);
        kern::matmul(blk.lo, op.W, dst.lo, true);
        kern::matmul(blk.up, op.W, dst.up, true);
        kern::matvec(blk.lo, op.b, w.bias_lo, true);
        kern::matvec(blk.up, op.b, w.bias_up, true);
        break;
    }
    case OpKind::Unary: {
        BlockPair& dst = w.pending[op.in_a][pos];
        ensure_block(dst.lo, w.rows, op.width);
        ensure_block(dst.up, w.rows, op.width);
        for (int j = 0; j < op.width; ++j) {
            const UnaryRelaxation& u = relax_u_[id][static_cast<size_t>(pos) * op.width + j];
            for (int r = 0; r < w.rows; ++r) {
                const double cl = blk.lo(r, j);
                if (cl != 0.0) {
                    dst.lo(r, j) += cl * (cl >= 0.0 ? u.alpha_lo : u.alpha_up);
                    w.bias_lo[r] += cl * (cl >= 0.0 ? u.beta_lo : u.beta_up);
                }
                const double cu = blk.up(r, j);
                if (cu != 0.0) {
                    dst.up(r, j) += cu * (cu >= 0.0 ? u.alpha_up : u.alpha_lo);
                    w.bias_up[r] += cu * (cu >= 0.0 ? u.beta_up : u.beta_lo);
                }
            }
        }
        break;
    }
    case OpKind::Residual: {
        for (int src : {op.in_a, op.in_b}) {
            BlockPair& dst = w.pending[src][pos];
            ensure_block(dst.lo, w.rows, op.width);
            ensure_block(dst.up, w.rows, op.width);
            add_matrix(dst.lo, blk.lo);
            add_matrix(dst.up, blk.up);
        }
        break;
    }
    case OpKind::Multiply: {
        BlockPair& da = w.pending[op.in_a][pos];
        BlockPair& db = w.pending[op.in_b][pos];
        ensure_block(da.lo, w.rows, prog_.ops[op.in_a].width);
        ensure_block(da.up, w.rows, prog_.ops[op.in_a].width);
        ensure_block(db.lo, w.rows, prog_.ops[op.in_b].width);
        ensure_block(db.up, w.rows, prog_.ops[op.in_b].width);
        for (int j = 0; j < op.width; ++j) {
            const BilinearRelaxation& m = relax_b_[id][static_cast<size_t>(pos) * op.width + j];
            const int ja = op.a_index[j], jb = op.b_index[j];
            for (int r = 0; r < w.rows; ++r) {
                const double cl = blk.lo(r, j);
                if (cl != 0.0) {
                    if (cl >= 0.0) {
                        da.lo(r, ja) += cl * m.alpha_lo;
                        db.lo(r, jb) += cl * m.beta_lo;
                        w.bias_lo[r] += cl * m.gamma_lo;
                    } else {
                        da.lo(r, ja) += cl * m.alpha_up;
                        db.lo(r, jb) += cl * m.beta_up;
                        w.bias_lo[r] += cl * m.gamma_up;
                    }
                }
                const double cu = blk.up(r, j);
                if (cu != 0.0) {
                    if (cu >= 0.0) {
                        da.up(r, ja) += cu * m.alpha_up;
                        db.up(r, jb) += cu * m.beta_up;
                        w.bias_up[r] += cu * m.gamma_up;
                    } else {
                        da.up(r, ja) += cu * m.alpha_lo;
                        db.up(r, jb) += cu * m.beta_lo;
                        w.bias_up[r] += cu * m.gamma_lo;
                    }
                }
            }
        }
        break;
    }
    case OpKind::Scores: {
        const int H = op.heads, dqk = op.head_dim;
        BlockPair& dq = w.pending[op.in_a][pos];
        ensure_block(dq.lo, w.rows, prog_.ops[op.in_a].width);
        ensure_block(dq.up, w.rows, prog_.ops[op.in_a].width);
        for (int h = 0; h < H; ++h)
            for (int j = 0; j < n; ++j) {
                const int col = h * n + j;
                BlockPair& dk = w.pending[op.in_b][j];
                ensure_block(dk.lo, w.rows, prog_.ops[op.in_b].width);
                ensure_block(dk.up, w.rows, prog_.ops[op.in_b].width);
                for (int c = 0; c < dqk; ++c) {
                    const BilinearRelaxation& m =
                        relax_s_[id][((static_cast<size_t>(pos) * H + h) * n + j) * dqk + c];
                    const int qc = h * dqk + c;
                    for (int r = 0; r < w.rows; ++r) {
                        const double cl = blk.lo(r, col);
                        if (cl != 0.0) {
                            if (cl >= 0.0) {
                                dq.lo(r, qc) += cl * m.alpha_lo;
                                dk.lo(r, qc) += cl * m.beta_lo;
                                w.bias_lo[r] += cl * m.gamma_lo;
                            } else {
                                dq.lo(r, qc) += cl * m.alpha_up;
                                dk.lo(r, qc) += cl * m.beta_up;
                                w.bias_lo[r] += cl * m.gamma_up;
                            }
                        }
                        const double cu = blk.up(r, col);
                        if (cu != 0.0) {
                            if (cu >= 0.0) {
                                dq.up(r, qc) += cu * m.alpha_up;
                                dk.up(r, qc) += cu * m.beta_up;
                                w.bias_up[r] += cu * m.gamma_up;
                            } else {
                                dq.up(r, qc) += cu * m.alpha_lo;
                                dk.up(r, qc) += cu * m.beta_lo;
                                w.bias_up[r] += cu * m.gamma_lo;
                            }
                        }
                    }
                }
            }
        break;
    }
    case OpKind::WeightedSum: {
        const int H = op.heads, dqk = op.head_dim;
        BlockPair& ds = w.pending[op.in_a][pos];
        ensure_block(ds.lo, w.rows, prog_.ops[op.in_a].width);
        ensure_block(ds.up, w.rows, prog_.ops[op.in_a].width);
        for (int k = 0; k < n; ++k) {
            BlockPair& dv = w.pending[op.in_b][k];
            ensure_block(dv.lo, w.rows, prog_.ops[op.in_b].width);
            ensure_block(dv.up, w.rows, prog_.ops[op.in_b].width);
            for (int h = 0; h < H; ++h)
                for (int c = 0; c < dqk; ++c) {
                    const int col = h * dqk + c;
                    const BilinearRelaxation& m =
                        relax_s_[id][((static_cast<size_t>(pos) * H + h) * dqk + c) * n + k];
                    for (int r = 0; r < w.rows; ++r) {
                        const double cl = blk.lo(r, col);
                        if (cl != 0.0) {
                            if (cl >= 0.0) {
                                ds.lo(r, h * n + k) += cl * m.alpha_lo;
                                dv.lo(r, col) += cl * m.beta_lo;
                                w.bias_lo[r] += cl * m.gamma_lo;
                            } else {
                                ds.lo(r, h * n + k) += cl * m.alpha_up;
                                dv.lo(r, col) += cl * m.beta_up;
                                w.bias_lo[r] += cl * m.gamma_up;
                            }
                        }
                        const double cu = blk.up(r, col);
                        if (cu != 0.0) {
                            if (cu >= 0.0) {
                                ds.up(r, h * n + k) += cu * m.alpha_up;
                                dv.up(r, col) += cu * m.beta_up;
                                w.bias_up[r] += cu * m.gamma_up;
                            } else {
                                ds.up(r, h * n + k) += cu * m.alpha_lo;
                                dv.up(r, col) += cu * m.beta_lo;
                                w.bias_up[r] += cu * m.gamma_lo;
                            }
                        }
                    }
                }
        }
        break;
    }
    case OpKind::Input: break;
    }
}

LinearBounds BoundEngine::run_walk(Walk& w) {
    for (int id = w.top; id >= 1; --id) {
        auto& slots = w.pending[id];
        for (int pos = 0; pos < prog_.n; ++pos) {
            if (slots[pos].empty()) continue;
            BlockPair blk = std::move(slots[pos]);
            slots[pos] = BlockPair{};
            backward_blocks_.fetch_add(1, std::memory_order_relaxed);
            apply_block(w, id, pos, blk);
        }
    }
    for (int pos = 0; pos < prog_.n; ++pos)
        if (!w.pending[0][pos].empty()) settle_input_block(w, pos, w.pending[0][pos]);

    LinearBounds lb;
    lb.frame = RefFrame::InputPerturbed;
    lb.lower_coeff = std::move(w.in_lo);
    lb.upper_coeff = std::move(w.in_up);
    lb.lower_bias = std::move(w.bias_lo);
    lb.upper_bias = std::move(w.bias_up);
    return lb;
}

void BoundEngine::backward_op(int id, bool keep_rows) {
    const OpNode& op = prog_.ops[id];
    const int n = prog_.n;
    IntervalBounds out(n, op.width);
    ForwardRows rows;
    if (keep_rows) {
        rows.lo.assign(n, Matrix());
        rows.up.assign(n, Matrix());
        rows.theta_lo = Matrix(n, op.width);
        rows.theta_up = Matrix(n, op.width);
    }
    const Matrix I = Matrix::identity(op.width);
    par::for_each(n, [&](int pos) {
        Walk w = make_walk(op.width);
        seed(w, id, pos, I, I);
        LinearBounds lb = run_walk(w);
        const IntervalBounds c = concretize(lb, spec_, x_r0_);
        for (int j = 0; j < op.width; ++j) {
            out.lo(pos, j) = c.lo(0, j);
            out.up(pos, j) = c.up(0, j);
        }
        if (keep_rows) {
            for (int j = 0; j < op.width; ++j) {
                rows.theta_lo(pos, j) = lb.lower_bias[j];
                rows.theta_up(pos, j) = lb.upper_bias[j];
            }
            rows.lo[pos] = std::move(lb.lower_coeff);
            rows.up[pos] = std::move(lb.upper_coeff);
        }
    });
    iv_[id] = std::move(out);
    if (keep_rows) fwd_[id] = std::move(rows);
}

// ---------------------------------------------------------------------------
// driver

void BoundEngine::input_op(int id) {
    const int n = prog_.n, d = prog_.d_model;
    IntervalBounds out(n, d);
    for (int pos = 0; pos < n; ++pos) {
        const double r = pos_index_[pos] >= 0 ? spec_.epsilon : 0.0;
        for (int j = 0; j < d; ++j) {
            out.lo(pos, j) = x0_(pos, j) - r;
            out.up(pos, j) = x0_(pos, j) + r;
        }
    }
    iv_[id] = std::move(out);

    if (method_ == Method::FullyForward) {
        ForwardRows rows;
        rows.lo.assign(n, Matrix());
        rows.up.assign(n, Matrix());
        rows.theta_lo = Matrix(n, d);
        rows.theta_up = Matrix(n, d);
        for (int pos = 0; pos < n; ++pos) {
            Matrix m(d, ref_width_);
            const int pi = pos_index_[pos];
            if (pi >= 0) {
                for (int j = 0; j < d; ++j) m(j, pi * d + j) = 1.0;
            } else {
                for (int j = 0; j < d; ++j) {
                    rows.theta_lo(pos, j) = x0_(pos, j);
                    rows.theta_up(pos, j) = x0_(pos, j);
                }
            }
            rows.up[pos] = m;
            rows.lo[pos] = std::move(m);
            forward_rows_.fetch_add(1, std::memory_order_relaxed);
        }
        fwd_[id] = std::move(rows);
    }
}

void BoundEngine::run() {
    const int S = prog_.size();
    iv_.assign(S, IntervalBounds());
    fwd_.assign(S, ForwardRows());
    relax_u_.assign(S, {});
    relax_b_.assign(S, {});
    relax_s_.assign(S, {});
    want_rows_.assign(S, 0);
    if (method_ == Method::BackwardForward) {
        for (const OpNode& op : prog_.ops) {
            if (op.kind == OpKind::Scores) {
                want_rows_[op.in_a] = 1;
                want_rows_[op.in_b] = 1;
            } else if (op.kind == OpKind::WeightedSum) {
                want_rows_[op.in_b] = 1;
            }
        }
    }

    for (int id = 0; id < S; ++id) {
        const OpNode& op = prog_.ops[id];
        if (op.kind == OpKind::Input) {
            input_op(id);
            continue;
        }
        try {
        if (method_ != Method::IBP) build_relaxations(id);
        switch (method_) {
        case Method::IBP:
            ibp_op(id);
            break;
        case Method::FullyForward:
            forward_op(id);
            intervals_from_rows(id);
            refine_intervals(id);
            break;
        case Method::FullyBackward:
            backward_op(id, false);
            refine_intervals(id);
            break;
        case Method::BackwardForward:
            if (op.role != AttnRole::None) {
                forward_op(id);
                intervals_from_rows(id);
            } else {
                backward_op(id, want_rows_[id] != 0);
            }
            refine_intervals(id);
            break;
        }
        } catch (const DomainViolation& e) {
            throw DomainViolation(op.label + ": " + e.what());
        }
        if (!all_finite(iv_[id].lower) || !all_finite(iv_[id].upper))
            throw RangeOverflow(op.label + ": bounds escaped to a non-finite range");
    }
}

IntervalBounds BoundEngine::bound_pooled_affine(const Matrix& rows, const Vec& bias) {
    const int n = prog_.n;
    const int final_id = prog_.output_id();
    const int d = prog_.ops[final_id].width;
    rows.check_shape(rows.rows, d, "pooled readout rows");
    const int R = rows.rows;

    if (method_ == Method::IBP) {
        const IntervalBounds& f = iv_[final_id];
        IntervalBounds pooled(1, d);
        for (int j = 0; j < d; ++j) {
            double lo = 0.0, up = 0.0;
            for (int p = 0; p < n; ++p) {
                lo += f.lo(p, j);
                up += f.up(p, j);
            }
            pooled.lo(0, j) = lo / n;
            pooled.up(0, j) = up / n;
        }
        return ibp_affine(pooled, rows, bias);
    }

    if (method_ == Method::FullyForward) {
        const ForwardRows& f = fwd_[final_id];
        Matrix plo(d, ref_width_), pup(d, ref_width_);
        Vec tlo(d, 0.0), tup(d, 0.0);
        for (int p = 0; p < n; ++p) {
            for (int j = 0; j < d; ++j) {
                const double* slo = f.lo[p].row(j);
                const double* sup = f.up[p].row(j);
                for (int qy = 0; qy < ref_width_; ++qy) {
                    plo(j, qy) += slo[qy] / n;
                    pup(j, qy) += sup[qy] / n;
                }
                tlo[j] += f.theta_lo(p, j) / n;
                tup[j] += f.theta_up(p, j) / n;
            }
        }
        LinearBounds lb;
        lb.frame = RefFrame::InputPerturbed;
        lb.lower_coeff = Matrix(R, ref_width_);
        lb.upper_coeff = Matrix(R, ref_width_);
        lb.lower_bias = bias;
        lb.upper_bias = bias;
        kern::sign_split_matmul(rows, rows, plo, pup, lb.lower_coeff, lb.upper_coeff, true);
        kern::sign_split_matvec(rows, rows, tlo, tup, lb.lower_bias, lb.upper_bias);
        return concretize(lb, spec_, x_r0_);
    }

    // backward modes: one walk seeded with rows/n at every position
    Matrix seed_rows(R, d);
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < d; ++j) seed_rows(r, j) = rows(r, j) / n;
    Walk w = make_walk(R);
    for (int p = 0; p < n; ++p) seed(w, final_id, p, seed_rows, seed_rows);
    for (int r = 0; r < R; ++r) {
        w.bias_lo[r] = bias[r];
        w.bias_up[r] = bias[r];
    }
    LinearBounds lb = run_walk(w);
    return concretize(lb, spec_, x_r0_);
}

}  // namespace certiformer
