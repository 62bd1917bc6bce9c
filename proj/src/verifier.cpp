#include "certiformer/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "certiformer/errors.hpp"

namespace certiformer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Margin readout absorbed into the head: one row per wrong class,
// head_w[label] - head_w[other], so a single bound pass covers all of them.
Matrix margin_rows(const TransformerModel& m, int label, Vec& bias) {
    const int K = m.hyper.num_classes, d = m.hyper.d_model;
    Matrix rows(K - 1, d);
    bias.assign(K - 1, 0.0);
    int r = 0;
    for (int other = 0; other < K; ++other) {
        if (other == label) continue;
        for (int j = 0; j < d; ++j) rows(r, j) = m.head_w(label, j) - m.head_w(other, j);
        bias[r] = m.head_b[label] - m.head_b[other];
        ++r;
    }
    return rows;
}

void accumulate(Counters* into, const Counters& c) {
    if (!into) return;
    into->backward_blocks += c.backward_blocks;
    into->forward_rows += c.forward_rows;
}

double lp_norm(const Vec& v, Norm p) {
    double s = 0.0;
    switch (p) {
    case Norm::L1:
        for (double x : v) s += std::abs(x);
        return s;
    case Norm::L2:
        for (double x : v) s += x * x;
        return std::sqrt(s);
    case Norm::Linf:
        for (double x : v) s = std::max(s, std::abs(x));
        return s;
    }
    return s;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

CleanResult evaluate_clean(const TransformerModel& m, const SublayerProgram& prog,
                           const Matrix& x0) {
    CleanResult r;
    r.logits = logits_from_embeddings(m, prog, x0);
    r.predicted = argmax(r.logits);
    r.margin = kInf;
    for (size_t c = 0; c < r.logits.size(); ++c)
        if (static_cast<int>(c) != r.predicted)
            r.margin = std::min(r.margin, r.logits[r.predicted] - r.logits[c]);
    return r;
}

double delta_lower(const TransformerModel& m, const SublayerProgram& prog, const Matrix& x0,
                   int label, const PerturbationSpec& spec, Method method, Counters* counters) {
    Vec bias;
    const Matrix rows = margin_rows(m, label, bias);
    BoundEngine eng(prog, spec, x0, method);
    try {
        eng.run();
        const IntervalBounds b = eng.bound_pooled_affine(rows, bias);
        accumulate(counters, eng.counters());
        double delta = kInf;
        for (int j = 0; j < b.width; ++j) delta = std::min(delta, b.lo(0, j));
        return delta;
    } catch (...) {
        accumulate(counters, eng.counters());
        throw;
    }
}

Certificate certify_epsilon(const TransformerModel& m, const SublayerProgram& prog,
                            const Matrix& x0, int label, PerturbationSpec spec,
                            const CertifyOptions& opt, Counters* counters) {
    const CleanResult clean = evaluate_clean(m, prog, x0);
    if (clean.predicted != label)
        throw CleanMisclassified("clean prediction is class " + std::to_string(clean.predicted) +
                                 ", not " + std::to_string(label));

    // A radius whose bound cannot even be evaluated (interval blow-up)
    // certifies nothing.
    auto probe = [&](double eps) {
        spec.epsilon = eps;
        try {
            return delta_lower(m, prog, x0, label, spec, opt.method, counters);
        } catch (const RangeOverflow&) {
            return -kInf;
        }
    };

    Certificate best;
    best.epsilon = 0.0;
    best.delta_at_epsilon = probe(0.0);
    if (best.delta_at_epsilon <= 0.0) return best;

    const double top = probe(opt.eps_max);
    if (top > 0.0) return {opt.eps_max, top};

    double lo = 0.0, hi = opt.eps_max;
    for (int iter = 0; iter < opt.max_iters && (hi - lo) > opt.rel_tol * hi; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double delta = probe(mid);
        if (delta > 0.0) {
            lo = mid;
            best = {mid, delta};
        } else {
            hi = mid;
        }
    }
    return best;
}

std::vector<std::vector<int>> enumerate_position_sets(int n, int t, int max_sets,
                                                      bool& truncated) {
    truncated = false;
    std::vector<std::vector<int>> sets;
    if (t < 1 || t > n) return sets;
    std::vector<int> cur(t);
    std::iota(cur.begin(), cur.end(), 1);
    while (true) {
        if (static_cast<int>(sets.size()) == max_sets) {
            truncated = true;
            return sets;
        }
        sets.push_back(cur);
        // advance to the next combination in lexicographic order
        int i = t - 1;
        while (i >= 0 && cur[i] == n - (t - 1 - i)) --i;
        if (i < 0) return sets;
        ++cur[i];
        for (int j = i + 1; j < t; ++j) cur[j] = cur[j - 1] + 1;
    }
}

double upper_bound_substitution(const TransformerModel& m, const SublayerProgram& prog,
                                const std::vector<int>& ids, int position, Norm p) {
    const Matrix x0 = m.input_embeddings(ids);
    const int predicted = evaluate_clean(m, prog, x0).predicted;
    const int orig = ids[position - 1];
    const int d = m.hyper.d_model;

    double best = kInf;
    std::vector<int> sub = ids;
    for (int w = 0; w < m.hyper.vocab_size; ++w) {
        if (w == orig) continue;
        sub[position - 1] = w;
        const Matrix xw = m.input_embeddings(sub);
        if (argmax(logits_from_embeddings(m, prog, xw)) == predicted) continue;
        Vec diff(d);
        for (int j = 0; j < d; ++j) diff[j] = m.embed(w, j) - m.embed(orig, j);
        best = std::min(best, lp_norm(diff, p));
    }
    return best;
}

ImportanceReport importance_ranking(const TransformerModel& m, const SublayerProgram& prog,
                                    const std::vector<int>& ids, Norm p,
                                    const CertifyOptions& opt) {
    const int n = static_cast<int>(ids.size());
    const Matrix x0 = m.input_embeddings(ids);
    const CleanResult clean = evaluate_clean(m, prog, x0);

    ImportanceReport rep;
    rep.predicted = clean.predicted;
    rep.certified.resize(n);
    rep.upper.resize(n);
    rep.gradient.resize(n);

    int runner_up = clean.predicted == 0 ? 1 : 0;
    for (size_t c = 0; c < clean.logits.size(); ++c)
        if (static_cast<int>(c) != clean.predicted &&
            clean.logits[c] > clean.logits[runner_up])
            runner_up = static_cast<int>(c);
    const Matrix grad = input_gradients(m, prog, x0, clean.predicted, runner_up);

    for (int i = 1; i <= n; ++i) {
        PerturbationSpec spec;
        spec.p = p;
        spec.positions = {i};
        const Certificate cert = certify_epsilon(m, prog, x0, clean.predicted, spec, opt);
        Vec xi(x0.row(i - 1), x0.row(i - 1) + m.hyper.d_model);
        const double nrm = std::max(lp_norm(xi, Norm::L2), 1e-12);
        rep.certified[i - 1] = cert.epsilon / nrm;
        const double ub = upper_bound_substitution(m, prog, ids, i, p);
        rep.upper[i - 1] = std::isfinite(ub) ? ub / nrm : kInf;
        Vec gi(grad.row(i - 1), grad.row(i - 1) + m.hyper.d_model);
        rep.gradient[i - 1] = lp_norm(gi, Norm::L2);
    }

    auto order_by = [n](const std::vector<double>& score, bool ascending) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 1);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double sa = score[a - 1], sb = score[b - 1];
            if (sa != sb) return ascending ? sa < sb : sa > sb;
            return a < b;
        });
        return idx;
    };
    rep.certified_order = order_by(rep.certified, true);
    rep.upper_order = order_by(rep.upper, true);
    rep.gradient_order = order_by(rep.gradient, false);
    return rep;
}

std::vector<AblationRow> run_ablation(const TransformerModel& m, const SublayerProgram& prog,
                                      const Matrix& x0, int label,
                                      const PerturbationSpec& spec_template,
                                      const CertifyOptions& base) {
    std::vector<AblationRow> rows;
    for (Method method :
         {Method::FullyForward, Method::FullyBackward, Method::BackwardForward}) {
        CertifyOptions opt = base;
        opt.method = method;
        AblationRow row;
        row.method = method;
        const double t0 = now_seconds();
        const Certificate cert =
            certify_epsilon(m, prog, x0, label, spec_template, opt, &row.counters);
        row.wall_seconds = now_seconds() - t0;
        row.certified_epsilon = cert.epsilon;
        row.delta_at_epsilon = cert.delta_at_epsilon;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace certiformer
