#pragma once

#include <vector>

#include "certiformer/model.hpp"
#include "certiformer/program.hpp"
#include "certiformer/propagate.hpp"

namespace certiformer {

struct CertifyOptions {
    Method method = Method::BackwardForward;
    double eps_max = 10.0;
    int max_iters = 30;
    double rel_tol = 1e-3;
};

// Clean-input evaluation shared by every driver.
struct CleanResult {
    Vec logits;
    int predicted = 0;
    double margin = 0.0;  // min over wrong classes of the logit gap
};

CleanResult evaluate_clean(const TransformerModel& m, const SublayerProgram& prog,
                           const Matrix& x0);

// Provable lower bound on min over wrong classes y of (logit_label - logit_y)
// over the perturbation set. Work counters accumulate when given.
double delta_lower(const TransformerModel& m, const SublayerProgram& prog, const Matrix& x0,
                   int label, const PerturbationSpec& spec, Method method,
                   Counters* counters = nullptr);

struct Certificate {
    double epsilon = 0.0;
    double delta_at_epsilon = 0.0;  // verified margin bound at that radius
};

// Largest radius in [0, eps_max] with a verified positive margin bound,
// located by binary search on the radius; the returned radius always carries
// a directly verified bound, so the certificate does not rest on
// monotonicity. Throws CleanMisclassified when the model predicts a class
// other than label on the clean input.
Certificate certify_epsilon(const TransformerModel& m, const SublayerProgram& prog,
                            const Matrix& x0, int label, PerturbationSpec spec,
                            const CertifyOptions& opt, Counters* counters = nullptr);

// Lexicographic t-subsets of {1..n}, capped at max_sets.
std::vector<std::vector<int>> enumerate_position_sets(int n, int t, int max_sets,
                                                      bool& truncated);

// Smallest lp distance from the clean embedding at the given 1-based
// position to a vocabulary word whose substitution flips the prediction;
// +infinity when no word flips.
double upper_bound_substitution(const TransformerModel& m, const SublayerProgram& prog,
                                const std::vector<int>& ids, int position, Norm p);

// Word importance: positions ranked by certified radius normalized by the
// clean embedding norm (smallest first = most important), with the
// substitution upper bound and the margin-gradient norm as baselines.
struct ImportanceReport {
    int predicted = 0;
    std::vector<double> certified;  // per position, certified eps / ||x0_i||_2
    std::vector<double> upper;      // substitution bound / ||x0_i||_2
    std::vector<double> gradient;   // margin gradient row norm
    std::vector<int> certified_order, upper_order, gradient_order;  // 1-based, most->least
};

ImportanceReport importance_ranking(const TransformerModel& m, const SublayerProgram& prog,
                                    const std::vector<int>& ids, Norm p,
                                    const CertifyOptions& opt);

// Certified radius, wall time and work counters for the three linear-bound
// modes on one instance.
struct AblationRow {
    Method method = Method::BackwardForward;
    double certified_epsilon = 0.0;
    double delta_at_epsilon = 0.0;
    double wall_seconds = 0.0;
    Counters counters;
};

std::vector<AblationRow> run_ablation(const TransformerModel& m, const SublayerProgram& prog,
                                      const Matrix& x0, int label,
                                      const PerturbationSpec& spec_template,
                                      const CertifyOptions& base);

}  // namespace certiformer
