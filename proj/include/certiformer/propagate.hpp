#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "certiformer/bounds.hpp"
#include "certiformer/program.hpp"
#include "certiformer/relaxations.hpp"

namespace certiformer {

// Bounding strategies. BackwardForward is the default: backward substitution
// everywhere except inside self-attention, whose internals are bounded by a
// forward pass in the perturbed-input frame and substituted as one block.
// FullyForward and FullyBackward are the ablation modes; IBP is plain
// interval arithmetic over the same op decomposition.
enum class Method { BackwardForward, FullyForward, FullyBackward, IBP };

const char* method_name(Method m);  // "bf" | "ff" | "fb" | "ibp"
Method parse_method(const std::string& s);

// Work counters: how many coefficient matrices were materialized. Backward
// blocks are per (sub-layer, position) pending pairs processed during a
// backward walk; forward rows are per (sub-layer, position) omega pairs
// built by the forward pass. Their growth in n separates the hybrid scheme
// from the fully-backward one.
struct Counters {
    long long backward_blocks = 0;
    long long forward_rows = 0;

    long long total() const { return backward_blocks + forward_rows; }
};

// Linear bounds of one op's activations in the perturbed-input frame:
// per position a coefficient pair [width x t*d] plus bias rows.
struct ForwardRows {
    std::vector<Matrix> lo, up;  // indexed by position
    Matrix theta_lo, theta_up;   // [n x width]

    bool present() const { return !lo.empty(); }
};

// Bounds every op of a compiled program over the perturbation ball, in
// topological order, caching concrete intervals per op. Construction is
// cheap; run() does the work.
class BoundEngine {
  public:
    BoundEngine(const SublayerProgram& prog, const PerturbationSpec& spec, const Matrix& x0,
                Method method);

    void run();

    const IntervalBounds& intervals(int op) const { return iv_[op]; }
    const ForwardRows& rows(int op) const { return fwd_[op]; }

    // Bounds of rows * mean_over_positions(final op) + bias over the ball;
    // result has positions == 1, width == rows.rows. This is how the margin
    // (and any linear readout) is certified.
    IntervalBounds bound_pooled_affine(const Matrix& rows, const Vec& bias);

    Counters counters() const;

  private:
    struct BlockPair {
        Matrix lo, up;
        bool empty() const { return lo.rows == 0; }
    };

    // One backward walk: bounds a seeded linear expression of op outputs as
    // a function of the perturbed input embeddings.
    struct Walk {
        int rows = 0;
        int top = -1;                                 // highest seeded op id
        std::vector<std::vector<BlockPair>> pending;  // [op][position]
        Matrix in_lo, in_up;                          // [rows x t*d]
        Vec bias_lo, bias_up;
    };

    Walk make_walk(int rows) const;
    void seed(Walk& w, int op, int pos, const Matrix& rows_lo, const Matrix& rows_up);
    LinearBounds run_walk(Walk& w);
    void apply_block(Walk& w, int id, int pos, const BlockPair& blk);
    void settle_input_block(Walk& w, int pos, const BlockPair& blk);

    void build_relaxations(int id);
    IntervalBounds ibp_image(int id) const;
    void ibp_op(int id);
    void forward_op(int id);
    void backward_op(int id, bool keep_rows);
    void intervals_from_rows(int id);
    void refine_intervals(int id);
    void input_op(int id);

    LinearBounds rows_as_linear(const ForwardRows& fr, int pos, int row_begin, int row_count) const;

    const SublayerProgram& prog_;
    const PerturbationSpec& spec_;
    const Matrix& x0_;
    Method method_;

    int t_ = 0;
    int ref_width_ = 0;
    Vec x_r0_;                    // clean perturbed embeddings, concatenated
    std::vector<int> pos_index_;  // position -> perturbed slot or -1

    std::vector<IntervalBounds> iv_;
    std::vector<ForwardRows> fwd_;
    std::vector<char> want_rows_;  // ops whose input-frame rows must be kept

    // relaxations per op, built from cached operand intervals
    std::vector<std::vector<UnaryRelaxation>> relax_u_;      // [id][pos*width + j]
    std::vector<std::vector<BilinearRelaxation>> relax_b_;   // Multiply: [id][pos*width + j]
    std::vector<std::vector<BilinearRelaxation>> relax_s_;   // Scores / WeightedSum, term-major

    std::atomic<long long> backward_blocks_{0};
    std::atomic<long long> forward_rows_{0};
};

}  // namespace certiformer
