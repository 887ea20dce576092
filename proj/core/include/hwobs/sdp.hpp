#pragma once

#include <string>
#include <vector>

#include "hwobs/types.hpp"

namespace hwobs {

// Small dense semidefinite programs:
//
//   minimize    c' v
//   subject to  F_0^(j) + sum_d v_d F_d^(j)  <=  0   (negative semidefinite)
//
// Variables are plain scalars; symmetric and rectangular matrix variables
// are packed coordinate ranges with index helpers. Inside every LMI block
// only the lower triangle is specified, the upper half is implied.
class SdpProblem {
  public:
    struct SymVar {
        int offset = 0;
        int dim = 0;
    };
    struct RectVar {
        int offset = 0;
        int rows = 0;
        int cols = 0;
    };

    int add_scalar();
    SymVar add_symmetric(int dim);
    RectVar add_rect(int rows, int cols);

    static int sym_index(const SymVar& v, int i, int j);
    static int rect_index(const RectVar& v, int i, int j);

    int add_block(int dim);
    // Lower-triangle scatter (r >= c required).
    void add_const(int block, int r, int c, double value);
    void add_term(int block, int var, int r, int c, double value);

    // scale * (P * M) placed with its top-left corner at (r0, c0).
    void add_sym_product(int block, const SymVar& P, const MatX& M, int r0, int c0, double scale);
    // scale * P placed at (r0, c0); requires the placement to stay lower-triangular.
    void add_sym(int block, const SymVar& P, int r0, int c0, double scale);
    // scale * (Y * M) placed at (r0, c0).
    void add_rect_product(int block, const RectVar& Y, const MatX& M, int r0, int c0, double scale);
    // scale * var * I on the diagonal of a square sub-block at (r0, r0).
    void add_scalar_identity(int block, int var, int r0, int dim, double scale);
    void add_const_identity(int block, int r0, int dim, double scale);

    void set_objective(int var, double coeff);

    int num_vars() const { return num_vars_; }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    int block_dim(int j) const { return blocks_[static_cast<std::size_t>(j)].dim; }

    // F_0^(j) + sum v_d F_d^(j) as a dense symmetric matrix.
    MatX block_value(int j, const VecX& v) const;
    // Largest eigenvalue per block; the independent feasibility check.
    VecX block_eig_max(const VecX& v) const;

    MatX sym_value(const SymVar& var, const VecX& v) const;
    MatX rect_value(const RectVar& var, const VecX& v) const;

    // Text dump of every block (dimension, constant part, per-variable
    // triplets) for cross-checking against an external solver.
    void dump_blocks(std::ostream& os) const;

  private:
    friend struct SdpSolverImpl;

    struct Term {
        int var;
        int r, c;
        double value;
    };
    struct Block {
        int dim = 0;
        std::vector<Term> consts; // var = -1
        std::vector<Term> terms;
    };

    int num_vars_ = 0;
    std::vector<Block> blocks_;
    std::vector<std::pair<int, double>> objective_;
};

struct SdpOptions {
    double rho = 1.0;
    double over_relax = 1.6;
    long max_iters = 50000;
    double tol_primal = 1e-9;
    double tol_dual = 1e-7;
    double margin = 0.0; // extra slack (in scaled units) pushed into every block
    long adapt_every = 50;
};

enum class SdpStatus { Optimal, FeasibleSuboptimal, InfeasibleDetected, IterationCap };

std::string to_string(SdpStatus s);

struct SdpResult {
    VecX v;
    SdpStatus status = SdpStatus::IterationCap;
    long iterations = 0;
    double objective = 0.0;
    double max_block_eig = 0.0; // unscaled feasibility of the returned point
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

SdpResult solve_sdp(const SdpProblem& prob, const SdpOptions& opts = {});

} // namespace hwobs
