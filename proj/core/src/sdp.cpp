#include "hwobs/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <ostream>
#include <cmath>

namespace hwobs {

int SdpProblem::add_scalar() { return num_vars_++; }

SdpProblem::SymVar SdpProblem::add_symmetric(int dim) {
    SymVar v{num_vars_, dim};
    num_vars_ += dim * (dim + 1) / 2;
    return v;
}

SdpProblem::RectVar SdpProblem::add_rect(int rows, int cols) {
    RectVar v{num_vars_, rows, cols};
    num_vars_ += rows * cols;
    return v;
}

int SdpProblem::sym_index(const SymVar& v, int i, int j) {
    if (i < j) std::swap(i, j); // packed lower triangle, row major
    return v.offset + i * (i + 1) / 2 + j;
}

int SdpProblem::rect_index(const RectVar& v, int i, int j) { return v.offset + i * v.cols + j; }

int SdpProblem::add_block(int dim) {
    blocks_.push_back(Block{dim, {}, {}});
    return static_cast<int>(blocks_.size()) - 1;
}

void SdpProblem::add_const(int block, int r, int c, double value) {
    if (r < c) throw std::invalid_argument("LMI entries must be given in the lower triangle");
    if (value != 0.0) blocks_[static_cast<std::size_t>(block)].consts.push_back({-1, r, c, value});
}

void SdpProblem::add_term(int block, int var, int r, int c, double value) {
    if (r < c) throw std::invalid_argument("LMI entries must be given in the lower triangle");
    if (value != 0.0) blocks_[static_cast<std::size_t>(block)].terms.push_back({var, r, c, value});
}

void SdpProblem::add_sym_product(int block, const SymVar& P, const MatX& M, int r0, int c0,
                                 double scale) {
    // d(P M)/dP_ij = E_ij M: row i picks up M row j and vice versa.
    for (int i = 0; i < P.dim; ++i)
        for (int j = 0; j <= i; ++j) {
            const int var = sym_index(P, i, j);
            for (int c = 0; c < M.cols(); ++c) {
                if (M(j, c) != 0.0) add_term(block, var, r0 + i, c0 + c, scale * M(j, c));
                if (i != j && M(i, c) != 0.0) add_term(block, var, r0 + j, c0 + c, scale * M(i, c));
            }
        }
}

void SdpProblem::add_sym(int block, const SymVar& P, int r0, int c0, double scale) {
    for (int i = 0; i < P.dim; ++i)
        for (int j = 0; j <= i; ++j) {
            add_term(block, sym_index(P, i, j), r0 + i, c0 + j, scale);
            if (r0 != c0 && i != j) add_term(block, sym_index(P, i, j), r0 + j, c0 + i, scale);
        }
}

void SdpProblem::add_rect_product(int block, const RectVar& Y, const MatX& M, int r0, int c0,
                                  double scale) {
    for (int i = 0; i < Y.rows; ++i)
        for (int j = 0; j < Y.cols; ++j) {
            const int var = rect_index(Y, i, j);
            for (int c = 0; c < M.cols(); ++c)
                if (M(j, c) != 0.0) add_term(block, var, r0 + i, c0 + c, scale * M(j, c));
        }
}

void SdpProblem::add_scalar_identity(int block, int var, int r0, int dim, double scale) {
    for (int i = 0; i < dim; ++i) add_term(block, var, r0 + i, r0 + i, scale);
}

void SdpProblem::add_const_identity(int block, int r0, int dim, double scale) {
    for (int i = 0; i < dim; ++i) add_const(block, r0 + i, r0 + i, scale);
}

void SdpProblem::set_objective(int var, double coeff) { objective_.emplace_back(var, coeff); }

MatX SdpProblem::block_value(int j, const VecX& v) const {
    const auto& blk = blocks_[static_cast<std::size_t>(j)];
    MatX M = MatX::Zero(blk.dim, blk.dim);
    auto scatter = [&](int r, int c, double val) {
        M(r, c) += val;
        if (r != c) M(c, r) += val;
    };
    for (const auto& t : blk.consts) scatter(t.r, t.c, t.value);
    for (const auto& t : blk.terms) scatter(t.r, t.c, v[t.var] * t.value);
    return M;
}

VecX SdpProblem::block_eig_max(const VecX& v) const {
    VecX out(num_blocks());
    for (int j = 0; j < num_blocks(); ++j) {
        Eigen::SelfAdjointEigenSolver<MatX> es(block_value(j, v), Eigen::EigenvaluesOnly);
        out[j] = es.eigenvalues().maxCoeff();
    }
    return out;
}

MatX SdpProblem::sym_value(const SymVar& var, const VecX& v) const {
    MatX M(var.dim, var.dim);
    for (int i = 0; i < var.dim; ++i)
        for (int j = 0; j <= i; ++j) M(i, j) = M(j, i) = v[sym_index(var, i, j)];
    return M;
}

MatX SdpProblem::rect_value(const RectVar& var, const VecX& v) const {
    MatX M(var.rows, var.cols);
    for (int i = 0; i < var.rows; ++i)
        for (int j = 0; j < var.cols; ++j) M(i, j) = v[rect_index(var, i, j)];
    return M;
}

void SdpProblem::dump_blocks(std::ostream& os) const {
    os << "vars " << num_vars_ << "\nblocks " << blocks_.size() << "\n";
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
        const auto& blk = blocks_[j];
        os << "block " << j << " dim " << blk.dim << "\n";
        for (const auto& t : blk.consts)
            os << "  const " << t.r << " " << t.c << " " << t.value << "\n";
        for (const auto& t : blk.terms)
            os << "  var " << t.var << " " << t.r << " " << t.c << " " << t.value << "\n";
    }
}

std::string to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::Optimal: return "optimal";
        case SdpStatus::FeasibleSuboptimal: return "feasible-suboptimal";
        case SdpStatus::InfeasibleDetected: return "infeasible-detected";
        case SdpStatus::IterationCap: return "iteration-cap";
    }
    return "unknown";
}

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

int svec_len(int dim) { return dim * (dim + 1) / 2; }

int svec_index(int r, int c, int /*dim*/) { // r >= c
    return r * (r + 1) / 2 + c;
}

// Isometric svec: off-diagonals scaled by sqrt(2) so that the Euclidean norm
// matches the Frobenius norm and the PSD projection stays a projection.
void mat_to_svec(const MatX& M, double* out) {
    int k = 0;
    for (int r = 0; r < M.rows(); ++r)
        for (int c = 0; c <= r; ++c) out[k++] = (r == c) ? M(r, c) : kSqrt2 * M(r, c);
}

void svec_to_mat(const double* in, MatX& M) {
    int k = 0;
    for (int r = 0; r < M.rows(); ++r)
        for (int c = 0; c <= r; ++c) {
            const double v = (r == c) ? in[k] : in[k] / kSqrt2;
            M(r, c) = v;
            M(c, r) = v;
            ++k;
        }
}

} // namespace

struct SdpSolverImpl {
    const SdpProblem& prob;
    const SdpOptions& opts;

    SdpResult run() {
        using Trip = Eigen::Triplet<double>;
        const int d = prob.num_vars_;
        const int nblocks = prob.num_blocks();

        std::vector<int> row_base(static_cast<std::size_t>(nblocks) + 1, 0);
        for (int j = 0; j < nblocks; ++j)
            row_base[static_cast<std::size_t>(j) + 1] =
                row_base[static_cast<std::size_t>(j)] + svec_len(prob.block_dim(j));
        const int rows = row_base[static_cast<std::size_t>(nblocks)];

        // Stacked constraint matrix in svec coordinates, plus block scaling.
        std::vector<Trip> trips;
        VecX b = VecX::Zero(rows);
        for (int j = 0; j < nblocks; ++j) {
            const auto& blk = prob.blocks_[static_cast<std::size_t>(j)];
            const int base = row_base[static_cast<std::size_t>(j)];
            for (const auto& t : blk.consts)
                b[base + svec_index(t.r, t.c, blk.dim)] += (t.r == t.c) ? t.value : kSqrt2 * t.value;
            for (const auto& t : blk.terms)
                trips.emplace_back(base + svec_index(t.r, t.c, blk.dim), t.var,
                                   (t.r == t.c) ? t.value : kSqrt2 * t.value);
        }
        Eigen::SparseMatrix<double> A(rows, d);
        A.setFromTriplets(trips.begin(), trips.end());

        VecX c = VecX::Zero(d);
        for (const auto& [var, coeff] : prob.objective_) c[var] += coeff;

        // Row scaling: one positive scalar per block (PSD-invariant).
        VecX block_scale(nblocks);
        for (int j = 0; j < nblocks; ++j) {
            const int base = row_base[static_cast<std::size_t>(j)];
            const int len = svec_len(prob.block_dim(j));
            double norm2 = b.segment(base, len).squaredNorm();
            for (int k = 0; k < A.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
                    if (it.row() >= base && it.row() < base + len) norm2 += it.value() * it.value();
            block_scale[j] = 1.0 / std::max(1e-12, std::sqrt(norm2 / len));
        }
        for (int k = 0; k < A.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
                int j = 0;
                while (it.row() >= row_base[static_cast<std::size_t>(j) + 1]) ++j;
                it.valueRef() *= block_scale[j];
            }
        for (int j = 0; j < nblocks; ++j) {
            const int base = row_base[static_cast<std::size_t>(j)];
            b.segment(base, svec_len(prob.block_dim(j))) *= block_scale[j];
        }

        // Column equilibration.
        VecX col_scale = VecX::Ones(d);
        for (int k = 0; k < d; ++k) {
            double norm = 0.0;
            for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
                norm += it.value() * it.value();
            col_scale[k] = 1.0 / std::clamp(std::sqrt(norm), 1e-6, 1e6);
        }
        for (int k = 0; k < d; ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
                it.valueRef() *= col_scale[k];
        VecX c_scaled = c.cwiseProduct(col_scale);

        // Feasibility margin, in scaled units.
        if (opts.margin > 0.0) {
            for (int j = 0; j < nblocks; ++j) {
                const int base = row_base[static_cast<std::size_t>(j)];
                const int dim = prob.block_dim(j);
                for (int r = 0; r < dim; ++r) b[base + svec_index(r, r, dim)] += opts.margin;
            }
        }

        // Normal matrix, factored once; rho changes only rescale the c term.
        const Eigen::SparseMatrix<double> At = A.transpose();
        MatX H = MatX(At * A);
        H.diagonal().array() += 1e-12;
        Eigen::LLT<MatX> llt(H);
        if (llt.info() != Eigen::Success) throw std::runtime_error("SDP normal matrix factorization failed");

        VecX s = VecX::Zero(rows), u = VecX::Zero(rows), v = VecX::Zero(d);
        double rho = opts.rho;
        SdpResult res;

        std::vector<MatX> work;
        work.reserve(static_cast<std::size_t>(nblocks));
        for (int j = 0; j < nblocks; ++j) work.emplace_back(prob.block_dim(j), prob.block_dim(j));

        double best_stall = std::numeric_limits<double>::infinity();
        long stall_iters = 0;

        for (long it = 0; it < opts.max_iters; ++it) {
            v = llt.solve(At * (s - u - b) - c_scaled / rho);
            const VecX t = A * v + b;
            const VecX t_relax = opts.over_relax * t + (1.0 - opts.over_relax) * s;

            VecX s_prev = std::move(s);
            s.resize(rows);
            const VecX proj_in = t_relax + u;
            for (int j = 0; j < nblocks; ++j) {
                const int base = row_base[static_cast<std::size_t>(j)];
                MatX& M = work[static_cast<std::size_t>(j)];
                svec_to_mat(proj_in.data() + base, M);
                Eigen::SelfAdjointEigenSolver<MatX> es(M);
                const VecX ev = es.eigenvalues().cwiseMin(0.0);
                M = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
                mat_to_svec(M, s.data() + base);
            }
            u += t_relax - s;

            const double r_primal = (t - s).cwiseAbs().maxCoeff();
            const double r_dual = rho * (At * (s - s_prev)).cwiseAbs().maxCoeff();
            res.iterations = it + 1;
            res.primal_residual = r_primal;
            res.dual_residual = r_dual;

            if (r_primal <= opts.tol_primal && r_dual <= opts.tol_dual) {
                res.status = SdpStatus::Optimal;
                break;
            }

            if (opts.adapt_every > 0 && (it + 1) % opts.adapt_every == 0) {
                if (r_primal > 10.0 * r_dual) {
                    rho *= 2.0;
                    u *= 0.5;
                } else if (r_dual > 10.0 * r_primal) {
                    rho *= 0.5;
                    u *= 2.0;
                }
                // Infeasibility shows up as a primal residual frozen well
                // above tolerance while the dual residual has converged.
                if (r_primal < 0.999 * best_stall) {
                    best_stall = r_primal;
                    stall_iters = 0;
                } else {
                    ++stall_iters;
                }
                if (stall_iters * opts.adapt_every > 3000 && r_dual <= opts.tol_dual &&
                    r_primal > 100.0 * opts.tol_primal) {
                    res.status = SdpStatus::InfeasibleDetected;
                    break;
                }
            }
        }

        res.v = v.cwiseProduct(col_scale);
        res.objective = c.dot(res.v);
        res.max_block_eig = prob.block_eig_max(res.v).maxCoeff();
        if (res.status != SdpStatus::Optimal && res.status != SdpStatus::InfeasibleDetected)
            res.status = res.max_block_eig <= 1e-7 ? SdpStatus::FeasibleSuboptimal
                                                   : SdpStatus::IterationCap;
        return res;
    }
};

SdpResult solve_sdp(const SdpProblem& prob, const SdpOptions& opts) {
    SdpSolverImpl impl{prob, opts};
    return impl.run();
}

} // namespace hwobs
