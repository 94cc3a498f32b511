#pragma once

#include <loco/common.hpp>

#include <iosfwd>
#include <optional>

namespace loco
{

/** @brief Convex QP in the form
 *
 *   minimize    0.5 x'Hx + c'x
 *   subject to  A_eq x = b_eq
 *               l_in <= A_in x <= u_in
 *
 * H must be symmetric positive semidefinite.
 */
struct QpProblem
{
    MatX H;
    VecX c;
    MatX A_eq;
    VecX b_eq;
    MatX A_in;
    VecX l_in;
    VecX u_in;

    int n() const { return static_cast<int>(c.size()); }
    int m_eq() const { return static_cast<int>(b_eq.size()); }
    int m_in() const { return static_cast<int>(l_in.size()); }

    /** @brief Throws std::invalid_argument on dimension mismatches, asymmetric H
     * (tolerance 1e-10) or crossed bounds. */
    void validate() const;

    double objective(const VecX& x) const
    {
        return 0.5 * x.dot(H * x) + c.dot(x);
    }
};

enum class QpStatus
{
    Solved,
    MaxIter,
    Infeasible,
    Unbounded
};

const char* to_string(QpStatus status);

struct QpSettings
{
    double tol{1e-6};
    int max_iter{4000};
    double rho{0.1};
    double sigma{1e-6};
    double alpha{1.6};
    bool adaptive_rho{true};
    bool polish{true};
    bool scaling{true};
    int check_interval{25};
    /** Certificate tolerance for the infeasibility/unboundedness tests; kept
     * independent of tol so tightening the KKT target does not disable
     * detection. */
    double eps_inf{1e-5};
};

/** @brief Solver output; duals follow the convention Hx + c + A'y = 0 with
 * y >= 0 on active upper bounds and y <= 0 on active lower bounds. */
struct QpSolution
{
    VecX x;
    VecX y_eq;
    VecX y_in;
    QpStatus status{QpStatus::MaxIter};
    int iterations{0};
    double kkt_residual{0.0};
    bool polished{false};
    /** Certificate direction for infeasible problems (y-space ray). */
    VecX certificate;
};

/** @brief Warm-start data; any field may be left empty. */
struct QpWarmStart
{
    VecX x;
    VecX y_eq;
    VecX y_in;
};

/** @brief Operator-splitting solver with Ruiz equilibration, adaptive penalty,
 * over-relaxation and an active-set polishing pass.
 *
 * The normal-equation matrix is factorized with a bandwidth-aware Cholesky so
 * chain-structured problems (multiple shooting) stay cheap; the interface is
 * dense.
 */
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                    const QpWarmStart& warm = {});

/** @brief Text dump of a problem for offline debugging. */
void dump_qp(const QpProblem& problem, std::ostream& out);

} // namespace loco
