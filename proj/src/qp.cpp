#include <loco/qp.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

namespace loco
{

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;
constexpr int kRuizIterations = 10;
constexpr int kPolishRounds = 40;
constexpr double kPolishWorkBudget = 2e9;

struct SparseRows
{
    std::vector<std::vector<int>> idx;
    std::vector<std::vector<double>> val;

    void build(const MatX& a)
    {
        const auto m = static_cast<std::size_t>(a.rows());
        idx.assign(m, {});
        val.assign(m, {});
        for (std::size_t i = 0; i < m; ++i)
        {
            for (int j = 0; j < a.cols(); ++j)
            {
                const double v = a(static_cast<int>(i), j);
                if (v != 0.0)
                {
                    idx[i].push_back(j);
                    val[i].push_back(v);
                }
            }
        }
    }

    /** out = A x */
    void multiply(const VecX& x, VecX& out) const
    {
        for (std::size_t i = 0; i < idx.size(); ++i)
        {
            double s = 0.0;
            for (std::size_t k = 0; k < idx[i].size(); ++k)
            {
                s += val[i][k] * x[idx[i][k]];
            }
            out[static_cast<int>(i)] = s;
        }
    }

    /** out += A' w */
    void multiply_transpose_add(const VecX& w, VecX& out) const
    {
        for (std::size_t i = 0; i < idx.size(); ++i)
        {
            const double wi = w[static_cast<int>(i)];
            if (wi == 0.0)
            {
                continue;
            }
            for (std::size_t k = 0; k < idx[i].size(); ++k)
            {
                out[idx[i][k]] += val[i][k] * wi;
            }
        }
    }
};

/** @brief Cholesky factorization restricted to a fixed lower bandwidth. */
class BandedCholesky
{
public:
    bool factor(const MatX& m, int bandwidth)
    {
        m_n = static_cast<int>(m.rows());
        m_bw = bandwidth;
        m_band = MatX::Zero(m_bw + 1, m_n);
        for (int j = 0; j < m_n; ++j)
        {
            double s = m(j, j);
            for (int k = std::max(0, j - m_bw); k < j; ++k)
            {
                s -= m_band(j - k, k) * m_band(j - k, k);
            }
            if (s <= 0.0)
            {
                return false;
            }
            m_band(0, j) = std::sqrt(s);
            const int last = std::min(j + m_bw, m_n - 1);
            for (int i = j + 1; i <= last; ++i)
            {
                double t = m(i, j);
                const int lo = std::max({0, i - m_bw, j - m_bw});
                for (int k = lo; k < j; ++k)
                {
                    t -= m_band(i - k, k) * m_band(j - k, k);
                }
                m_band(i - j, j) = t / m_band(0, j);
            }
        }
        return true;
    }

    void solve_in_place(VecX& b) const
    {
        for (int i = 0; i < m_n; ++i)
        {
            double s = b[i];
            for (int k = std::max(0, i - m_bw); k < i; ++k)
            {
                s -= m_band(i - k, k) * b[k];
            }
            b[i] = s / m_band(0, i);
        }
        for (int i = m_n - 1; i >= 0; --i)
        {
            double s = b[i];
            const int last = std::min(i + m_bw, m_n - 1);
            for (int k = i + 1; k <= last; ++k)
            {
                s -= m_band(k - i, i) * b[k];
            }
            b[i] = s / m_band(0, i);
        }
    }

private:
    int m_n{0};
    int m_bw{0};
    MatX m_band;
};

/** @brief Factorization of H + sigma I + A' diag(rho) A, banded when the
 * problem structure allows it. */
class NormalMatrix
{
public:
    void factor(const MatX& h, double sigma, const SparseRows& rows, const VecX& rho)
    {
        const int n = static_cast<int>(h.rows());
        MatX m = h;
        m.diagonal().array() += sigma;
        for (std::size_t i = 0; i < rows.idx.size(); ++i)
        {
            const double r = rho[static_cast<int>(i)];
            const auto& cols = rows.idx[i];
            const auto& vals = rows.val[i];
            for (std::size_t a = 0; a < cols.size(); ++a)
            {
                for (std::size_t b = 0; b < cols.size(); ++b)
                {
                    m(in(cols[a]), in(cols[b])) += r * vals[a] * vals[b];
                }
            }
        }

        int bw = 0;
        for (int i = 0; i < n; ++i)
        {
            for (int j = 0; j < i; ++j)
            {
                if (m(i, j) != 0.0)
                {
                    bw = std::max(bw, i - j);
                    break;
                }
            }
        }

        m_banded = n >= 64 && bw < n / 3;
        if (m_banded)
        {
            m_banded = m_chol.factor(m, bw);
        }
        if (!m_banded)
        {
            m_dense.compute(m);
            if (m_dense.info() != Eigen::Success)
            {
                throw std::runtime_error("QP normal matrix is not positive definite");
            }
        }
    }

    VecX solve(const VecX& b) const
    {
        if (m_banded)
        {
            VecX x = b;
            m_chol.solve_in_place(x);
            return x;
        }
        return m_dense.solve(b);
    }

private:
    static int in(int j) { return j; }

    bool m_banded{false};
    BandedCholesky m_chol;
    Eigen::LLT<MatX> m_dense;
};

double inf_norm(const VecX& v)
{
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

/** Support function of the bound set evaluated along v; +inf when the ray
 * escapes through an unbounded side. */
double bound_support(const VecX& l, const VecX& u, const VecX& v, double tol)
{
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i)
    {
        if (v[i] > tol)
        {
            if (std::isinf(u[i]))
            {
                return kInf;
            }
            s += u[i] * v[i];
        }
        else if (v[i] < -tol)
        {
            if (std::isinf(l[i]))
            {
                return kInf;
            }
            s += l[i] * v[i];
        }
    }
    return s;
}

struct Kkt
{
    double primal;
    double dual;
};

Kkt kkt_residuals(const MatX& h, const VecX& c, const MatX& a, const VecX& l, const VecX& u,
                  const VecX& x, const VecX& y, double tol)
{
    Kkt out{0.0, 0.0};
    if (a.rows() > 0)
    {
        const VecX ax = a * x;
        for (int i = 0; i < ax.size(); ++i)
        {
            out.primal = std::max(out.primal, std::max(l[i] - ax[i], ax[i] - u[i]));
        }
        out.primal = std::max(out.primal, 0.0);
        out.dual = inf_norm(h * x + c + a.transpose() * y);
    }
    else
    {
        out.dual = inf_norm(h * x + c);
    }
    (void)tol;
    return out;
}

} // namespace

void QpProblem::validate() const
{
    const int nn = n();
    if (H.rows() != nn || H.cols() != nn)
    {
        throw std::invalid_argument("QP: H must be n x n");
    }
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    {
        throw std::invalid_argument("QP: H must be symmetric");
    }
    if (A_eq.rows() != m_eq() || (A_eq.rows() > 0 && A_eq.cols() != nn))
    {
        throw std::invalid_argument("QP: equality block dimensions inconsistent");
    }
    if (A_in.rows() != m_in() || u_in.size() != m_in()
        || (A_in.rows() > 0 && A_in.cols() != nn))
    {
        throw std::invalid_argument("QP: inequality block dimensions inconsistent");
    }
    for (int i = 0; i < m_in(); ++i)
    {
        if (!(l_in[i] <= u_in[i]))
        {
            throw std::invalid_argument("QP: crossed inequality bounds at row "
                                        + std::to_string(i));
        }
    }
}

const char* to_string(QpStatus status)
{
    switch (status)
    {
    case QpStatus::Solved:
        return "solved";
    case QpStatus::MaxIter:
        return "max_iter";
    case QpStatus::Infeasible:
        return "infeasible";
    case QpStatus::Unbounded:
        return "unbounded";
    }
    return "unknown";
}

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings,
                    const QpWarmStart& warm)
{
    problem.validate();

    const int n = problem.n();
    const int me = problem.m_eq();
    const int mi = problem.m_in();
    const int m = me + mi;

    MatX a(m, n);
    VecX l(m);
    VecX u(m);
    if (me > 0)
    {
        a.topRows(me) = problem.A_eq;
        l.head(me) = problem.b_eq;
        u.head(me) = problem.b_eq;
    }
    if (mi > 0)
    {
        a.bottomRows(mi) = problem.A_in;
        l.tail(mi) = problem.l_in;
        u.tail(mi) = problem.u_in;
    }

    // Ruiz equilibration
    MatX hs = problem.H;
    VecX cs = problem.c;
    MatX as = a;
    VecX ls = l;
    VecX us = u;
    VecX d_scale = VecX::Ones(n);
    VecX e_scale = VecX::Ones(m);
    double cost_scale = 1.0;
    if (settings.scaling)
    {
        for (int pass = 0; pass < kRuizIterations; ++pass)
        {
            VecX d(n);
            for (int j = 0; j < n; ++j)
            {
                double norm = hs.col(j).cwiseAbs().maxCoeff();
                if (m > 0)
                {
                    norm = std::max(norm, as.col(j).cwiseAbs().maxCoeff());
                }
                d[j] = 1.0 / std::sqrt(std::clamp(norm, 1e-8, 1e8));
            }
            hs = d.asDiagonal() * hs * d.asDiagonal();
            cs = cs.cwiseProduct(d);
            d_scale = d_scale.cwiseProduct(d);
            if (m > 0)
            {
                as = as * d.asDiagonal();
                VecX e(m);
                for (int i = 0; i < m; ++i)
                {
                    const double norm = as.row(i).cwiseAbs().maxCoeff();
                    e[i] = 1.0 / std::sqrt(std::clamp(norm, 1e-8, 1e8));
                }
                as = e.asDiagonal() * as;
                ls = ls.cwiseProduct(e);
                us = us.cwiseProduct(e);
                e_scale = e_scale.cwiseProduct(e);
            }
            double cost_norm = 0.0;
            for (int j = 0; j < n; ++j)
            {
                cost_norm += hs.col(j).cwiseAbs().maxCoeff();
            }
            cost_norm = std::max(cost_norm / std::max(1, n), inf_norm(cs));
            const double g = 1.0 / std::clamp(cost_norm, 1e-8, 1e8);
            hs *= g;
            cs *= g;
            cost_scale *= g;
        }
    }

    // per-row penalty, boosted on equality rows
    auto build_rho = [&](double base) {
        VecX rho(m);
        for (int i = 0; i < m; ++i)
        {
            if (l[i] == u[i])
            {
                rho[i] = std::clamp(base * kRhoEqScale, kRhoMin, kRhoMax);
            }
            else if (std::isinf(l[i]) && std::isinf(u[i]))
            {
                rho[i] = kRhoMin;
            }
            else
            {
                rho[i] = std::clamp(base, kRhoMin, kRhoMax);
            }
        }
        return rho;
    };

    double rho_base = settings.rho;
    VecX rho = build_rho(rho_base);

    SparseRows rows;
    rows.build(as);

    NormalMatrix normal;
    normal.factor(hs, settings.sigma, rows, rho);

    VecX x = VecX::Zero(n);
    VecX y = VecX::Zero(m);
    if (warm.x.size() == n)
    {
        x = warm.x.cwiseQuotient(d_scale);
    }
    if (m > 0 && warm.y_eq.size() == me && warm.y_in.size() == mi)
    {
        VecX y0(m);
        y0.head(me) = warm.y_eq;
        y0.tail(mi) = warm.y_in;
        y = cost_scale * y0.cwiseQuotient(e_scale);
    }
    VecX z(m);
    if (m > 0)
    {
        rows.multiply(x, z);
        z = z.cwiseMax(ls).cwiseMin(us);
    }

    QpSolution sol;
    sol.status = QpStatus::MaxIter;

    VecX x_tilde(n);
    VecX z_tilde(m);
    VecX rhs(n);
    VecX ax_unscaled(m);

    double best_kkt = kInf;
    const double alpha = settings.alpha;

    int it = 0;
    while (it < settings.max_iter)
    {
        ++it;

        rhs = settings.sigma * x - cs;
        if (m > 0)
        {
            rows.multiply_transpose_add(rho.cwiseProduct(z) - y, rhs);
        }
        x_tilde = normal.solve(rhs);

        const VecX x_prev = x;
        const VecX y_prev = y;
        x = alpha * x_tilde + (1.0 - alpha) * x;
        if (m > 0)
        {
            rows.multiply(x_tilde, z_tilde);
            const VecX z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
            const VecX z_new =
                (z_relaxed + y.cwiseQuotient(rho)).cwiseMax(ls).cwiseMin(us);
            y += rho.cwiseProduct(z_relaxed - z_new);
            z = z_new;
        }

        const bool checking =
            it == 1 || it % settings.check_interval == 0 || it == settings.max_iter;
        if (!checking)
        {
            continue;
        }

        const VecX x_u = x.cwiseProduct(d_scale);
        VecX y_u = VecX::Zero(m);
        double r_p = 0.0;
        double scale_p = 0.0;
        if (m > 0)
        {
            y_u = e_scale.cwiseProduct(y) / cost_scale;
            rows.multiply(x, ax_unscaled);
            ax_unscaled = ax_unscaled.cwiseQuotient(e_scale);
            const VecX z_u = z.cwiseQuotient(e_scale);
            r_p = inf_norm(ax_unscaled - z_u);
            scale_p = std::max(inf_norm(ax_unscaled), inf_norm(z_u));
        }
        const VecX hx = problem.H * x_u;
        VecX dual_vec = hx + problem.c;
        if (m > 0)
        {
            dual_vec += a.transpose() * y_u;
        }
        const double r_d = inf_norm(dual_vec);
        const double scale_d =
            std::max({inf_norm(hx), inf_norm(problem.c),
                      m > 0 ? inf_norm(a.transpose() * y_u) : 0.0});

        const double eps_p = settings.tol + settings.tol * scale_p;
        const double eps_d = settings.tol + settings.tol * scale_d;
        best_kkt = std::min(best_kkt, std::max(r_p, r_d));

        if (r_p <= eps_p && r_d <= eps_d)
        {
            sol.status = QpStatus::Solved;
            sol.kkt_residual = std::max(r_p, r_d);
            break;
        }

        if (m > 0)
        {
            // primal infeasibility test on the dual update direction
            const VecX dy = e_scale.cwiseProduct(y - y_prev);
            const double dy_norm = inf_norm(dy);
            if (dy_norm > 1e-12)
            {
                const VecX v = dy / dy_norm;
                const double atv = inf_norm(a.transpose() * v);
                const double support = bound_support(l, u, v, 1e-12);
                if (atv <= settings.eps_inf && support <= -settings.eps_inf)
                {
                    sol.status = QpStatus::Infeasible;
                    sol.certificate = v;
                    sol.kkt_residual = std::max(r_p, r_d);
                    break;
                }
            }
        }
        {
            // dual infeasibility test on the primal update direction
            const VecX dx = d_scale.cwiseProduct(x - x_prev);
            const double dx_norm = inf_norm(dx);
            if (dx_norm > 1e-12)
            {
                const VecX t = dx / dx_norm;
                const bool curvature_flat = inf_norm(problem.H * t) <= settings.eps_inf;
                const bool descent = problem.c.dot(t) <= -settings.eps_inf;
                bool recession = true;
                if (m > 0)
                {
                    const VecX at = a * t;
                    for (int i = 0; i < m && recession; ++i)
                    {
                        if (std::isfinite(u[i]) && at[i] > settings.eps_inf)
                        {
                            recession = false;
                        }
                        if (std::isfinite(l[i]) && at[i] < -settings.eps_inf)
                        {
                            recession = false;
                        }
                    }
                }
                if (curvature_flat && descent && recession)
                {
                    sol.status = QpStatus::Unbounded;
                    sol.certificate = t;
                    sol.kkt_residual = std::max(r_p, r_d);
                    break;
                }
            }
        }

        if (settings.adaptive_rho && m > 0 && it % (settings.check_interval * 4) == 0)
        {
            const double np = r_p / std::max(scale_p, 1e-10);
            const double nd = r_d / std::max(scale_d, 1e-10);
            const double ratio = std::sqrt(np / std::max(nd, 1e-16));
            if (ratio > 5.0 || ratio < 0.2)
            {
                rho_base = std::clamp(rho_base * ratio, kRhoMin, kRhoMax);
                rho = build_rho(rho_base);
                normal.factor(hs, settings.sigma, rows, rho);
            }
        }
    }

    sol.iterations = it;
    sol.x = x.cwiseProduct(d_scale);
    VecX y_u = VecX::Zero(m);
    if (m > 0)
    {
        y_u = e_scale.cwiseProduct(y) / cost_scale;
    }
    if (sol.status == QpStatus::MaxIter)
    {
        sol.kkt_residual = best_kkt;
    }

    if ((sol.status == QpStatus::Solved || sol.status == QpStatus::MaxIter)
        && settings.polish)
    {
        // Active-set refinement in the unscaled problem: solve the equality
        // KKT system on the working set, then exchange rows (drop wrong-sign
        // multipliers, add violated constraints) until the set is consistent.
        // Direct factorization is insensitive to the curvature spread that
        // slows the splitting iteration, so this recovers accurate solutions
        // from coarse iterates.
        const double delta = 1e-7;
        MatX h_reg = problem.H;
        h_reg.diagonal().array() += delta;
        Eigen::LLT<MatX> k1(h_reg);
        if (k1.info() == Eigen::Success)
        {
            // -1: at lower bound, +1: at upper bound, 0: inactive
            std::vector<int> side(static_cast<std::size_t>(m), 0);
            VecX ax = m > 0 ? VecX(a * sol.x) : VecX();
            for (int i = 0; i < m; ++i)
            {
                if (l[i] == u[i])
                {
                    side[static_cast<std::size_t>(i)] = -1;
                    continue;
                }
                const double span =
                    std::max({1.0, std::isfinite(l[i]) ? std::abs(l[i]) : 0.0,
                              std::isfinite(u[i]) ? std::abs(u[i]) : 0.0,
                              std::abs(ax[i])});
                if (y_u[i] > 1e-10 && std::isfinite(u[i]))
                {
                    side[static_cast<std::size_t>(i)] = 1;
                }
                else if (y_u[i] < -1e-10 && std::isfinite(l[i]))
                {
                    side[static_cast<std::size_t>(i)] = -1;
                }
                else if (std::isfinite(l[i]) && ax[i] - l[i] <= 1e-8 * span)
                {
                    side[static_cast<std::size_t>(i)] = -1;
                }
                else if (std::isfinite(u[i]) && u[i] - ax[i] <= 1e-8 * span)
                {
                    side[static_cast<std::size_t>(i)] = 1;
                }
            }

            VecX x_best = sol.x;
            VecX y_best = y_u;
            Kkt best = kkt_residuals(problem.H, problem.c, a, l, u, sol.x, y_u,
                                     settings.tol);
            bool improved = false;
            // Each round pays one n^2 * ka Schur build, so large problems get
            // few exchange rounds while small ones may iterate to the exact
            // active set.
            const double round_work =
                static_cast<double>(n) * static_cast<double>(n) * std::max(1, m);
            const int max_rounds = std::clamp(
                static_cast<int>(kPolishWorkBudget / std::max(1.0, round_work)), 2,
                kPolishRounds);
            for (int round = 0; round < max_rounds; ++round)
            {
                std::vector<int> active;
                for (int i = 0; i < m; ++i)
                {
                    if (side[static_cast<std::size_t>(i)] != 0)
                    {
                        active.push_back(i);
                    }
                }
                const int ka = static_cast<int>(active.size());
                MatX a_act(ka, n);
                VecX b_act(ka);
                for (int i = 0; i < ka; ++i)
                {
                    const int row = active[static_cast<std::size_t>(i)];
                    a_act.row(i) = a.row(row);
                    b_act[i] = side[static_cast<std::size_t>(row)] > 0 ? u[row] : l[row];
                }

                VecX x_pol;
                VecX nu = VecX::Zero(ka);
                if (ka == 0)
                {
                    x_pol = k1.solve(-problem.c);
                }
                else
                {
                    const MatX g = k1.solve(a_act.transpose());
                    MatX s = a_act * g;
                    s.diagonal().array() += delta;
                    Eigen::LLT<MatX> s_chol(s);
                    if (s_chol.info() != Eigen::Success)
                    {
                        break;
                    }
                    const VecX t = k1.solve(-problem.c);
                    nu = s_chol.solve(b_act - a_act * t);
                    x_pol = t + g * nu;
                    // The diagonal shift perturbs rows carrying large
                    // multipliers by delta * nu, and each pass contracts that
                    // error by roughly delta / sigma_min(S), so iterate until
                    // the KKT residual bottoms out.
                    for (int refine = 0; refine < 12; ++refine)
                    {
                        const VecX r1 =
                            -(problem.H * x_pol + problem.c + a_act.transpose() * nu);
                        const VecX r2 = b_act - a_act * x_pol;
                        if (std::max(inf_norm(r1), inf_norm(r2)) < 1e-13)
                        {
                            break;
                        }
                        const VecX dnu = s_chol.solve(a_act * k1.solve(r1) - r2);
                        const VecX dx = k1.solve(r1 - a_act.transpose() * dnu);
                        x_pol += dx;
                        nu += dnu;
                    }
                }

                VecX y_pol = VecX::Zero(m);
                for (int i = 0; i < ka; ++i)
                {
                    y_pol[active[static_cast<std::size_t>(i)]] = nu[i];
                }
                const Kkt now = kkt_residuals(problem.H, problem.c, a, l, u, x_pol, y_pol,
                                              settings.tol);
                if (std::max(now.primal, now.dual) < std::max(best.primal, best.dual))
                {
                    x_best = x_pol;
                    y_best = y_pol;
                    best = now;
                    improved = true;
                }

                bool changed = false;
                for (int i = 0; i < ka; ++i)
                {
                    const int row = active[static_cast<std::size_t>(i)];
                    if (l[row] == u[row])
                    {
                        continue;
                    }
                    const int s_row = side[static_cast<std::size_t>(row)];
                    if ((s_row < 0 && nu[i] > 1e-10) || (s_row > 0 && nu[i] < -1e-10))
                    {
                        side[static_cast<std::size_t>(row)] = 0;
                        changed = true;
                    }
                }
                ax = m > 0 ? VecX(a * x_pol) : VecX();
                for (int i = 0; i < m; ++i)
                {
                    if (side[static_cast<std::size_t>(i)] != 0)
                    {
                        continue;
                    }
                    const double span =
                        std::max({1.0, std::isfinite(l[i]) ? std::abs(l[i]) : 0.0,
                                  std::isfinite(u[i]) ? std::abs(u[i]) : 0.0,
                                  std::abs(ax[i])});
                    if (std::isfinite(l[i]) && ax[i] < l[i] - 1e-9 * span)
                    {
                        side[static_cast<std::size_t>(i)] = -1;
                        changed = true;
                    }
                    else if (std::isfinite(u[i]) && ax[i] > u[i] + 1e-9 * span)
                    {
                        side[static_cast<std::size_t>(i)] = 1;
                        changed = true;
                    }
                }
                if (!changed)
                {
                    break;
                }
            }

            if (improved)
            {
                sol.x = x_best;
                y_u = y_best;
                sol.kkt_residual = std::max(best.primal, best.dual);
                sol.polished = true;
                if (sol.status == QpStatus::MaxIter)
                {
                    const double sc_d =
                        std::max({inf_norm(problem.H * sol.x), inf_norm(problem.c),
                                  m > 0 ? inf_norm(a.transpose() * y_u) : 0.0});
                    double sc_p = 0.0;
                    if (m > 0)
                    {
                        const VecX ax_pol = a * sol.x;
                        sc_p = inf_norm(ax_pol);
                    }
                    if (best.primal <= settings.tol + settings.tol * sc_p
                        && best.dual <= settings.tol + settings.tol * sc_d)
                    {
                        sol.status = QpStatus::Solved;
                    }
                }
            }
        }
    }

    sol.y_eq = y_u.head(me);
    sol.y_in = y_u.tail(mi);
    return sol;
}

void dump_qp(const QpProblem& problem, std::ostream& out)
{
    const Eigen::IOFormat fmt(17, 0, " ", "\n", "", "", "", "");
    out << "n " << problem.n() << " m_eq " << problem.m_eq() << " m_in " << problem.m_in()
        << "\n";
    out << "H\n" << problem.H.format(fmt) << "\n";
    out << "c\n" << problem.c.transpose().format(fmt) << "\n";
    if (problem.m_eq() > 0)
    {
        out << "A_eq\n" << problem.A_eq.format(fmt) << "\n";
        out << "b_eq\n" << problem.b_eq.transpose().format(fmt) << "\n";
    }
    if (problem.m_in() > 0)
    {
        out << "A_in\n" << problem.A_in.format(fmt) << "\n";
        out << "l_in\n" << problem.l_in.transpose().format(fmt) << "\n";
        out << "u_in\n" << problem.u_in.transpose().format(fmt) << "\n";
    }
}

} // namespace loco
