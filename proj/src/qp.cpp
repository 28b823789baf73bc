/*
 Copyright 2026 The sfrl Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "sfrl/qp.hpp"

#include <algorithm>
#include <cmath>

#include "sfrl/errors.hpp"

namespace sfrl
{

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const VectorXd &v)
{
    return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

double scale_factor(double norm)
{
    if (norm < 1e-4)
        return 1.0;
    return 1.0 / std::sqrt(std::min(norm, 1e4));
}

struct Polished
{
    VectorXd x;
    VectorXd y;
    bool ok = false;
};

enum class RowState
{
    Inactive,
    Lower,
    Upper,
    Equality
};

// Solves the equality-constrained KKT system on a guessed active set and
// accepts the result only if it is a verified KKT point of the full problem.
Polished polish(const QpProblem &p, const MatrixXd &Hreg, const VectorXd &z, const VectorXd &y,
                double tol)
{
    const auto d = p.H.rows();
    const auto k = p.C.rows();
    std::vector<Eigen::Index> rows;
    std::vector<RowState> state(k, RowState::Inactive);
    for (Eigen::Index i = 0; i < k; ++i)
    {
        if (p.lb[i] == p.ub[i])
            state[i] = RowState::Equality;
        else if (std::isfinite(p.lb[i]) && z[i] - p.lb[i] < -y[i])
            state[i] = RowState::Lower;
        else if (std::isfinite(p.ub[i]) && p.ub[i] - z[i] < y[i])
            state[i] = RowState::Upper;
        if (state[i] != RowState::Inactive)
            rows.push_back(i);
    }
    const auto na = static_cast<Eigen::Index>(rows.size());
    MatrixXd kkt = MatrixXd::Zero(d + na, d + na);
    VectorXd rhs(d + na);
    kkt.topLeftCorner(d, d) = Hreg;
    rhs.head(d) = -p.g;
    for (Eigen::Index a = 0; a < na; ++a)
    {
        const auto i = rows[a];
        kkt.block(d + a, 0, 1, d) = p.C.row(i);
        kkt.block(0, d + a, d, 1) = p.C.row(i).transpose();
        rhs[d + a] = state[i] == RowState::Upper ? p.ub[i] : p.lb[i];
    }
    MatrixXd kkt_reg = kkt;
    const double delta = 1e-9;
    kkt_reg.topLeftCorner(d, d).diagonal().array() += delta;
    kkt_reg.bottomRightCorner(na, na).diagonal().array() -= delta;
    Eigen::PartialPivLU<MatrixXd> lu(kkt_reg);
    VectorXd sol = lu.solve(rhs);
    for (int refine = 0; refine < 5; ++refine)
        sol += lu.solve(rhs - kkt * sol);

    Polished out;
    out.x = sol.head(d);
    out.y = VectorXd::Zero(k);
    for (Eigen::Index a = 0; a < na; ++a)
        out.y[rows[a]] = sol[d + a];
    if (!out.x.allFinite() || !out.y.allFinite())
        return out;

    const VectorXd cx = p.C * out.x;
    for (Eigen::Index i = 0; i < k; ++i)
    {
        if (cx[i] < p.lb[i] - tol || cx[i] > p.ub[i] + tol)
            return out;
        if (state[i] == RowState::Lower && out.y[i] > tol)
            return out;
        if (state[i] == RowState::Upper && out.y[i] < -tol)
            return out;
    }
    const VectorXd stationarity = Hreg * out.x + p.g + p.C.transpose() * out.y;
    out.ok = inf_norm(stationarity) <= tol;
    return out;
}

} // namespace

const char *to_string(QpStatus status)
{
    switch (status)
    {
    case QpStatus::Optimal:
        return "Optimal";
    case QpStatus::MaxIters:
        return "MaxIters";
    case QpStatus::PrimalInfeasible:
        return "PrimalInfeasible";
    }
    return "?";
}

void QpProblem::validate() const
{
    const auto d = H.rows();
    require(H.cols() == d, "QP: H must be square");
    require(g.size() == d, "QP: g dimension mismatch");
    require(C.cols() == d || C.rows() == 0, "QP: C column count mismatch");
    require(lb.size() == C.rows() && ub.size() == C.rows(), "QP: bound dimension mismatch");
    require(H.allFinite() && g.allFinite() && C.allFinite(), "QP: data must be finite");
    require((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + H.cwiseAbs().maxCoeff()),
            "QP: H must be symmetric");
    for (Eigen::Index i = 0; i < lb.size(); ++i)
    {
        require(!std::isnan(lb[i]) && !std::isnan(ub[i]), "QP: NaN bound");
        require(lb[i] <= ub[i], "QP: lb must not exceed ub");
    }
}

double QpProblem::objective(const VectorXd &x) const
{
    return 0.5 * x.dot(H * x) + g.dot(x);
}

namespace
{

QpSolution solve_admm(const QpProblem &problem, const QpSettings &settings)
{
    const auto d = problem.H.rows();
    const auto k = problem.C.rows();
    const MatrixXd Hreg = problem.H + settings.regularization * MatrixXd::Identity(d, d);
    const MatrixXd Cfull = k ? problem.C : MatrixXd::Zero(0, d);

    // Ruiz equilibration of the KKT matrix followed by cost scaling.
    MatrixXd P = Hreg;
    MatrixXd A = Cfull;
    VectorXd q = problem.g;
    VectorXd D = VectorXd::Ones(d);
    VectorXd E = VectorXd::Ones(k);
    for (int it = 0; it < settings.scaling_iters; ++it)
    {
        VectorXd dD(d), dE(k);
        for (Eigen::Index j = 0; j < d; ++j)
        {
            double norm = P.col(j).cwiseAbs().maxCoeff();
            if (k)
                norm = std::max(norm, A.col(j).cwiseAbs().maxCoeff());
            dD[j] = scale_factor(norm);
        }
        for (Eigen::Index i = 0; i < k; ++i)
            dE[i] = scale_factor(A.row(i).cwiseAbs().maxCoeff());
        P = dD.asDiagonal() * P * dD.asDiagonal();
        A = dE.asDiagonal() * A * dD.asDiagonal();
        q = dD.asDiagonal() * q;
        D.array() *= dD.array();
        E.array() *= dE.array();
    }
    double cost_scale = 1.0;
    {
        double mean_col = 0.0;
        for (Eigen::Index j = 0; j < d; ++j)
            mean_col += P.col(j).cwiseAbs().maxCoeff();
        mean_col /= std::max<Eigen::Index>(d, 1);
        const double ref = std::max(mean_col, inf_norm(q));
        if (ref > 1e-4)
            cost_scale = 1.0 / std::min(ref, 1e4);
        P *= cost_scale;
        q *= cost_scale;
    }
    const VectorXd l = E.asDiagonal() * problem.lb;
    const VectorXd u = E.asDiagonal() * problem.ub;
    const VectorXd Dinv = D.cwiseInverse();
    const VectorXd Einv = E.cwiseInverse();

    double rho = settings.rho;
    VectorXd rho_vec(k);
    auto set_rho = [&]() {
        for (Eigen::Index i = 0; i < k; ++i)
        {
            if (!std::isfinite(problem.lb[i]) && !std::isfinite(problem.ub[i]))
                rho_vec[i] = 1e-6;
            else if (problem.lb[i] == problem.ub[i])
                rho_vec[i] = 1e3 * rho;
            else
                rho_vec[i] = rho;
        }
    };
    set_rho();
    Eigen::LLT<MatrixXd> llt;
    auto factor = [&]() {
        MatrixXd M = P + settings.sigma * MatrixXd::Identity(d, d);
        if (k)
            M += A.transpose() * rho_vec.asDiagonal() * A;
        llt.compute(M);
        if (llt.info() != Eigen::Success)
            throw NumericalError("QP: KKT factorization failed");
    };
    factor();

    VectorXd x = VectorXd::Zero(d);
    VectorXd z = VectorXd::Zero(k).cwiseMax(l).cwiseMin(u);
    VectorXd y = VectorXd::Zero(k);

    QpSolution sol;
    sol.status = QpStatus::MaxIters;
    bool converged = false;

    auto unscaled = [&](QpSolution &s) {
        s.x = D.asDiagonal() * x;
        s.y = (E.asDiagonal() * y) / cost_scale;
    };
    auto try_polish = [&](QpSolution &s) {
        if (!settings.polish)
            return false;
        const VectorXd zu = Einv.asDiagonal() * z;
        const VectorXd yu = (E.asDiagonal() * y) / cost_scale;
        Polished pol = polish(problem, Hreg, zu, yu, settings.eps_abs);
        if (!pol.ok)
            return false;
        s.x = pol.x;
        s.y = pol.y;
        s.polished = true;
        const VectorXd cx = Cfull * s.x;
        double prim = 0.0;
        for (Eigen::Index i = 0; i < k; ++i)
            prim = std::max({prim, problem.lb[i] - cx[i], cx[i] - problem.ub[i]});
        s.primal_residual = prim;
        s.dual_residual = inf_norm(Hreg * s.x + problem.g + Cfull.transpose() * s.y);
        return true;
    };

    int iter = 0;
    for (iter = 1; iter <= settings.max_iters; ++iter)
    {
        VectorXd rhs = settings.sigma * x - q;
        if (k)
            rhs += A.transpose() * (rho_vec.cwiseProduct(z) - y);
        const VectorXd x_tilde = llt.solve(rhs);
        const VectorXd z_tilde = A * x_tilde;
        const VectorXd x_next = settings.alpha * x_tilde + (1.0 - settings.alpha) * x;
        const VectorXd z_hat = settings.alpha * z_tilde + (1.0 - settings.alpha) * z;
        const VectorXd z_next = (z_hat + y.cwiseQuotient(rho_vec)).cwiseMax(l).cwiseMin(u);
        const VectorXd dy = rho_vec.cwiseProduct(z_hat - z_next);
        x = x_next;
        z = z_next;
        y += dy;
        if (!x.allFinite() || !y.allFinite())
            throw NumericalError("QP: non-finite iterate");

        if (iter % settings.check_every != 0 && iter != settings.max_iters)
            continue;

        const VectorXd Ax = A * x;
        const VectorXd Px = P * x;
        const VectorXd Aty = A.transpose() * y;
        const double prim = k ? inf_norm(Einv.asDiagonal() * (Ax - z)) : 0.0;
        const double dual = inf_norm(Dinv.asDiagonal() * (Px + q + Aty)) / cost_scale;
        const double prim_ref = k ? std::max(inf_norm(Einv.asDiagonal() * Ax), inf_norm(Einv.asDiagonal() * z)) : 0.0;
        const double dual_ref = std::max({inf_norm(Dinv.asDiagonal() * Px), inf_norm(Dinv.asDiagonal() * Aty),
                                          inf_norm(Dinv.asDiagonal() * q)}) / cost_scale;
        sol.primal_residual = prim;
        sol.dual_residual = dual;
        if (prim <= settings.eps_abs + settings.eps_rel * prim_ref &&
            dual <= settings.eps_abs + settings.eps_rel * dual_ref)
        {
            converged = true;
            break;
        }

        // Primal infeasibility certificate from the dual increment.
        if (k)
        {
            const double dy_norm = inf_norm(E.asDiagonal() * dy);
            if (dy_norm > 1e-12)
            {
                const double at_dy = inf_norm(D.asDiagonal() * (A.transpose() * dy));
                double support = 0.0;
                bool bounded = true;
                for (Eigen::Index i = 0; i < k; ++i)
                {
                    if (dy[i] > 0.0)
                    {
                        if (!std::isfinite(u[i])) { bounded = false; break; }
                        support += u[i] * dy[i];
                    }
                    else if (dy[i] < 0.0)
                    {
                        if (!std::isfinite(l[i])) { bounded = false; break; }
                        support += l[i] * dy[i];
                    }
                }
                if (bounded && at_dy <= settings.eps_infeasible * dy_norm &&
                    support < -settings.eps_infeasible * dy_norm)
                {
                    sol.status = QpStatus::PrimalInfeasible;
                    sol.iterations = iter;
                    unscaled(sol);
                    sol.objective = problem.objective(sol.x);
                    return sol;
                }
            }
        }

        // Early polish once the iterate is in the right neighborhood.
        if (iter % 25 == 0 && prim < 1e-3 && dual < 1e-3 && try_polish(sol))
        {
            sol.status = QpStatus::Optimal;
            sol.iterations = iter;
            sol.objective = problem.objective(sol.x);
            return sol;
        }

        // Residual balancing of the penalty parameter.
        if (iter % 50 == 0 && k)
        {
            const double pn = prim / std::max(prim_ref, 1e-12);
            const double dn = dual / std::max(dual_ref, 1e-12);
            const double ratio = std::sqrt(pn / std::max(dn, 1e-12));
            const double candidate = std::clamp(rho * ratio, 1e-6, 1e6);
            if (candidate > 5.0 * rho || candidate < 0.2 * rho)
            {
                rho = candidate;
                set_rho();
                factor();
            }
        }
    }
    sol.iterations = std::min(iter, settings.max_iters);
    if (try_polish(sol))
    {
        sol.status = QpStatus::Optimal;
    }
    else
    {
        unscaled(sol);
        sol.status = converged ? QpStatus::Optimal : QpStatus::MaxIters;
    }
    sol.objective = problem.objective(sol.x);
    return sol;
}


struct Halfspace
{
    VectorXd n;
    double b;
    Eigen::Index row;
    double sign;
    bool equality;
};

// Dual active-set method for strictly convex problems. Every iterate is the
// minimizer over the current active set, so the result is exact up to
// round-off and needs no polishing.
QpSolution solve_dual_active_set(const QpProblem &problem, const QpSettings &settings)
{
    const auto d = problem.H.rows();
    const auto k = problem.C.rows();
    // Round-off can make a large semidefinite cost slightly indefinite; grow
    // the diagonal shift until the factorization succeeds.
    const double diag_max = d ? problem.H.diagonal().cwiseAbs().maxCoeff() : 0.0;
    double shift = settings.regularization;
    MatrixXd Hreg;
    Eigen::LLT<MatrixXd> llt;
    for (int attempt = 0;; ++attempt)
    {
        Hreg = problem.H + shift * MatrixXd::Identity(d, d);
        llt.compute(Hreg);
        if (llt.info() == Eigen::Success)
            break;
        if (attempt == 8)
            throw NumericalError("QP: cost matrix is not positive semidefinite");
        shift = std::max(10.0 * shift, 1e-14 * diag_max);
    }
    // Invariants: J J' = Hreg^{-1} and J' N = [R; 0] for the active normals N.
    MatrixXd J = llt.matrixU().solve(MatrixXd::Identity(d, d));
    MatrixXd R = MatrixXd::Zero(d, d);

    auto rotate_columns = [&](Eigen::Index a, Eigen::Index b, double cc, double ss) {
        for (Eigen::Index i = 0; i < d; ++i)
        {
            const double t1 = J(i, a);
            const double t2 = J(i, b);
            J(i, a) = cc * t1 + ss * t2;
            J(i, b) = -ss * t1 + cc * t2;
        }
    };
    std::vector<Halfspace> cons;
    for (Eigen::Index i = 0; i < k; ++i)
    {
        const VectorXd c = problem.C.row(i).transpose();
        if (problem.lb[i] == problem.ub[i])
            cons.push_back({c, problem.lb[i], i, -1.0, true});
        else
        {
            if (std::isfinite(problem.lb[i]))
                cons.push_back({c, problem.lb[i], i, -1.0, false});
            if (std::isfinite(problem.ub[i]))
                cons.push_back({-c, -problem.ub[i], i, 1.0, false});
        }
    }
    const auto nc = static_cast<Eigen::Index>(cons.size());
    auto slack = [&](Eigen::Index c, const VectorXd &x) { return cons[c].n.dot(x) - cons[c].b; };
    auto tol_of = [&](Eigen::Index c) { return settings.eps_abs * 1e-6 * (1.0 + std::abs(cons[c].b)); };

    VectorXd x = -llt.solve(problem.g);
    std::vector<Eigen::Index> active;
    std::vector<double> mult;
    std::vector<char> is_active(cons.size(), 0);

    QpSolution sol;
    const int cap = std::max(settings.max_iters, 1);
    int iters = 0;
    auto finish = [&](QpStatus status) {
        sol.status = status;
        sol.iterations = iters;
        sol.x = x;
        sol.y = VectorXd::Zero(k);
        for (size_t a = 0; a < active.size(); ++a)
            sol.y[cons[active[a]].row] += cons[active[a]].sign * mult[a];
        double prim = 0.0;
        for (Eigen::Index c = 0; c < nc; ++c)
            prim = std::max(prim, -slack(c, x));
        sol.primal_residual = prim;
        sol.dual_residual = inf_norm(Hreg * x + problem.g + (k ? VectorXd(problem.C.transpose() * sol.y) : VectorXd::Zero(d)));
        sol.objective = problem.objective(x);
        return sol;
    };

    Eigen::Index next_eq = 0;
    while (true)
    {
        // Pick the constraint to add: pending equalities first, then the most violated inequality.
        Eigen::Index p = -1;
        while (next_eq < nc && p < 0)
        {
            if (cons[next_eq].equality)
            {
                p = next_eq;
                if (slack(p, x) > 0.0)
                {
                    cons[p].n = -cons[p].n;
                    cons[p].b = -cons[p].b;
                    cons[p].sign = -cons[p].sign;
                }
            }
            ++next_eq;
        }
        if (p < 0)
        {
            double worst = 0.0;
            for (Eigen::Index c = 0; c < nc; ++c)
            {
                if (is_active[c] || cons[c].equality)
                    continue;
                const double s = slack(c, x);
                if (s < -tol_of(c) && s < worst)
                {
                    worst = s;
                    p = c;
                }
            }
            if (p < 0)
                return finish(QpStatus::Optimal);
        }

        double u_p = 0.0;
        while (true)
        {
            if (++iters > cap)
                return finish(QpStatus::MaxIters);
            const auto q = static_cast<Eigen::Index>(active.size());
            VectorXd dvec = J.transpose() * cons[p].n;
            const VectorXd z = J.rightCols(d - q) * dvec.tail(d - q);
            const VectorXd r = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(dvec.head(q));

            double t1 = std::numeric_limits<double>::infinity();
            Eigen::Index drop = -1;
            for (Eigen::Index a = 0; a < q; ++a)
            {
                if (cons[active[a]].equality || r[a] <= 0.0)
                    continue;
                const double ratio = mult[a] / r[a];
                if (ratio < t1)
                {
                    t1 = ratio;
                    drop = a;
                }
            }
            const double zn = z.dot(cons[p].n);
            const double s_p = slack(p, x);
            const bool free_direction = z.norm() > 1e-12 * std::max(1.0, dvec.norm()) && zn > 0.0;
            double t2 = free_direction ? std::max(0.0, -s_p / zn) : std::numeric_limits<double>::infinity();
            if (cons[p].equality && !free_direction && std::abs(s_p) <= tol_of(p))
                break; // dependent but consistent equality
            const double t = std::min(t1, t2);
            if (!std::isfinite(t))
                return finish(QpStatus::PrimalInfeasible);

            if (free_direction)
                x += t * z;
            for (Eigen::Index a = 0; a < q; ++a)
                mult[a] -= t * r[a];
            u_p += t;
            if (t2 <= t1)
            {
                // Rotate d so that only its first q + 1 entries survive.
                for (Eigen::Index j = d - 1; j > q; --j)
                {
                    const double h = std::hypot(dvec[j - 1], dvec[j]);
                    if (h == 0.0)
                        continue;
                    const double cc = dvec[j - 1] / h;
                    const double ss = dvec[j] / h;
                    dvec[j - 1] = h;
                    dvec[j] = 0.0;
                    rotate_columns(j - 1, j, cc, ss);
                }
                R.col(q).head(q + 1) = dvec.head(q + 1);
                active.push_back(p);
                mult.push_back(u_p);
                is_active[p] = 1;
                break;
            }
            // Drop a blocking constraint and restore R to triangular form.
            for (Eigen::Index c = drop; c + 1 < q; ++c)
                R.col(c).head(q) = R.col(c + 1).head(q);
            R.col(q - 1).setZero();
            for (Eigen::Index j = drop; j + 1 < q; ++j)
            {
                const double h = std::hypot(R(j, j), R(j + 1, j));
                if (h == 0.0)
                    continue;
                const double cc = R(j, j) / h;
                const double ss = R(j + 1, j) / h;
                for (Eigen::Index c = j; c + 1 < q; ++c)
                {
                    const double t1 = R(j, c);
                    const double t2 = R(j + 1, c);
                    R(j, c) = cc * t1 + ss * t2;
                    R(j + 1, c) = -ss * t1 + cc * t2;
                }
                rotate_columns(j, j + 1, cc, ss);
            }
            is_active[active[drop]] = 0;
            active.erase(active.begin() + drop);
            mult.erase(mult.begin() + drop);
        }
        if (!x.allFinite())
            throw NumericalError("QP: non-finite iterate");
    }
}

} // namespace

QpSolution solve_qp(const QpProblem &problem, const QpSettings &settings)
{
    problem.validate();
    if (settings.method == QpMethod::DualActiveSet)
        return solve_dual_active_set(problem, settings);
    return solve_admm(problem, settings);
}

} // namespace sfrl
