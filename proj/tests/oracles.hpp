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

// Independent reference computations used only by the test suites.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sfrl/dynamics.hpp"
#include "sfrl/qp.hpp"

namespace sfrl::oracle
{

struct EnumResult
{
    Eigen::VectorXd x;
    double objective = std::numeric_limits<double>::infinity();
    bool feasible = false;
};

/**
 * Exhaustive active-set enumeration for a strictly convex QP: every subset of
 * at most d rows is tried at each of its bounds, the equality-constrained
 * minimizer is computed from the KKT system, and the best primal-feasible
 * candidate wins.
 */
inline EnumResult enumerate_active_sets(const QpProblem &p, double feas_tol = 1e-9)
{
    const int d = static_cast<int>(p.H.rows());
    const int k = static_cast<int>(p.C.rows());
    EnumResult best;
    std::vector<int> eq_rows, free_rows;
    for (int i = 0; i < k; ++i)
        (p.lb[i] == p.ub[i] ? eq_rows : free_rows).push_back(i);

    // Row choices: -1 inactive, 0 at lower, 1 at upper.
    std::vector<int> choice(free_rows.size(), -1);
    std::vector<int> active_rows;
    std::vector<double> active_rhs;

    auto evaluate = [&]() {
        const int na = static_cast<int>(eq_rows.size() + active_rows.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(d + na, d + na);
        Eigen::VectorXd rhs(d + na);
        kkt.topLeftCorner(d, d) = p.H;
        rhs.head(d) = -p.g;
        int a = 0;
        auto add = [&](int row, double b) {
            kkt.block(d + a, 0, 1, d) = p.C.row(row);
            kkt.block(0, d + a, d, 1) = p.C.row(row).transpose();
            rhs[d + a] = b;
            ++a;
        };
        for (int r : eq_rows)
            add(r, p.lb[r]);
        for (std::size_t t = 0; t < active_rows.size(); ++t)
            add(active_rows[t], active_rhs[t]);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        if (!lu.isInvertible())
            return;
        const Eigen::VectorXd sol = lu.solve(rhs);
        const Eigen::VectorXd x = sol.head(d);
        const Eigen::VectorXd cx = p.C * x;
        for (int i = 0; i < k; ++i)
            if (cx[i] < p.lb[i] - feas_tol || cx[i] > p.ub[i] + feas_tol)
                return;
        const double obj = 0.5 * x.dot(p.H * x) + p.g.dot(x);
        if (obj < best.objective)
        {
            best.objective = obj;
            best.x = x;
            best.feasible = true;
        }
    };

    const int budget = d - static_cast<int>(eq_rows.size());
    auto recurse = [&](auto &&self, std::size_t idx) -> void {
        if (idx == free_rows.size())
        {
            evaluate();
            return;
        }
        self(self, idx + 1);
        if (static_cast<int>(active_rows.size()) >= budget)
            return;
        const int row = free_rows[idx];
        for (int side = 0; side < 2; ++side)
        {
            const double b = side == 0 ? p.lb[row] : p.ub[row];
            if (!std::isfinite(b))
                continue;
            active_rows.push_back(row);
            active_rhs.push_back(b);
            self(self, idx + 1);
            active_rows.pop_back();
            active_rhs.pop_back();
        }
    };
    recurse(recurse, 0);
    return best;
}

/// Random strictly convex QP that is feasible by construction.
inline QpProblem random_qp(std::mt19937_64 &rng, int d, int k)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    QpProblem p;
    Eigen::MatrixXd M(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            M(i, j) = normal(rng);
    p.H = M * M.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
    p.g.resize(d);
    for (int i = 0; i < d; ++i)
        p.g[i] = 3.0 * normal(rng);
    p.C.resize(k, d);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < d; ++j)
            p.C(i, j) = normal(rng);
    Eigen::VectorXd x0(d);
    for (int i = 0; i < d; ++i)
        x0[i] = normal(rng);
    const Eigen::VectorXd c0 = p.C * x0;
    p.lb.resize(k);
    p.ub.resize(k);
    const double inf = std::numeric_limits<double>::infinity();
    int equalities = 0;
    for (int i = 0; i < k; ++i)
    {
        const double kind = unit(rng);
        if (kind < 0.08 && equalities < d - 1)
        {
            p.lb[i] = p.ub[i] = c0[i];
            ++equalities;
        }
        else if (kind < 0.25)
        {
            p.lb[i] = c0[i] - unit(rng);
            p.ub[i] = inf;
        }
        else if (kind < 0.4)
        {
            p.lb[i] = -inf;
            p.ub[i] = c0[i] + unit(rng);
        }
        else
        {
            p.lb[i] = c0[i] - unit(rng);
            p.ub[i] = c0[i] + unit(rng);
        }
    }
    return p;
}

/// RK4 with `substeps` sub-intervals of the planar quadrotor field over one model step.
inline StateVec fine_rk4(const ModelSpec &model, const StateVec &x, const InputVec &u, int substeps)
{
    const double h = model.dt / substeps;
    StateVec s = x;
    for (int i = 0; i < substeps; ++i)
    {
        const Vec k1 = planar_quad_rhs(model.quad, s, u);
        const Vec k2 = planar_quad_rhs(model.quad, s + 0.5 * h * k1, u);
        const Vec k3 = planar_quad_rhs(model.quad, s + 0.5 * h * k2, u);
        const Vec k4 = planar_quad_rhs(model.quad, s + h * k3, u);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return s;
}

/// Central finite-difference Jacobians of step_nominal.
inline Linearization fd_jacobians(const ModelSpec &model, const StateVec &x, const InputVec &u, double h)
{
    Linearization lin{Mat(model.n, model.n), Mat(model.n, model.m)};
    for (int j = 0; j < model.n; ++j)
    {
        StateVec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        lin.A.col(j) = (step_nominal(model, xp, u) - step_nominal(model, xm, u)) / (2.0 * h);
    }
    for (int j = 0; j < model.m; ++j)
    {
        InputVec up = u, um = u;
        up[j] += h;
        um[j] -= h;
        lin.B.col(j) = (step_nominal(model, x, up) - step_nominal(model, x, um)) / (2.0 * h);
    }
    return lin;
}

/// Max elementwise relative error with an absolute floor for tiny entries.
inline double rel_err(const Mat &a, const Mat &b, double floor = 1e-3)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(floor, std::abs(b(i, j))));
    return worst;
}

/// Constraints of a scalar-input horizon problem checked by direct simulation.
struct GridProblem
{
    ModelSpec model;
    Vec x0;
    std::vector<Vec> stage_lo; // index j = 1..H at position j - 1
    std::vector<Vec> stage_hi;
    Mat P;
    Vec x_eq;
    double level = 0.0;
    std::vector<double> grid; // candidate values for u_1 .. u_{H-1}
};

/// Whether some continuation on the grid keeps every stage inside its box and
/// ends in the ellipsoid; depth-first with pruning on stage violations.
inline bool grid_continuation_exists(const GridProblem &g, const Vec &x, int stage, int H)
{
    auto inside = [&](const Vec &z, int j) {
        return (z.array() >= g.stage_lo[j - 1].array()).all() && (z.array() <= g.stage_hi[j - 1].array()).all();
    };
    if (stage == H)
    {
        const Vec d = x - g.x_eq;
        return d.dot(g.P * d) <= g.level;
    }
    for (double u : g.grid)
    {
        const Vec next = g.model.A * x + g.model.B * Vec::Constant(1, u);
        if (inside(next, stage + 1) && grid_continuation_exists(g, next, stage + 1, H))
            return true;
    }
    return false;
}

/// Largest first input in [lo, hi] admitting a grid continuation, by bisection
/// (the admissible first inputs of a convex problem form an interval).
inline double grid_max_first_input(const GridProblem &g, int H, double lo, double hi, int iters = 40)
{
    auto ok = [&](double u0) {
        const Vec z1 = g.model.A * g.x0 + g.model.B * Vec::Constant(1, u0);
        const bool in = (z1.array() >= g.stage_lo[0].array()).all() && (z1.array() <= g.stage_hi[0].array()).all();
        return in && grid_continuation_exists(g, z1, 1, H);
    };
    if (ok(hi))
        return hi;
    if (!ok(lo))
        return std::numeric_limits<double>::quiet_NaN();
    for (int it = 0; it < iters; ++it)
    {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? lo : hi) = mid;
    }
    return lo;
}

/// Scalar-loop forward pass over the flat layout (W column-major, then b).
inline Vec naive_mlp_forward(const std::vector<int> &dims, const Vec &params, const Vec &x)
{
    std::vector<double> a(x.data(), x.data() + x.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    {
        const int in = dims[l], out = dims[l + 1];
        std::vector<double> z(out, 0.0);
        for (int o = 0; o < out; ++o)
        {
            double acc = 0.0;
            for (int i = 0; i < in; ++i)
                acc += params[off + static_cast<std::size_t>(i) * out + o] * a[i];
            z[o] = acc + params[off + static_cast<std::size_t>(in) * out + o];
        }
        off += static_cast<std::size_t>(in) * out + out;
        if (l + 2 < dims.size())
            for (double &v : z)
                v = std::tanh(v);
        a = std::move(z);
    }
    return Eigen::Map<Vec>(a.data(), static_cast<Eigen::Index>(a.size()));
}

/// Central differences of a scalar function of a parameter vector.
template <class F>
Vec fd_gradient(F &&f, Vec theta, double h = 1e-5)
{
    Vec g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i)
    {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double fp = f(theta);
        theta[i] = keep - h;
        const double fm = f(theta);
        theta[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Advantages by direct summation of discounted TD errors up to each episode end.
inline Vec gae_by_summation(const Vec &r, const Vec &v, const std::vector<bool> &done, double gamma,
                            double lambda, double bootstrap)
{
    const Eigen::Index n = r.size();
    auto next_value = [&](Eigen::Index t) { return t + 1 < n ? v[t + 1] : bootstrap; };
    Vec adv = Vec::Zero(n);
    for (Eigen::Index t = 0; t < n; ++t)
    {
        double weight = 1.0;
        for (Eigen::Index l = t; l < n; ++l)
        {
            const bool end = done[static_cast<std::size_t>(l)];
            const double delta = r[l] + (end ? 0.0 : gamma * next_value(l)) - v[l];
            adv[t] += weight * delta;
            if (end)
                break;
            weight *= gamma * lambda;
        }
    }
    return adv;
}

/// 64-bit FNV-1a, written from the published offset basis and prime.
inline std::uint64_t fnv1a64(const std::string &text)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text)
        h = (h ^ c) * 1099511628211ULL;
    return h;
}

} // namespace sfrl::oracle
