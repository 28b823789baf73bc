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

#include "sfrl/mpsf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include "sfrl/errors.hpp"

namespace sfrl
{

namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();
// Keeps inputs beyond the filtering horizon unique without biasing u_0.
constexpr double kTailProximal = 1e-6;
constexpr size_t kMaxCuts = 16;
constexpr int kMaxRejections = 3;
// Terminal multiplier search for linear models.
constexpr double kMinLogMu = -8.0;
constexpr double kMaxLogMu = 10.0;
constexpr double kLogMuStep = 3.0;
constexpr int kMaxMuIters = 40;
constexpr double kLevelRelTol = 1e-5;

struct Cut
{
    Vec normal;
    double rhs;
};

bool all_finite(const std::vector<StateVec> &zs)
{
    for (const auto &z : zs)
        if (!z.allFinite())
            return false;
    return true;
}

} // namespace

void FilterConfig::validate() const
{
    require(H >= 1, "prediction horizon must be positive");
    require(M >= 1 && M <= H, "filtering horizon must satisfy 1 <= M <= H");
    for (int j = 0; j < M; ++j)
        require(weight(j) > 0.0, "correction weights must be positive");
    require(slack_linear >= 0.0 && slack_quadratic >= 0.0, "slack penalties must be nonnegative");
    require(slack_linear > 0.0 || slack_quadratic > 0.0, "at least one slack penalty must be positive");
    require(sqp_max_iters >= 1, "sqp_max_iters must be positive");
    require(sqp_tol > 0.0, "sqp_tol must be positive");
    require(feasible_threshold >= 0.0, "feasible_threshold must be nonnegative");
    require(trust_region > 0.0, "trust_region must be positive");
}

SafetyFilter::SafetyFilter(ModelSpec model, BoxSet x_box, BoxSet u_box, EllipsoidSet terminal,
                           DisturbanceModel dist, FilterConfig cfg)
    : model_(std::move(model)), x_box_(std::move(x_box)), u_box_(std::move(u_box)),
      terminal_(std::move(terminal)), dist_(dist), cfg_(std::move(cfg))
{
    model_.validate();
    x_box_.validate();
    u_box_.validate();
    terminal_.validate();
    cfg_.validate();
    require(x_box_.dim() == model_.n && u_box_.dim() == model_.m, "constraint boxes do not match the model");
    require(terminal_.P.rows() == model_.n && terminal_.K.rows() == model_.m,
            "terminal set does not match the model");
    require(dist_.w_max >= 0.0, "w_max must be nonnegative");

    tube_ = tube_margins(terminal_.rho, dist_.effective_bound(), cfg_.H);
    for (int j = 0; j <= cfg_.H; ++j)
        tight_.push_back(box_tighten(x_box_, tube_.eps[j]));
    terminal_level_ = shrunk_level(terminal_, tube_.eps[cfg_.H]);
    if (terminal_level_ <= 0.0)
        throw EmptySetError("tube radius at the horizon exceeds the terminal set");

    if (model_.kind == ModelKind::Linear)
    {
        const int n = model_.n, m = model_.m, H = cfg_.H;
        sensitivities_ = Mat::Zero(H * n, H * m);
        for (int j = 0; j < H; ++j)
        {
            if (j > 0)
                sensitivities_.block(j * n, 0, n, j * m) =
                    model_.A * sensitivities_.block((j - 1) * n, 0, n, j * m);
            sensitivities_.block(j * n, j * m, n, m) = model_.B;
        }
    }
}

FilterResult SafetyFilter::certify(const StateVec &x, const InputVec &u_proposed,
                                   const PolicyPreview &preview,
                                   const std::vector<InputVec> *warm_start)
{
    require(cfg_.M == 1 || static_cast<bool>(preview), "a policy preview is required when M >= 2");
    const std::vector<InputVec> *init = warm_start;
    if (!init && !warm_.empty())
        init = &warm_;
    FilterResult r = solve(x, u_proposed, preview, cfg_.M, init, &log_mu_hint_);

    warm_.assign(r.planned_inputs.begin() + 1, r.planned_inputs.end());
    warm_.push_back(r.planned_inputs.back());
    return r;
}

bool SafetyFilter::check_feasible(const StateVec &x) const
{
    try
    {
        return solve(x, terminal_.u_eq, {}, 1, nullptr, nullptr).feasible;
    }
    catch (const SqpDiverged &)
    {
        return false;
    }
}

FilterResult SafetyFilter::solve(const StateVec &x, const InputVec &u_proposed,
                                 const PolicyPreview &preview, int M,
                                 const std::vector<InputVec> *init, double *log_mu_hint) const
{
    const auto t0 = std::chrono::steady_clock::now();
    const int n = model_.n;
    const int m = model_.m;
    const int H = cfg_.H;
    require(x.size() == n && x.allFinite(), "filter state must be finite with dimension n");
    require(u_proposed.size() == m && u_proposed.allFinite(), "proposed input must be finite with dimension m");
    if (init)
        require(static_cast<int>(init->size()) == H, "warm start must hold H inputs");

    const double sqrt_level = std::sqrt(terminal_level_);

    auto rollout = [&](const std::vector<InputVec> &us) {
        std::vector<StateVec> zs;
        zs.reserve(us.size() + 1);
        zs.push_back(x);
        try
        {
            for (const auto &u : us)
                zs.push_back(step_nominal(model_, zs.back(), u));
        }
        catch (const NumericalError &e)
        {
            throw SqpDiverged(std::string("nominal prediction diverged: ") + e.what());
        }
        return zs;
    };

    // Radial distance of z_H beyond the shrunk terminal ellipsoid.
    auto terminal_excess = [&](const StateVec &z) { return terminal_excess_of(z); };
    auto violation = [&](const std::vector<StateVec> &zs) { return slack_use(zs); };

    auto targets_along = [&](const std::vector<StateVec> &zs) {
        std::vector<InputVec> t{u_proposed};
        for (int j = 1; j < M; ++j)
            t.push_back(preview(zs[j], j));
        return t;
    };

    auto merit = [&](const std::vector<InputVec> &us, const std::vector<StateVec> &zs,
                     const std::vector<InputVec> &targets) {
        double cost = 0.0;
        for (int j = 0; j < M; ++j)
            cost += cfg_.weight(j) * (targets[j] - us[j]).squaredNorm();
        const SlackUse v = violation(zs);
        return cost + cfg_.slack_linear * v.total + cfg_.slack_quadratic * v.sumsq;
    };

    auto finish = [&](std::vector<InputVec> us, std::vector<StateVec> zs, int iters) {
        return make_result(u_proposed, std::move(us), std::move(zs), iters, t0);
    };

    // Zero-cost candidate: follow the proposals, then the terminal controller.
    // If it needs no slack it is optimal and the QP can be skipped.
    std::vector<InputVec> candidate;
    std::vector<StateVec> cand_traj{x};
    bool proposals_admissible = true;
    for (int j = 0; j < H; ++j)
    {
        InputVec u;
        if (j == 0)
            u = u_proposed;
        else if (j < M)
            u = preview(cand_traj.back(), j);
        else
            u = u_box_.clamp(terminal_.control(cand_traj.back()));
        if (j < M)
        {
            require(u.size() == m && u.allFinite(), "policy preview returned an invalid input");
            proposals_admissible = proposals_admissible && box_contains(u_box_, u);
        }
        candidate.push_back(u);
        try
        {
            cand_traj.push_back(step_nominal(model_, cand_traj.back(), u));
        }
        catch (const NumericalError &)
        {
            proposals_admissible = false;
            break;
        }
    }
    if (proposals_admissible)
    {
        bool clean = terminal_excess(cand_traj[H]) == 0.0;
        for (int j = 1; j <= H && clean; ++j)
            clean = box_contains(tight_[static_cast<size_t>(j)], cand_traj[j]);
        if (clean)
            return finish(std::move(candidate), std::move(cand_traj), 0);
    }

    if (model_.kind == ModelKind::Linear)
        return solve_linear(x, u_proposed, preview, M, candidate, log_mu_hint, t0);

    // SQP from the warm start or the clipped candidate.
    std::vector<InputVec> us;
    if (init)
        for (const auto &u : *init)
        {
            require(u.size() == m && u.allFinite(), "warm start inputs must be finite with dimension m");
            us.push_back(u_box_.clamp(u));
        }
    else
        for (const auto &u : candidate)
            us.push_back(u_box_.clamp(u));

    std::vector<StateVec> zs = rollout(us);
    if (!all_finite(zs))
        throw SqpDiverged("nominal prediction is not finite");
    std::vector<InputVec> targets = targets_along(zs);
    double current = merit(us, zs, targets);

    const bool linear = model_.kind == ModelKind::Linear;
    const int nu = H * m;
    const int ns = H * n;
    const int d = nu + ns + 1;
    const Vec range = u_box_.upper - u_box_.lower;

    Mat G = Mat::Zero(ns, nu);
    auto build_sensitivities = [&]() {
        G.setZero();
        Mat Aj, Bj;
        for (int j = 0; j < H; ++j)
        {
            if (linear)
            {
                Aj = model_.A;
                Bj = model_.B;
            }
            else
            {
                const Linearization lin = linearize(model_, zs[j], us[j]);
                Aj = lin.A;
                Bj = lin.B;
            }
            if (j > 0)
                G.block(j * n, 0, n, j * m) = Aj * G.block((j - 1) * n, 0, n, j * m);
            G.block(j * n, j * m, n, m) = Bj;
        }
    };
    if (linear)
        build_sensitivities();

    const Mat p_factor = Eigen::LLT<Mat>(terminal_.P).matrixL();
    std::vector<Cut> cuts;
    auto add_cut = [&](const StateVec &z) {
        const Vec dz = z - terminal_.x_eq;
        const Vec Pd = terminal_.P * dz;
        const double pnorm = std::sqrt(dz.dot(Pd));
        if (pnorm == 0.0)
            return;
        if (cuts.size() >= kMaxCuts)
            cuts.erase(cuts.begin());
        const double scale = Pd.norm();
        cuts.push_back({Pd / scale, sqrt_level * pnorm / scale});
    };
    bool moved = true;
    int rejections = 0;
    double term_mult = 0.0;
    int iters = 0;
    for (; iters < cfg_.sqp_max_iters;)
    {
        ++iters;
        if (!linear)
            build_sensitivities();

        Vec ubar(nu);
        for (int j = 0; j < H; ++j)
            ubar.segment(j * m, m) = us[j];
        Vec zbar(ns);
        for (int j = 0; j < H; ++j)
            zbar.segment(j * n, n) = zs[j + 1];
        const Vec offset = zbar - G * ubar;

        // Terminal constraint |z_H - x_eq|_P <= sqrt(level), linearized at the
        // current z_H (its supporting hyperplane at the radial boundary point).
        // Earlier hyperplanes remain valid outer approximations and are kept.
        const Vec dz = zs[H] - terminal_.x_eq;
        const Vec Pd = terminal_.P * dz;
        const double pnorm = std::sqrt(dz.dot(Pd));
        Mat curvature;
        if (pnorm > 0.0)
        {
            if (moved)
                add_cut(zs[H]);
            if (term_mult > 0.0)
            {
                // Hessian of the P-norm, L (I - w w') L' / |d|_P with P = L L',
                // kept in factored form so it stays semidefinite in floating point.
                const Vec w = p_factor.transpose() * dz / pnorm;
                const Mat proj = Mat::Identity(n, n) - w * w.transpose();
                curvature = std::sqrt(term_mult / pnorm) * (p_factor * proj);
            }
        }

        const int nc = static_cast<int>(cuts.size());
        const int k = nu + 2 * ns + ns + 1 + nc;
        QpProblem qp;
        qp.H = Mat::Zero(d, d);
        qp.g = Vec::Zero(d);
        qp.C = Mat::Zero(k, d);
        qp.lb = Vec::Constant(k, -kInf);
        qp.ub = Vec::Constant(k, kInf);

        for (int j = 0; j < H; ++j)
        {
            const double w = j < M ? cfg_.weight(j) : kTailProximal;
            const Vec &target = j < M ? targets[j] : us[j];
            for (int i = 0; i < m; ++i)
            {
                qp.H(j * m + i, j * m + i) = 2.0 * w;
                qp.g[j * m + i] = -2.0 * w * target[i];
            }
        }
        const Mat GH = G.bottomRows(n);
        if (curvature.size())
        {
            const Mat F = GH.transpose() * curvature;
            qp.H.topLeftCorner(nu, nu).noalias() += F * F.transpose();
        }
        for (int i = nu; i < d; ++i)
        {
            qp.H(i, i) = 2.0 * cfg_.slack_quadratic;
            qp.g[i] = cfg_.slack_linear;
        }

        int row = 0;
        for (int j = 0; j < H; ++j)
            for (int i = 0; i < m; ++i, ++row)
            {
                qp.C(row, j * m + i) = 1.0;
                double lo = u_box_.lower[i];
                double hi = u_box_.upper[i];
                if (!linear)
                {
                    lo = std::max(lo, us[j][i] - cfg_.trust_region * range[i]);
                    hi = std::min(hi, us[j][i] + cfg_.trust_region * range[i]);
                }
                qp.lb[row] = lo;
                qp.ub[row] = hi;
            }
        for (int j = 0; j < H; ++j)
        {
            const BoxSet &b = tight_[static_cast<size_t>(j + 1)];
            for (int i = 0; i < n; ++i)
            {
                const int r = j * n + i;
                // lower face: z + s >= lo
                qp.C.row(row).head(nu) = G.row(r);
                qp.C(row, nu + r) = 1.0;
                qp.lb[row++] = b.lower[i] - offset[r];
                // upper face: z - s <= hi
                qp.C.row(row).head(nu) = G.row(r);
                qp.C(row, nu + r) = -1.0;
                qp.ub[row++] = b.upper[i] - offset[r];
            }
        }
        for (int i = nu; i < d; ++i, ++row)
        {
            qp.C(row, i) = 1.0;
            qp.lb[row] = 0.0;
        }
        const Vec cH = offset.tail(n) - terminal_.x_eq;
        for (const Cut &cut : cuts)
        {
            qp.C.row(row).head(nu) = cut.normal.transpose() * GH;
            qp.C(row, d - 1) = -1.0;
            qp.ub[row++] = cut.rhs - cut.normal.dot(cH);
        }

        const QpSolution sol = solve_qp(qp, cfg_.qp);
        if (sol.status == QpStatus::PrimalInfeasible || !sol.x.allFinite())
            throw SqpDiverged(std::string("filter subproblem failed: ") + to_string(sol.status));

        if (nc > 0)
        {
            double y_cuts = 0.0;
            for (int c = 0; c < nc; ++c)
                y_cuts += std::max(0.0, sol.y[k - nc + c]);
            term_mult = y_cuts * pnorm / Pd.norm();
        }

        std::vector<InputVec> step(static_cast<size_t>(H));
        for (int j = 0; j < H; ++j)
            step[j] = u_box_.clamp(sol.x.segment(j * m, m)) - us[j];

        // Backtracking on the exact-penalty merit. The box is convex, so every
        // trial point stays admissible.
        bool accepted = false;
        double change = 0.0;
        for (double alpha = 1.0; alpha >= 1.0 / 1024.0; alpha *= 0.5)
        {
            std::vector<InputVec> next(static_cast<size_t>(H));
            for (int j = 0; j < H; ++j)
                next[j] = us[j] + alpha * step[j];
            std::vector<StateVec> next_zs = rollout(next);
            if (!all_finite(next_zs))
                continue;
            std::vector<InputVec> next_targets = targets_along(next_zs);
            const double next_merit = merit(next, next_zs, next_targets);
            if (next_merit < current)
            {
                change = current - next_merit;
                us = std::move(next);
                zs = std::move(next_zs);
                targets = std::move(next_targets);
                current = next_merit;
                accepted = true;
                break;
            }
        }
        moved = accepted;
        rejections = accepted ? 0 : rejections + 1;
        if (!accepted)
        {
            if (rejections >= kMaxRejections)
                break;
            // Cut off the model's predicted terminal state and retry from the same point.
            const Vec predicted = GH * sol.x.head(nu) + offset.tail(n);
            if (terminal_excess(predicted) <= 1e-9)
                break;
            add_cut(predicted);
            continue;
        }
        if (change < cfg_.sqp_tol * (1.0 + current))
            break;
        if (linear && terminal_excess(zs[H]) <= 1e-10)
            break;
    }
    return finish(std::move(us), std::move(zs), iters);
}

double SafetyFilter::terminal_excess_of(const StateVec &z) const
{
    const double lvl = terminal_.level(z);
    if (lvl <= terminal_level_)
        return 0.0;
    return (z - terminal_.x_eq).norm() * (1.0 - std::sqrt(terminal_level_ / lvl));
}

SafetyFilter::SlackUse SafetyFilter::slack_use(const std::vector<StateVec> &zs) const
{
    SlackUse v;
    for (int j = 0; j <= cfg_.H; ++j)
    {
        const BoxSet &b = tight_[static_cast<size_t>(j)];
        for (int i = 0; i < model_.n; ++i)
            v.add(std::max({0.0, zs[j][i] - b.upper[i], b.lower[i] - zs[j][i]}));
    }
    v.add(terminal_excess_of(zs[cfg_.H]));
    return v;
}

FilterResult SafetyFilter::make_result(const InputVec &u_proposed, std::vector<InputVec> us,
                                       std::vector<StateVec> zs, int iters, Clock::time_point t0) const
{
    FilterResult r;
    r.u_cert = us.front();
    r.correction = (u_proposed - r.u_cert).norm();
    r.slack_total = slack_use(zs).total;
    r.feasible = r.slack_total <= cfg_.feasible_threshold;
    r.sqp_iterations = iters;
    r.predicted_traj = std::move(zs);
    r.planned_inputs = std::move(us);
    r.solve_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return r;
}

FilterResult SafetyFilter::solve_linear(const StateVec &x, const InputVec &u_proposed,
                                        const PolicyPreview &preview, int M,
                                        const std::vector<InputVec> &candidate, double *log_mu_hint,
                                        Clock::time_point t0) const
{
    // Linear dynamics make the problem a convex QP plus one ellipsoid
    // constraint. It is solved through its Lagrangian: mu |z_H - x_eq|_P^2 is
    // added to the cost and mu is searched so that z_H lands on the shrunk
    // level, which is nonincreasing in mu. State constraints are tried hard
    // first; the slack formulation is only needed when they cannot be met.
    const int n = model_.n;
    const int m = model_.m;
    const int H = cfg_.H;
    const int nu = H * m;
    const int ns = H * n;
    const Mat &G = sensitivities_;
    const Mat GH = G.bottomRows(n);
    const Mat PG = terminal_.P * GH;
    const Mat hess_term = 2.0 * GH.transpose() * PG;

    std::vector<InputVec> us;
    for (const auto &u : candidate)
        us.push_back(u_box_.clamp(u));
    std::vector<StateVec> zs = rollout_nominal(model_, x, us);

    // Free response: states under zero input.
    Vec offset(ns);
    StateVec z = x;
    for (int j = 0; j < H; ++j)
    {
        z = model_.A * z;
        offset.segment(j * n, n) = z;
    }
    const Vec cH = offset.tail(n) - terminal_.x_eq;
    const Vec g_term = 2.0 * (PG.transpose() * cH);

    auto build = [&](bool soft) {
        const int d = soft ? nu + ns : nu;
        const int k = soft ? nu + 3 * ns : nu + ns;
        QpProblem qp;
        qp.H = Mat::Zero(d, d);
        qp.g = Vec::Zero(d);
        qp.C = Mat::Zero(k, d);
        qp.lb = Vec::Constant(k, -kInf);
        qp.ub = Vec::Constant(k, kInf);
        int row = 0;
        for (int j = 0; j < H; ++j)
            for (int i = 0; i < m; ++i, ++row)
            {
                qp.C(row, j * m + i) = 1.0;
                qp.lb[row] = u_box_.lower[i];
                qp.ub[row] = u_box_.upper[i];
            }
        for (int j = 0; j < H; ++j)
        {
            const BoxSet &b = tight_[static_cast<size_t>(j + 1)];
            for (int i = 0; i < n; ++i)
            {
                const int r = j * n + i;
                if (!soft)
                {
                    qp.C.row(row).head(nu) = G.row(r);
                    qp.lb[row] = b.lower[i] - offset[r];
                    qp.ub[row++] = b.upper[i] - offset[r];
                    continue;
                }
                qp.C.row(row).head(nu) = G.row(r);
                qp.C(row, nu + r) = 1.0;
                qp.lb[row++] = b.lower[i] - offset[r];
                qp.C.row(row).head(nu) = G.row(r);
                qp.C(row, nu + r) = -1.0;
                qp.ub[row++] = b.upper[i] - offset[r];
            }
        }
        if (soft)
            for (int i = nu; i < d; ++i, ++row)
            {
                qp.C(row, i) = 1.0;
                qp.lb[row] = 0.0;
                qp.H(i, i) = 2.0 * cfg_.slack_quadratic;
                qp.g[i] = cfg_.slack_linear;
            }
        return qp;
    };
    bool soft = false;
    QpProblem base = build(false);

    struct Trial
    {
        std::vector<InputVec> us;
        std::vector<StateVec> zs;
        double level = 0.0;
    };
    int solves = 0;
    auto solve_at = [&](double log_mu, const std::vector<InputVec> &targets, const std::vector<InputVec> &anchor) {
        QpProblem qp = base;
        for (int j = 0; j < H; ++j)
        {
            const double w = j < M ? cfg_.weight(j) : kTailProximal;
            const Vec &t = j < M ? targets[j] : anchor[j];
            for (int i = 0; i < m; ++i)
            {
                qp.H(j * m + i, j * m + i) = 2.0 * w;
                qp.g[j * m + i] = -2.0 * w * t[i];
            }
        }
        if (log_mu > kMinLogMu)
        {
            const double mu = std::pow(10.0, log_mu);
            qp.H.topLeftCorner(nu, nu) += mu * hess_term;
            qp.g.head(nu) += mu * g_term;
        }
        QpSolution sol = solve_qp(qp, cfg_.qp);
        ++solves;
        if (sol.status == QpStatus::PrimalInfeasible && !soft)
        {
            soft = true;
            base = build(true);
            return std::optional<Trial>();
        }
        if (sol.status == QpStatus::PrimalInfeasible || !sol.x.allFinite())
            throw SqpDiverged(std::string("filter subproblem failed: ") + to_string(sol.status));
        Trial t;
        for (int j = 0; j < H; ++j)
            t.us.push_back(u_box_.clamp(sol.x.segment(j * m, m)));
        t.zs = rollout_nominal(model_, x, t.us);
        t.level = terminal_.level(t.zs[H]);
        return std::optional<Trial>(std::move(t));
    };
    auto solve_checked = [&](double log_mu, const std::vector<InputVec> &targets,
                             const std::vector<InputVec> &anchor) {
        std::optional<Trial> t = solve_at(log_mu, targets, anchor);
        if (!t)
            t = solve_at(log_mu, targets, anchor);
        return std::move(*t);
    };

    auto targets_along = [&](const std::vector<StateVec> &traj) {
        std::vector<InputVec> t{u_proposed};
        for (int j = 1; j < M; ++j)
            t.push_back(preview(traj[j], j));
        return t;
    };

    const double level = terminal_level_;
    const double goal = std::log(level);
    auto inside = [&](const Trial &t) { return t.level <= level; };
    double hint = log_mu_hint ? std::clamp(*log_mu_hint, kMinLogMu + 1.0, kMaxLogMu) : 0.0;
    const int outer_max = M > 1 ? cfg_.sqp_max_iters : 1;
    for (int outer = 0; outer < outer_max; ++outer)
    {
        const std::vector<InputVec> targets = targets_along(zs);
        Trial best = solve_checked(kMinLogMu, targets, us);
        if (!inside(best))
        {
            // Bracket log10(mu) around the hint, then Illinois false position
            // on log(level). The lower end kMinLogMu stands for mu = 0.
            double lo = kMinLogMu, hi = hint;
            Trial t_lo = best;
            Trial t_hi = solve_checked(hi, targets, us);
            if (inside(t_hi))
            {
                for (double probe = hi - kLogMuStep; probe > kMinLogMu; probe -= kLogMuStep)
                {
                    Trial t = solve_checked(probe, targets, us);
                    if (!inside(t))
                    {
                        lo = probe;
                        t_lo = std::move(t);
                        break;
                    }
                    hi = probe;
                    t_hi = std::move(t);
                }
            }
            else
            {
                while (!inside(t_hi) && hi < kMaxLogMu)
                {
                    lo = hi;
                    t_lo = std::move(t_hi);
                    hi = std::min(kMaxLogMu, hi + kLogMuStep);
                    t_hi = solve_checked(hi, targets, us);
                }
            }
            if (!inside(t_hi))
                best = std::move(t_hi);
            else
            {
                double f_lo = std::log(t_lo.level) - goal;
                double f_hi = std::log(t_hi.level) - goal;
                int side = 0;
                for (int it = 0; it < kMaxMuIters && f_hi < -kLevelRelTol && hi - lo > 1e-10; ++it)
                {
                    double mid = hi - f_hi * (hi - lo) / (f_hi - f_lo);
                    if (!(mid > lo && mid < hi))
                        mid = 0.5 * (lo + hi);
                    Trial t_mid = solve_checked(mid, targets, us);
                    const double f_mid = std::log(t_mid.level) - goal;
                    if (f_mid <= 0.0)
                    {
                        hi = mid;
                        f_hi = f_mid;
                        t_hi = std::move(t_mid);
                        if (side == -1)
                            f_lo *= 0.5;
                        side = -1;
                    }
                    else
                    {
                        lo = mid;
                        f_lo = f_mid;
                        t_lo = std::move(t_mid);
                        if (side == 1)
                            f_hi *= 0.5;
                        side = 1;
                    }
                }
                best = std::move(t_hi);
            }
            hint = hi;
        }
        double change = 0.0;
        for (int j = 0; j < H; ++j)
            change = std::max(change, (best.us[j] - us[j]).cwiseAbs().maxCoeff());
        us = std::move(best.us);
        zs = std::move(best.zs);
        if (change <= 1e-9)
            break;
    }
    if (log_mu_hint)
        *log_mu_hint = hint;
    return make_result(u_proposed, std::move(us), std::move(zs), solves, t0);
}

} // namespace sfrl
