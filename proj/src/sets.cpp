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

#include "sfrl/sets.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sfrl/errors.hpp"

namespace sfrl
{

BoxSet::BoxSet(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi))
{
    validate();
}

void BoxSet::validate() const
{
    require(lower.size() == upper.size(), "box bounds dimension mismatch");
    require(lower.allFinite() && upper.allFinite(), "box bounds must be finite");
    require((lower.array() <= upper.array()).all(), "box lower bound exceeds upper bound");
}

Vec BoxSet::clamp(const Vec &v) const
{
    require(v.size() == dim(), "box clamp dimension mismatch");
    return v.cwiseMax(lower).cwiseMin(upper);
}

bool box_contains(const BoxSet &b, const Vec &v)
{
    require(v.size() == b.dim(), "box_contains dimension mismatch");
    return (v.array() >= b.lower.array()).all() && (v.array() <= b.upper.array()).all();
}

double box_violation(const BoxSet &b, const Vec &v)
{
    require(v.size() == b.dim(), "box_violation dimension mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        total += std::max({0.0, v[i] - b.upper[i], b.lower[i] - v[i]});
    return total;
}

BoxSet box_tighten(const BoxSet &b, double eps)
{
    require(eps >= 0.0 && std::isfinite(eps), "tightening radius must be nonnegative");
    if (eps == 0.0)
        return b;
    const Vec width = b.upper - b.lower;
    if (2.0 * eps >= width.minCoeff())
    {
        std::ostringstream msg;
        msg << "box_tighten: radius " << eps << " collapses a side of width " << width.minCoeff();
        throw EmptySetError(msg.str());
    }
    BoxSet out;
    out.lower = b.lower.array() + eps;
    out.upper = b.upper.array() - eps;
    return out;
}

TubeMargins tube_margins(double rho, double w_max, int horizon)
{
    require(rho >= 0.0 && rho < 1.0, "tube contraction rate must lie in [0, 1)");
    require(w_max >= 0.0, "w_max must be nonnegative");
    require(horizon >= 1, "horizon must be at least 1");
    TubeMargins tube;
    tube.rho = rho;
    tube.w_max = w_max;
    tube.eps = Vec::Zero(horizon + 1);
    for (int j = 0; j < horizon; ++j)
        tube.eps[j + 1] = rho * tube.eps[j] + w_max;
    return tube;
}

double EllipsoidSet::level(const StateVec &x) const
{
    require(x.size() == P.rows(), "ellipsoid dimension mismatch");
    const Vec d = x - x_eq;
    return d.dot(P * d);
}

InputVec EllipsoidSet::control(const StateVec &x) const
{
    return u_eq + K * (x - x_eq);
}

double EllipsoidSet::min_semi_axis() const
{
    Eigen::SelfAdjointEigenSolver<Mat> es(P, Eigen::EigenvaluesOnly);
    return std::sqrt(c / es.eigenvalues().maxCoeff());
}

void EllipsoidSet::validate() const
{
    require(P.rows() == P.cols() && P.rows() > 0, "P must be square");
    require((P - P.transpose()).norm() <= 1e-9 * (1.0 + P.norm()), "P must be symmetric");
    require(c > 0.0 && std::isfinite(c), "ellipsoid level must be positive");
    require(x_eq.size() == P.rows(), "x_eq dimension mismatch");
    require(K.cols() == P.rows() && K.rows() == u_eq.size(), "K shape mismatch");
    Eigen::LLT<Mat> llt(P);
    require(llt.info() == Eigen::Success, "P must be positive definite");
}

double shrunk_level(const EllipsoidSet &ell, double margin)
{
    require(margin >= 0.0, "terminal margin must be nonnegative");
    const double frac = std::max(0.0, 1.0 - margin / ell.min_semi_axis());
    return ell.c * frac * frac;
}

bool terminal_contains(const EllipsoidSet &ell, const StateVec &x, double margin)
{
    const double lvl = shrunk_level(ell, margin);
    return ell.level(x) <= lvl * (1.0 + 1e-12);
}

double spectral_radius(const Mat &M)
{
    Eigen::EigenSolver<Mat> es(M, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

DareSolution solve_dare(const Mat &A, const Mat &B, const Mat &Q, const Mat &R, double tol,
                        int max_iters)
{
    require(A.rows() == A.cols() && B.rows() == A.rows(), "DARE: A/B shape mismatch");
    require(Q.rows() == A.rows() && Q.cols() == A.rows(), "DARE: Q shape mismatch");
    require(R.rows() == B.cols() && R.cols() == B.cols(), "DARE: R shape mismatch");
    DareSolution sol;
    Mat P = Q;
    for (int it = 1; it <= max_iters; ++it)
    {
        const Mat BtP = B.transpose() * P;
        const Mat gain = (R + BtP * B).ldlt().solve(BtP * A);
        Mat next = Q + A.transpose() * P * A - (A.transpose() * P * B) * gain;
        next = 0.5 * (next + next.transpose());
        if (!next.allFinite())
            throw NumericalError("DARE iteration diverged");
        const double change = (next - P).norm();
        P = std::move(next);
        if (change < tol * std::max(1.0, P.norm()))
        {
            sol.iterations = it;
            sol.P = P;
            const Mat BtPn = B.transpose() * P;
            sol.K = -(R + BtPn * B).ldlt().solve(BtPn * A);
            return sol;
        }
    }
    throw NumericalError("DARE fixed-point iteration did not converge");
}

StateVec sample_ellipsoid(const EllipsoidSet &ell, Rng &rng)
{
    const auto n = static_cast<int>(ell.P.rows());
    const Vec y = sample_ball(n, 1.0, rng);
    // x - x_eq = sqrt(c) L^{-T} y with P = L L'.
    Eigen::LLT<Mat> llt(ell.P);
    const Vec d = llt.matrixU().solve(y);
    return ell.x_eq + std::sqrt(ell.c) * d;
}

RpciReport validate_rpci(const EllipsoidSet &ell, const ModelSpec &model,
                         const DisturbanceModel &dist, const BoxSet &u_box, int n_samples,
                         Rng &rng)
{
    require(n_samples >= 1, "validate_rpci needs at least one sample");
    DisturbanceModel worst{dist.effective_bound(), DisturbanceSampler::BoundarySphere};
    Eigen::LLT<Mat> llt(ell.P);
    const double scale = std::sqrt(ell.c);
    RpciReport report;
    report.samples = n_samples;
    report.worst_level = 0.0;
    for (int s = 0; s < n_samples; ++s)
    {
        const Vec y = sample_ball(static_cast<int>(ell.P.rows()), 1.0, rng);
        const StateVec x = ell.x_eq + scale * llt.matrixU().solve(y);
        const InputVec u = u_box.clamp(ell.control(x));
        const StateVec next = step_true(model, worst, x, u, rng).x;
        const double lvl = ell.level(next);
        report.worst_level = std::max(report.worst_level, lvl);
        if (lvl > ell.c * (1.0 + 1e-12))
            ++report.escapes;
    }
    report.worst_margin = ell.c - report.worst_level;
    return report;
}

namespace
{

// Successor escapes for states on the level surface, where the level of a
// convex image is largest for linear dynamics.
int boundary_escapes(const EllipsoidSet &ell, const ModelSpec &model, const DisturbanceModel &dist,
                     const BoxSet &u_box, int n_samples, Rng &rng)
{
    const DisturbanceModel worst{dist.effective_bound(), DisturbanceSampler::BoundarySphere};
    Eigen::LLT<Mat> llt(ell.P);
    const double scale = std::sqrt(ell.c);
    int escapes = 0;
    for (int s = 0; s < n_samples; ++s)
    {
        const Vec y = sample_sphere(static_cast<int>(ell.P.rows()), 1.0, rng);
        const StateVec x = ell.x_eq + scale * llt.matrixU().solve(y);
        const InputVec u = u_box.clamp(ell.control(x));
        if (ell.level(step_true(model, worst, x, u, rng).x) > ell.c * (1.0 + 1e-12))
            ++escapes;
    }
    return escapes;
}

// Support-function checks: the ellipsoid fits inside the state box and the
// linear feedback stays inside the input box over the whole set.
bool fits_boxes(const Mat &Pinv, const Mat &K, double c, const Vec &state_room,
                const Vec &input_room)
{
    for (Eigen::Index i = 0; i < state_room.size(); ++i)
        if (std::sqrt(c * Pinv(i, i)) > state_room[i])
            return false;
    for (Eigen::Index r = 0; r < K.rows(); ++r)
    {
        const double support = std::sqrt(c * K.row(r).dot(Pinv * K.row(r).transpose()));
        if (support > input_room[r])
            return false;
    }
    return true;
}

} // namespace

EllipsoidSet synth_terminal(const ModelSpec &model, const Mat &Q, const Mat &R,
                            const BoxSet &x_box, const BoxSet &u_box,
                            const DisturbanceModel &dist, const StateVec &x_eq,
                            const InputVec &u_eq, const TerminalSynthOptions &opts)
{
    model.validate();
    require(x_box.dim() == model.n && u_box.dim() == model.m, "synth_terminal: box dimensions");
    require(box_contains(x_box, x_eq) && box_contains(u_box, u_eq),
            "synth_terminal: equilibrium outside constraints");
    {
        Eigen::SelfAdjointEigenSolver<Mat> qs(Q, Eigen::EigenvaluesOnly);
        require(qs.eigenvalues().minCoeff() >= -1e-12, "Q must be positive semidefinite");
        Eigen::LLT<Mat> rl(R);
        require(rl.info() == Eigen::Success, "R must be positive definite");
    }
    const Vec drift = step_nominal(model, x_eq, u_eq) - x_eq;
    require(drift.norm() <= 1e-9 * (1.0 + x_eq.norm()), "synth_terminal: (x_eq, u_eq) is not an equilibrium");

    const Linearization lin = linearize(model, x_eq, u_eq);
    DareSolution dare;
    try
    {
        dare = solve_dare(lin.A, lin.B, Q, R);
    }
    catch (const NumericalError &e)
    {
        throw TerminalSynthesisFailed(std::string("Riccati: ") + e.what());
    }

    EllipsoidSet ell;
    ell.P = dare.P;
    ell.K = dare.K;
    ell.x_eq = x_eq;
    ell.u_eq = u_eq;
    const Mat closed = lin.A + lin.B * dare.K;
    ell.rho = std::clamp(spectral_radius(closed), 0.0, 0.99);

    const double w = dist.effective_bound();
    const double eps_inf = w / (1.0 - ell.rho);
    BoxSet tight;
    try
    {
        tight = box_tighten(x_box, eps_inf);
    }
    catch (const EmptySetError &e)
    {
        throw TerminalSynthesisFailed(std::string("tube collapses the state box: ") + e.what());
    }
    const Vec state_room = (tight.upper - x_eq).cwiseMin(x_eq - tight.lower);
    const Vec input_room = (u_box.upper - u_eq).cwiseMin(u_eq - u_box.lower);
    if (state_room.minCoeff() <= 0.0 || input_room.minCoeff() <= 0.0)
        throw TerminalSynthesisFailed("equilibrium lies on the tightened constraint boundary");

    Eigen::LLT<Mat> pllt(ell.P);
    if (pllt.info() != Eigen::Success)
        throw TerminalSynthesisFailed("Riccati solution is not positive definite");
    const Mat Pinv = pllt.solve(Mat::Identity(model.n, model.n));

    // Bracket then bisect the largest level that satisfies the box conditions.
    double lo = 0.0;
    double hi = 1.0;
    while (fits_boxes(Pinv, ell.K, hi, state_room, input_room))
    {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e15)
            throw TerminalSynthesisFailed("unbounded terminal level");
    }
    for (int it = 0; it < opts.bisection_iters; ++it)
    {
        const double mid = 0.5 * (lo + hi);
        (fits_boxes(Pinv, ell.K, mid, state_room, input_room) ? lo : hi) = mid;
    }
    if (lo <= 0.0)
        throw TerminalSynthesisFailed("no positive level fits the constraint boxes");
    const double c_box = lo;

    auto robust = [&](double c) {
        EllipsoidSet trial = ell;
        trial.c = c;
        Rng rng(opts.seed);
        if (boundary_escapes(trial, model, dist, u_box, opts.validation_samples, rng) > 0)
            return false;
        return validate_rpci(trial, model, dist, u_box, opts.validation_samples, rng).escapes == 0;
    };

    if (robust(c_box))
    {
        ell.c = c_box;
        return ell;
    }

    // Shrink geometrically until the sampled certificate holds, then refine.
    double fail = c_box;
    double pass = 0.0;
    for (double c = 0.8 * c_box; c > 1e-8 * c_box; c *= 0.8)
    {
        if (robust(c))
        {
            pass = c;
            break;
        }
        fail = c;
    }
    if (pass <= 0.0)
        throw TerminalSynthesisFailed("no level inside the constraints passes the invariance check");
    for (int it = 0; it < 12; ++it)
    {
        const double mid = 0.5 * (pass + fail);
        (robust(mid) ? pass : fail) = mid;
    }
    ell.c = pass;
    return ell;
}

namespace
{

void write_hex(std::ostream &os, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    os << buf;
}

double read_hex(std::istream &is)
{
    std::string tok;
    if (!(is >> tok))
        throw ContractViolation("terminal set: unexpected end of input");
    char *end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw ContractViolation("terminal set: bad number '" + tok + "'");
    return v;
}

void expect(std::istream &is, const std::string &key)
{
    std::string tok;
    if (!(is >> tok) || tok != key)
        throw ContractViolation("terminal set: expected '" + key + "', got '" + tok + "'");
}

void write_mat(std::ostream &os, const char *key, const Mat &M)
{
    os << key << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i)
    {
        for (Eigen::Index j = 0; j < M.cols(); ++j)
        {
            if (j)
                os << ' ';
            write_hex(os, M(i, j));
        }
        os << '\n';
    }
}

Mat read_mat(std::istream &is, const char *key, Eigen::Index rows, Eigen::Index cols)
{
    expect(is, key);
    Mat M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            M(i, j) = read_hex(is);
    return M;
}

} // namespace

void write_terminal_set(std::ostream &os, const EllipsoidSet &ell)
{
    os << "sfrl-terminal-set 1\n";
    os << "n " << ell.P.rows() << " m " << ell.K.rows() << '\n';
    os << "c ";
    write_hex(os, ell.c);
    os << "\nrho ";
    write_hex(os, ell.rho);
    os << '\n';
    write_mat(os, "x_eq", ell.x_eq.transpose());
    write_mat(os, "u_eq", ell.u_eq.transpose());
    write_mat(os, "P", ell.P);
    write_mat(os, "K", ell.K);
}

EllipsoidSet read_terminal_set(std::istream &is)
{
    expect(is, "sfrl-terminal-set");
    expect(is, "1");
    Eigen::Index n = 0, m = 0;
    expect(is, "n");
    is >> n;
    expect(is, "m");
    is >> m;
    require(n > 0 && m > 0, "terminal set: bad dimensions");
    EllipsoidSet ell;
    expect(is, "c");
    ell.c = read_hex(is);
    expect(is, "rho");
    ell.rho = read_hex(is);
    ell.x_eq = read_mat(is, "x_eq", 1, n).transpose();
    ell.u_eq = read_mat(is, "u_eq", 1, m).transpose();
    ell.P = read_mat(is, "P", n, n);
    ell.K = read_mat(is, "K", m, n);
    ell.validate();
    return ell;
}

void save_terminal_set(const std::string &path, const EllipsoidSet &ell)
{
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot write terminal set to " + path);
    write_terminal_set(os, ell);
}

EllipsoidSet load_terminal_set(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot read terminal set from " + path);
    return read_terminal_set(is);
}

} // namespace sfrl
