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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "sfrl/dynamics.hpp"

namespace sfrl
{

/// Axis-aligned box {v : lower <= v <= upper}.
struct BoxSet
{
    Vec lower;
    Vec upper;

    BoxSet() = default;
    BoxSet(Vec lo, Vec hi);

    Eigen::Index dim() const { return lower.size(); }
    Vec center() const { return 0.5 * (lower + upper); }
    Vec clamp(const Vec &v) const;
    void validate() const;
};

bool box_contains(const BoxSet &b, const Vec &v);

/// Largest face violation max(0, v - upper, lower - v) summed over coordinates.
double box_violation(const BoxSet &b, const Vec &v);

/// Shrinks every face inward by eps; throws EmptySetError if any side collapses.
BoxSet box_tighten(const BoxSet &b, double eps);

/// Scalar-contraction tube radii: eps_0 = 0, eps_{j+1} = rho * eps_j + w_max.
struct TubeMargins
{
    double rho = 0.0;
    double w_max = 0.0;
    Vec eps;
};

TubeMargins tube_margins(double rho, double w_max, int horizon);

/// Sublevel set {x : (x - x_eq)' P (x - x_eq) <= c} with its terminal controller
/// u = u_eq + K (x - x_eq).
struct EllipsoidSet
{
    Mat P;
    double c = 0.0;
    Mat K;
    StateVec x_eq;
    InputVec u_eq;
    /// Spectral radius of the linearized closed loop, clamped to [0, 0.99].
    double rho = 0.0;

    double level(const StateVec &x) const;
    InputVec control(const StateVec &x) const;
    double min_semi_axis() const;
    void validate() const;
};

/// Terminal constraint with the level shrunk by a tube radius:
/// level(x) <= c * max(0, 1 - margin / r_min)^2, inclusive.
bool terminal_contains(const EllipsoidSet &ell, const StateVec &x, double margin);
double shrunk_level(const EllipsoidSet &ell, double margin);

struct DareSolution
{
    Mat P;
    /// Optimal feedback u = K x.
    Mat K;
    int iterations = 0;
};

/// Discrete algebraic Riccati equation by fixed-point iteration.
DareSolution solve_dare(const Mat &A, const Mat &B, const Mat &Q, const Mat &R,
                        double tol = 1e-10, int max_iters = 100000);

double spectral_radius(const Mat &M);

struct RpciReport
{
    int samples = 0;
    int escapes = 0;
    /// Largest post-step level value over all samples.
    double worst_level = 0.0;
    /// c - worst_level; negative when some successor left the set.
    double worst_margin = 0.0;
};

/// Monte-Carlo invariance check under the clipped terminal controller with
/// disturbances drawn on the boundary sphere of radius dist.effective_bound().
RpciReport validate_rpci(const EllipsoidSet &ell, const ModelSpec &model,
                         const DisturbanceModel &dist, const BoxSet &u_box, int n_samples,
                         Rng &rng);

/// Uniform sample from the ellipsoid.
StateVec sample_ellipsoid(const EllipsoidSet &ell, Rng &rng);

struct TerminalSynthOptions
{
    int validation_samples = 10000;
    std::uint64_t seed = 7;
    int bisection_iters = 60;
};

EllipsoidSet synth_terminal(const ModelSpec &model, const Mat &Q, const Mat &R,
                            const BoxSet &x_box, const BoxSet &u_box,
                            const DisturbanceModel &dist, const StateVec &x_eq,
                            const InputVec &u_eq, const TerminalSynthOptions &opts = {});

/// Plain-text block with P, c, K, x_eq, u_eq, rho; values are written as hex floats.
void write_terminal_set(std::ostream &os, const EllipsoidSet &ell);
EllipsoidSet read_terminal_set(std::istream &is);
void save_terminal_set(const std::string &path, const EllipsoidSet &ell);
EllipsoidSet load_terminal_set(const std::string &path);

} // namespace sfrl
