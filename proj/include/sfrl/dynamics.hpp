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

#include <random>
#include <vector>

#include <Eigen/Dense>

namespace sfrl
{

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using StateVec = Eigen::VectorXd;
using InputVec = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class ModelKind
{
    Linear,
    PlanarQuad
};

/// Physical constants of the planar quadrotor, SI units.
struct PlanarQuadParams
{
    double mass = 0.027;
    double inertia = 1.4e-5;
    double arm_length = 0.0397;
    double gravity = 9.81;

    /// Per-rotor thrust that holds a level hover.
    double hover_thrust() const { return 0.5 * mass * gravity; }
};

/**
 * Nominal discrete-time model x+ = f(x, u).
 *
 * Linear models store the discrete A, B directly. The planar quadrotor has
 * state [x, vx, z, vz, theta, omega] and input [T1, T2]; it is integrated
 * with one RK4 step of length dt.
 */
struct ModelSpec
{
    ModelKind kind = ModelKind::Linear;
    int n = 0;
    int m = 0;
    double dt = 0.02;
    Mat A;
    Mat B;
    PlanarQuadParams quad;

    static ModelSpec linear(Mat A, Mat B, double dt);
    static ModelSpec planar_quad(const PlanarQuadParams &params, double dt);

    void validate() const;
};

/// Discretizes x' = Ac x + Bc u (zero-order hold input) with one RK4 step.
ModelSpec discretize_rk4(const Mat &Ac, const Mat &Bc, double dt);

/// 1D double integrator, state [p, v], input acceleration.
ModelSpec double_integrator(double dt);

/// First-order attitude response time constant and gravity of the linear drone.
struct LinearDroneParams
{
    double attitude_tau = 0.12;
    double gravity = 9.81;
};

/// Closed-loop planar drone, state [x, vx, y, vy, roll, pitch], input commanded [roll, pitch].
ModelSpec linear_drone(double dt, const LinearDroneParams &params = {});

enum class DisturbanceSampler
{
    UniformBall,
    BoundarySphere,
    Zero
};

/// Additive state disturbance bounded in the 2-norm by w_max.
struct DisturbanceModel
{
    double w_max = 0.0;
    DisturbanceSampler sampler = DisturbanceSampler::Zero;

    /// Radius actually realized by sample(); zero for the Zero sampler.
    double effective_bound() const;
    Vec sample(int n, Rng &rng) const;
};

/// Uniform sample from the n-ball of the given radius.
Vec sample_ball(int n, double radius, Rng &rng);
/// Uniform sample from the n-sphere of the given radius.
Vec sample_sphere(int n, double radius, Rng &rng);

StateVec step_nominal(const ModelSpec &model, const StateVec &x, const InputVec &u);

struct TrueStep
{
    StateVec x;
    Vec w;
};

TrueStep step_true(const ModelSpec &model, const DisturbanceModel &dist, const StateVec &x,
                   const InputVec &u, Rng &rng);

/// Returns z_0 = x0, ..., z_H for H = inputs.size().
std::vector<StateVec> rollout_nominal(const ModelSpec &model, const StateVec &x0,
                                      const std::vector<InputVec> &inputs);

struct Linearization
{
    Mat A;
    Mat B;
};

/// Exact Jacobians of step_nominal at (x, u).
Linearization linearize(const ModelSpec &model, const StateVec &x, const InputVec &u);

/// Continuous-time planar quadrotor vector field.
Vec planar_quad_rhs(const PlanarQuadParams &p, const Vec &x, const Vec &u);

/**
 * Largest one-step mismatch between a reference ("true") stepper and the nominal
 * model over random (x, u) drawn from the given boxes.
 */
template <class TrueStepper>
double estimate_w_max(const ModelSpec &model, TrueStepper &&true_step, const Vec &x_lo,
                      const Vec &x_hi, const Vec &u_lo, const Vec &u_hi, int n_samples, Rng &rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int s = 0; s < n_samples; ++s)
    {
        Vec x(model.n), u(model.m);
        for (int i = 0; i < model.n; ++i)
            x[i] = x_lo[i] + (x_hi[i] - x_lo[i]) * unit(rng);
        for (int i = 0; i < model.m; ++i)
            u[i] = u_lo[i] + (u_hi[i] - u_lo[i]) * unit(rng);
        const Vec mismatch = true_step(x, u) - step_nominal(model, x, u);
        worst = std::max(worst, mismatch.norm());
    }
    return worst;
}

} // namespace sfrl
