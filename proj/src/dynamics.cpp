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

#include "sfrl/dynamics.hpp"

#include <cmath>

#include "sfrl/errors.hpp"

namespace sfrl
{

namespace
{

void check_finite(const Vec &v, const char *what)
{
    if (!v.allFinite())
        throw NumericalError(std::string(what) + ": non-finite result");
}

void check_dims(const ModelSpec &model, const StateVec &x, const InputVec &u)
{
    require(x.size() == model.n, "state dimension mismatch");
    require(u.size() == model.m, "input dimension mismatch");
}

// Jacobians of the continuous planar quadrotor field.
void planar_quad_jacobians(const PlanarQuadParams &p, const Vec &x, const Vec &u, Mat &Fx, Mat &Fu)
{
    const double thrust = u[0] + u[1];
    const double s = std::sin(x[4]);
    const double c = std::cos(x[4]);
    Fx.setZero(6, 6);
    Fu.setZero(6, 2);
    Fx(0, 1) = 1.0;
    Fx(1, 4) = thrust * c / p.mass;
    Fx(2, 3) = 1.0;
    Fx(3, 4) = -thrust * s / p.mass;
    Fx(4, 5) = 1.0;
    Fu(1, 0) = Fu(1, 1) = s / p.mass;
    Fu(3, 0) = Fu(3, 1) = c / p.mass;
    Fu(5, 0) = -p.arm_length / p.inertia;
    Fu(5, 1) = p.arm_length / p.inertia;
}

} // namespace

ModelSpec ModelSpec::linear(Mat A, Mat B, double dt)
{
    ModelSpec spec;
    spec.kind = ModelKind::Linear;
    spec.n = static_cast<int>(A.rows());
    spec.m = static_cast<int>(B.cols());
    spec.dt = dt;
    spec.A = std::move(A);
    spec.B = std::move(B);
    spec.validate();
    return spec;
}

ModelSpec ModelSpec::planar_quad(const PlanarQuadParams &params, double dt)
{
    ModelSpec spec;
    spec.kind = ModelKind::PlanarQuad;
    spec.n = 6;
    spec.m = 2;
    spec.dt = dt;
    spec.quad = params;
    spec.validate();
    return spec;
}

void ModelSpec::validate() const
{
    require(dt > 0.0 && std::isfinite(dt), "model dt must be positive");
    require(n > 0 && m > 0, "model dimensions must be positive");
    if (kind == ModelKind::Linear)
    {
        require(A.rows() == n && A.cols() == n, "A must be n x n");
        require(B.rows() == n && B.cols() == m, "B must be n x m");
        require(A.allFinite() && B.allFinite(), "A, B must be finite");
    }
    else
    {
        require(n == 6 && m == 2, "planar quadrotor is 6-state, 2-input");
        require(quad.mass > 0 && quad.inertia > 0 && quad.arm_length > 0 && quad.gravity > 0,
                "planar quadrotor parameters must be positive");
    }
}

ModelSpec discretize_rk4(const Mat &Ac, const Mat &Bc, double dt)
{
    require(Ac.rows() == Ac.cols() && Bc.rows() == Ac.rows(), "continuous model shape mismatch");
    const Eigen::Index n = Ac.rows();
    const Mat I = Mat::Identity(n, n);
    const Mat hA = dt * Ac;
    const Mat hA2 = hA * hA;
    const Mat hA3 = hA2 * hA;
    const Mat Ad = I + hA + hA2 / 2.0 + hA3 / 6.0 + hA3 * hA / 24.0;
    const Mat Bd = dt * (I + hA / 2.0 + hA2 / 6.0 + hA3 / 24.0) * Bc;
    return ModelSpec::linear(Ad, Bd, dt);
}

ModelSpec double_integrator(double dt)
{
    Mat Ac(2, 2), Bc(2, 1);
    Ac << 0, 1, 0, 0;
    Bc << 0, 1;
    return discretize_rk4(Ac, Bc, dt);
}

ModelSpec linear_drone(double dt, const LinearDroneParams &params)
{
    require(params.attitude_tau > 0 && params.gravity > 0, "linear drone parameters must be positive");
    Mat Ac = Mat::Zero(6, 6);
    Mat Bc = Mat::Zero(6, 2);
    Ac(0, 1) = 1.0;
    Ac(1, 5) = params.gravity;
    Ac(2, 3) = 1.0;
    Ac(3, 4) = -params.gravity;
    Ac(4, 4) = -1.0 / params.attitude_tau;
    Ac(5, 5) = -1.0 / params.attitude_tau;
    Bc(4, 0) = 1.0 / params.attitude_tau;
    Bc(5, 1) = 1.0 / params.attitude_tau;
    return discretize_rk4(Ac, Bc, dt);
}

double DisturbanceModel::effective_bound() const
{
    return sampler == DisturbanceSampler::Zero ? 0.0 : w_max;
}

Vec sample_sphere(int n, double radius, Rng &rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec dir(n);
    double norm = 0.0;
    while (norm < 1e-12)
    {
        for (int i = 0; i < n; ++i)
            dir[i] = normal(rng);
        norm = dir.norm();
    }
    // Rescale so that floating-point rounding can never push the norm above radius.
    Vec w = dir * (radius / norm);
    const double realized = w.norm();
    if (realized > radius)
        w *= radius / realized * (1.0 - 1e-15);
    return w;
}

Vec sample_ball(int n, double radius, Rng &rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double r = radius * std::pow(unit(rng), 1.0 / n);
    return sample_sphere(n, r, rng);
}

Vec DisturbanceModel::sample(int n, Rng &rng) const
{
    require(w_max >= 0.0, "w_max must be nonnegative");
    switch (sampler)
    {
    case DisturbanceSampler::UniformBall:
        return sample_ball(n, w_max, rng);
    case DisturbanceSampler::BoundarySphere:
        return sample_sphere(n, w_max, rng);
    case DisturbanceSampler::Zero:
        break;
    }
    return Vec::Zero(n);
}

Vec planar_quad_rhs(const PlanarQuadParams &p, const Vec &x, const Vec &u)
{
    const double thrust = u[0] + u[1];
    Vec dx(6);
    dx[0] = x[1];
    dx[1] = thrust * std::sin(x[4]) / p.mass;
    dx[2] = x[3];
    // Written as a single difference so that exact hover thrust gives exactly zero.
    dx[3] = (thrust * std::cos(x[4]) - p.mass * p.gravity) / p.mass;
    dx[4] = x[5];
    dx[5] = p.arm_length * (u[1] - u[0]) / p.inertia;
    return dx;
}

StateVec step_nominal(const ModelSpec &model, const StateVec &x, const InputVec &u)
{
    check_dims(model, x, u);
    StateVec next;
    if (model.kind == ModelKind::Linear)
    {
        next = model.A * x + model.B * u;
    }
    else
    {
        const double h = model.dt;
        const Vec k1 = planar_quad_rhs(model.quad, x, u);
        const Vec k2 = planar_quad_rhs(model.quad, x + 0.5 * h * k1, u);
        const Vec k3 = planar_quad_rhs(model.quad, x + 0.5 * h * k2, u);
        const Vec k4 = planar_quad_rhs(model.quad, x + h * k3, u);
        next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    check_finite(next, "step_nominal");
    return next;
}

TrueStep step_true(const ModelSpec &model, const DisturbanceModel &dist, const StateVec &x,
                   const InputVec &u, Rng &rng)
{
    TrueStep out;
    out.w = dist.sample(model.n, rng);
    out.x = step_nominal(model, x, u) + out.w;
    return out;
}

std::vector<StateVec> rollout_nominal(const ModelSpec &model, const StateVec &x0,
                                      const std::vector<InputVec> &inputs)
{
    require(!inputs.empty(), "rollout needs at least one input");
    std::vector<StateVec> traj;
    traj.reserve(inputs.size() + 1);
    traj.push_back(x0);
    for (const auto &u : inputs)
        traj.push_back(step_nominal(model, traj.back(), u));
    return traj;
}

Linearization linearize(const ModelSpec &model, const StateVec &x, const InputVec &u)
{
    check_dims(model, x, u);
    if (model.kind == ModelKind::Linear)
        return {model.A, model.B};

    // Tangent-linear RK4: differentiate each stage through the chain rule.
    const auto &p = model.quad;
    const double h = model.dt;
    const Mat I = Mat::Identity(6, 6);
    Mat Fx, Fu;

    const Vec k1 = planar_quad_rhs(p, x, u);
    planar_quad_jacobians(p, x, u, Fx, Fu);
    const Mat k1x = Fx;
    const Mat k1u = Fu;

    const Vec x2 = x + 0.5 * h * k1;
    const Vec k2 = planar_quad_rhs(p, x2, u);
    planar_quad_jacobians(p, x2, u, Fx, Fu);
    const Mat k2x = Fx * (I + 0.5 * h * k1x);
    const Mat k2u = Fx * (0.5 * h * k1u) + Fu;

    const Vec x3 = x + 0.5 * h * k2;
    const Vec k3 = planar_quad_rhs(p, x3, u);
    planar_quad_jacobians(p, x3, u, Fx, Fu);
    const Mat k3x = Fx * (I + 0.5 * h * k2x);
    const Mat k3u = Fx * (0.5 * h * k2u) + Fu;

    const Vec x4 = x + h * k3;
    planar_quad_jacobians(p, x4, u, Fx, Fu);
    const Mat k4x = Fx * (I + h * k3x);
    const Mat k4u = Fx * (h * k3u) + Fu;

    Linearization lin;
    lin.A = I + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    lin.B = (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    if (!lin.A.allFinite() || !lin.B.allFinite())
        throw NumericalError("linearize: non-finite Jacobian");
    return lin;
}

} // namespace sfrl
