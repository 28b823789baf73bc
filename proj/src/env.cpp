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


#include "sfrl/env.hpp"

#include <cmath>
#include <numbers>

#include "sfrl/errors.hpp"

namespace sfrl
{
namespace
{

BoxSet symmetric_box(std::initializer_list<double> half)
{
    Vec h(static_cast<Eigen::Index>(half.size()));
    Eigen::Index i = 0;
    for (double v : half)
        h[i++] = v;
    return BoxSet(-h, h);
}

// Full extent of the figure eight shrunk by 5 %.
constexpr double kBoxShrink = 0.95;

int steps_per_lap(double duration, double dt)
{
    return static_cast<int>(std::lround(duration / dt));
}

EnvSpec double_integrator_task(const TaskParams &p)
{
    EnvSpec e;
    e.kind = EnvKind::DoubleIntegrator;
    // Normalized command: u = 1 is 4 m/s^2.
    const ModelSpec di = double_integrator(p.dt.value_or(0.1));
    e.model = ModelSpec::linear(di.A, 4.0 * di.B, di.dt);
    e.dist = {0.01, DisturbanceSampler::UniformBall};
    e.amplitudes = Vec::Constant(1, 2.0);
    e.x_box = symmetric_box({kBoxShrink * 2.0, 2.0});
    e.u_box = symmetric_box({1.0});
    e.x_eq = Vec::Zero(2);
    e.u_eq = Vec::Zero(1);
    e.Q = Mat::Identity(2, 2);
    e.R = 0.1 * Mat::Identity(1, 1);
    e.pos_idx = {0};
    e.duration = 5.0;
    e.episode_len = steps_per_lap(e.duration, e.model.dt);
    e.filter.H = 20;
    e.filter.slack_linear = 1e5;
    e.filter.slack_quadratic = 1e6;
    return e;
}

EnvSpec planar_quad_task(const TaskParams &p)
{
    EnvSpec e;
    e.kind = EnvKind::PlanarQuad;
    e.model = ModelSpec::planar_quad(p.quad, p.dt.value_or(0.02));
    const double hover = e.model.quad.hover_thrust();
    e.dist = {0.001, DisturbanceSampler::UniformBall};
    e.amplitudes = Eigen::Vector2d(2.0, 0.5);
    e.x_box = symmetric_box({kBoxShrink * 2.0, 3.0, kBoxShrink * 0.5, 3.0, 0.5, 3.0});
    e.u_box = BoxSet(Vec::Constant(2, 0.2 * hover), Vec::Constant(2, 1.8 * hover));
    e.x_eq = Vec::Zero(6);
    e.u_eq = Vec::Constant(2, hover);
    e.Q = Mat::Identity(6, 6);
    e.R = 1000.0 * Mat::Identity(2, 2);
    e.pos_idx = {0, 2};
    e.duration = 5.0;
    e.episode_len = steps_per_lap(e.duration, e.model.dt);
    return e;
}

EnvSpec linear_drone_task(const TaskParams &p)
{
    EnvSpec e;
    e.kind = EnvKind::LinearDrone;
    e.model = linear_drone(p.dt.value_or(0.02), p.drone);
    e.dist = {0.001, DisturbanceSampler::UniformBall};
    e.amplitudes = Eigen::Vector2d(2.0, 0.5);
    e.x_box = symmetric_box({kBoxShrink * 2.0, 3.0, kBoxShrink * 0.5, 3.0, 0.35, 0.35});
    e.u_box = symmetric_box({0.35, 0.35});
    e.x_eq = Vec::Zero(6);
    e.u_eq = Vec::Zero(2);
    // Weights scaled by the box half-widths; identity weights leave only a
    // tiny set that fails the invariance check.
    const Vec hx = 0.5 * (e.x_box.upper - e.x_box.lower);
    const Vec hu = 0.5 * (e.u_box.upper - e.u_box.lower);
    e.Q = hx.cwiseAbs2().cwiseInverse().asDiagonal();
    e.R = hu.cwiseAbs2().cwiseInverse().asDiagonal();
    e.pos_idx = {0, 2};
    e.duration = 5.0;
    e.episode_len = steps_per_lap(e.duration, e.model.dt);
    return e;
}

} // namespace

EnvKind parse_env_kind(const std::string &name)
{
    if (name == "double_integrator")
        return EnvKind::DoubleIntegrator;
    if (name == "planar_quad")
        return EnvKind::PlanarQuad;
    if (name == "linear_drone")
        return EnvKind::LinearDrone;
    throw ContractViolation("unknown environment '" + name + "'");
}

std::string to_string(EnvKind kind)
{
    switch (kind)
    {
    case EnvKind::DoubleIntegrator:
        return "double_integrator";
    case EnvKind::PlanarQuad:
        return "planar_quad";
    case EnvKind::LinearDrone:
        return "linear_drone";
    }
    return "unknown";
}

EnvSpec make_env(EnvKind kind, const TaskParams &params)
{
    if (params.dt)
        require(std::isfinite(*params.dt) && *params.dt > 0.0, "env: dt must be positive");
    EnvSpec e;
    switch (kind)
    {
    case EnvKind::DoubleIntegrator:
        e = double_integrator_task(params);
        break;
    case EnvKind::PlanarQuad:
        e = planar_quad_task(params);
        break;
    case EnvKind::LinearDrone:
        e = linear_drone_task(params);
        break;
    }
    if (params.w_max)
        e.dist.w_max = *params.w_max;
    if (params.duration)
    {
        e.duration = *params.duration;
        e.episode_len = steps_per_lap(e.duration, e.model.dt);
    }
    e.validate();
    return e;
}

void EnvSpec::validate() const
{
    model.validate();
    x_box.validate();
    u_box.validate();
    require(x_box.dim() == model.n && u_box.dim() == model.m, "env: box dimensions do not match the model");
    require(x_eq.size() == model.n && u_eq.size() == model.m, "env: equilibrium dimensions do not match");
    require(!pos_idx.empty() && static_cast<Eigen::Index>(pos_idx.size()) == amplitudes.size(),
            "env: one amplitude per tracked position");
    for (int i : pos_idx)
        require(i >= 0 && i < model.n, "env: position index out of range");
    require(duration > 0.0 && episode_len > 0, "env: duration and episode length must be positive");
    require(dist.w_max >= 0.0, "env: w_max must be nonnegative");
}

ReferenceTrajectory EnvSpec::reference() const
{
    return figure_eight(amplitudes, duration, model.dt, 1);
}

int EnvSpec::obs_dim() const
{
    return model.n + static_cast<int>(pos_idx.size()) + 3;
}

Vec EnvSpec::position(const StateVec &x) const
{
    Vec p(static_cast<Eigen::Index>(pos_idx.size()));
    for (std::size_t i = 0; i < pos_idx.size(); ++i)
        p[static_cast<Eigen::Index>(i)] = x[pos_idx[i]];
    return p;
}

Vec EnvSpec::observe(const ReferenceTrajectory &ref, const StateVec &x, int k) const
{
    require(x.size() == model.n, "env: state dimension mismatch");
    const Vec half = 0.5 * (x_box.upper - x_box.lower);
    const double phase = 2.0 * std::numbers::pi * ref.laps * static_cast<double>(k) / ref.size();
    Vec obs(obs_dim());
    obs << (x - x_eq).cwiseQuotient(half), ref.at(k + 1) - position(x), std::sin(phase), std::cos(phase),
        1.0 - static_cast<double>(k) / episode_len;
    return obs;
}

InputVec EnvSpec::action_to_input(const Vec &a) const
{
    require(a.size() == model.m, "env: action dimension mismatch");
    return u_box.clamp(u_box.center() + a.cwiseProduct(0.5 * (u_box.upper - u_box.lower)));
}

double EnvSpec::reward(const ReferenceTrajectory &ref, const StateVec &x_next, int k_next) const
{
    return base_reward(position(x_next), ref.at(k_next));
}

EllipsoidSet env_terminal_set(const EnvSpec &env, const TerminalSynthOptions &opts)
{
    return synth_terminal(env.model, env.Q, env.R, env.x_box, env.u_box, env.dist, env.x_eq, env.u_eq, opts);
}

SafetyFilter make_filter(const EnvSpec &env, const EllipsoidSet &terminal, int H, int M)
{
    FilterConfig cfg = env.filter;
    cfg.H = H;
    cfg.M = M;
    return SafetyFilter(env.model, env.x_box, env.u_box, terminal, env.dist, cfg);
}

} // namespace sfrl
