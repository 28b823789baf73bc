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

#include <optional>
#include <string>
#include <vector>

#include "sfrl/dynamics.hpp"
#include "sfrl/metrics.hpp"
#include "sfrl/mpsf.hpp"
#include "sfrl/sets.hpp"

namespace sfrl
{

enum class EnvKind
{
    DoubleIntegrator,
    PlanarQuad,
    LinearDrone
};

EnvKind parse_env_kind(const std::string &name);
std::string to_string(EnvKind kind);

/**
 * Figure-eight tracking task around a model.
 *
 * Policies act in normalized units: an action a maps to the input
 * center(U_c) + a * halfwidth(U_c), clamped to U_c. Observations are
 *
 *   [ (x - x_eq) / halfwidth(X_c),  p_ref(k+1) - p,  sin phi_k,  cos phi_k,  1 - k/K ]
 *
 * with phi_k the reference phase.
 */
struct EnvSpec
{
    EnvKind kind = EnvKind::DoubleIntegrator;
    ModelSpec model;
    DisturbanceModel dist;
    BoxSet x_box;
    BoxSet u_box;
    StateVec x_eq;
    InputVec u_eq;
    /// LQR weights of the terminal controller.
    Mat Q;
    Mat R;
    /// Indices of the tracked position coordinates within the state.
    std::vector<int> pos_idx;
    Vec amplitudes;
    /// Seconds per reference lap.
    double duration = 5.0;
    int episode_len = 50;
    /// Filter settings tuned for this model; H and M are overridden by callers.
    FilterConfig filter;

    ReferenceTrajectory reference() const;
    int obs_dim() const;
    int act_dim() const { return model.m; }
    Vec observe(const ReferenceTrajectory &ref, const StateVec &x, int k) const;
    InputVec action_to_input(const Vec &a) const;
    Vec position(const StateVec &x) const;
    /// Base reward after the step from k to k+1.
    double reward(const ReferenceTrajectory &ref, const StateVec &x_next, int k_next) const;
    void validate() const;
};

/// Optional overrides of a task's defaults.
struct TaskParams
{
    std::optional<double> dt;
    std::optional<double> w_max;
    /// Seconds per lap; the episode covers one lap.
    std::optional<double> duration;
    PlanarQuadParams quad;
    LinearDroneParams drone;
};

/// Default task for each model family.
EnvSpec make_env(EnvKind kind, const TaskParams &params = {});

/// LQR terminal set for the task, checked for robust invariance.
EllipsoidSet env_terminal_set(const EnvSpec &env, const TerminalSynthOptions &opts = {});

SafetyFilter make_filter(const EnvSpec &env, const EllipsoidSet &terminal, int H, int M);

} // namespace sfrl
