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

#include <chrono>
#include <functional>
#include <optional>
#include <vector>

#include "sfrl/dynamics.hpp"
#include "sfrl/qp.hpp"
#include "sfrl/sets.hpp"

namespace sfrl
{

struct FilterConfig
{
    int H = 10;
    int M = 1;
    /// Weight of the j-th correction term; uniform when empty.
    std::function<double(int)> weight_fn;
    double slack_linear = 1e3;
    double slack_quadratic = 1e4;
    int sqp_max_iters = 20;
    double sqp_tol = 1e-8;
    double feasible_threshold = 1e-6;
    /// Step cap per SQP iteration as a fraction of the input range (nonlinear models).
    double trust_region = 0.5;
    QpSettings qp{.method = QpMethod::DualActiveSet};

    double weight(int j) const { return weight_fn ? weight_fn(j) : 1.0; }
    void validate() const;
};

/// Predicted input of the learning controller at a future nominal state.
using PolicyPreview = std::function<InputVec(const StateVec &state, int stage)>;

struct FilterResult
{
    InputVec u_cert;
    double correction = 0.0;
    bool feasible = false;
    double slack_total = 0.0;
    int sqp_iterations = 0;
    std::vector<StateVec> predicted_traj;
    std::vector<InputVec> planned_inputs;
    double solve_ms = 0.0;
};

/**
 * Tube-based predictive safety filter.
 *
 * Each call solves, by SQP over dense QPs,
 *
 *   min   sum_{j<M} w(j) |u_hat_j - u_j|^2 + slack penalties
 *   s.t.  z_0 = x, z_{j+1} = f(z_j, u_j),
 *         z_j in X_c shrunk by eps_j (softened),
 *         u_j in U_c (hard),
 *         z_H in the terminal ellipsoid shrunk by eps_H (softened),
 *
 * and returns u_0. The instance keeps a warm-start buffer, so one filter
 * serves one caller.
 */
class SafetyFilter
{
public:
    SafetyFilter(ModelSpec model, BoxSet x_box, BoxSet u_box, EllipsoidSet terminal,
                 DisturbanceModel dist, FilterConfig cfg);

    FilterResult certify(const StateVec &x, const InputVec &u_proposed,
                         const PolicyPreview &preview = {},
                         const std::vector<InputVec> *warm_start = nullptr);

    /// Whether the filter can certify some input from x without slack.
    bool check_feasible(const StateVec &x) const;

    void reset_warm_start()
    {
        warm_.clear();
        log_mu_hint_ = 0.0;
    }

    const ModelSpec &model() const { return model_; }
    const BoxSet &x_box() const { return x_box_; }
    const BoxSet &u_box() const { return u_box_; }
    const EllipsoidSet &terminal() const { return terminal_; }
    const TubeMargins &tube() const { return tube_; }
    const FilterConfig &config() const { return cfg_; }
    /// Tightened state box for stage j.
    const BoxSet &stage_box(int j) const { return tight_[static_cast<size_t>(j)]; }
    double terminal_level() const { return terminal_level_; }

private:
    using Clock = std::chrono::steady_clock;

    struct SlackUse
    {
        double total = 0.0;
        double sumsq = 0.0;
        void add(double v)
        {
            total += v;
            sumsq += v * v;
        }
    };

    double terminal_excess_of(const StateVec &z) const;
    SlackUse slack_use(const std::vector<StateVec> &zs) const;
    FilterResult make_result(const InputVec &u_proposed, std::vector<InputVec> us, std::vector<StateVec> zs,
                             int iters, Clock::time_point t0) const;
    FilterResult solve_linear(const StateVec &x, const InputVec &u_proposed, const PolicyPreview &preview,
                              int M, const std::vector<InputVec> &candidate, double *log_mu_hint,
                              Clock::time_point t0) const;
    FilterResult solve(const StateVec &x, const InputVec &u_proposed, const PolicyPreview &preview,
                       int M, const std::vector<InputVec> *init, double *log_mu_hint) const;

    ModelSpec model_;
    BoxSet x_box_;
    BoxSet u_box_;
    EllipsoidSet terminal_;
    DisturbanceModel dist_;
    FilterConfig cfg_;
    TubeMargins tube_;
    std::vector<BoxSet> tight_;
    double terminal_level_ = 0.0;
    /// Stacked input-to-state map of the linear prediction.
    Mat sensitivities_;
    std::vector<InputVec> warm_;
    /// Last terminal multiplier (log10) found by certify; seeds the next search.
    double log_mu_hint_ = 0.0;
};

} // namespace sfrl
