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
#include <optional>
#include <string>
#include <vector>

#include "sfrl/env.hpp"
#include "sfrl/mpsf.hpp"
#include "sfrl/nn.hpp"

namespace sfrl
{

/// Training modifications: filter actions, penalize corrections, safe reset.
struct Mods
{
    bool fa = false;
    bool pc = false;
    bool sr = false;

    bool needs_filter() const { return fa || pc || sr; }
    /// "std" or a '+'-joined subset such as "fa+pc+sr".
    std::string label() const;
    /// Accepts the label form or a comma-separated list; "" and "std" mean none.
    static Mods parse(const std::string &text);
    bool operator==(const Mods &) const = default;
};

struct TrainConfig
{
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_eps = 0.2;
    double lr = 3e-4;
    int epochs_per_update = 10;
    int minibatch = 64;
    int steps_per_update = 2000;
    long total_steps = 100000;
    double alpha = 0.0;
    double beta = 0.0;
    Mods mods;
    std::uint64_t seed = 0;

    std::vector<int> hidden{64, 64};
    double initial_log_std = -0.5;
    /// Global gradient-norm clip per minibatch; 0 disables.
    double max_grad_norm = 0.5;
    int horizon = 10;
    int m_train = 1;
    int m_eval = 2;
    int reset_max_tries = 1000;

    void validate() const;
};

double shaped_reward(double r, const InputVec &u_uncert, const InputVec &u_cert, double alpha);
double penalized_reward(double r, bool violated, double beta);

struct Transition
{
    StateVec x;
    Vec obs;
    /// Raw policy sample; what the learner is updated with.
    Vec u_buffered;
    InputVec u_uncert;
    InputVec u_applied;
    StateVec x_next;
    /// Disturbance realized in this step.
    Vec w;
    double r_base = 0.0;
    double r_shaped = 0.0;
    double logp = 0.0;
    double value = 0.0;
    bool done = false;
    bool violated = false;
    double correction = 0.0;
    bool filter_failed = false;
    double slack_total = 0.0;
    int sqp_iterations = 0;
    double solve_ms = 0.0;
};

struct EpisodeSummary
{
    double ret = 0.0;
    int steps = 0;
    int violations = 0;
    double correction_sum = 0.0;
    double input_roc = 0.0;
};

struct RolloutBuffer
{
    std::vector<Transition> transitions;
    Vec advantages;
    Vec returns_to_go;
    /// Value of the state after the last transition (0 if it ended an episode).
    double bootstrap_value = 0.0;
    std::vector<EpisodeSummary> episodes;
};

/// Environment, reference and current episode of one training run.
struct EnvRunner
{
    explicit EnvRunner(EnvSpec env);

    EnvSpec env;
    ReferenceTrajectory ref;
    /// Episodes start uniformly in this box (the state box by default).
    BoxSet start_box;
    StateVec x;
    int k = 0;
    bool in_episode = false;
    EpisodeSummary current;
    std::vector<InputVec> episode_inputs;
};

/// Agent: stochastic actor and value critic on observations.
struct Agent
{
    GaussianPolicy policy;
    Mlp value;
};

Agent make_agent(int obs_dim, int act_dim, const TrainConfig &cfg, Rng &rng);

struct TrainRngs
{
    explicit TrainRngs(std::uint64_t seed);
    Rng policy;
    Rng disturbance;
    Rng reset;
    Rng shuffle;
};

/// Uniform samples from start_box until the filter finds a slack-free plan.
StateVec safe_reset(const SafetyFilter &filter, const BoxSet &start_box, Rng &rng, int max_tries);

RolloutBuffer collect_rollout(EnvRunner &runner, const Agent &agent, SafetyFilter *filter,
                              const TrainConfig &cfg, int steps, TrainRngs &rngs);

struct GaeResult
{
    Vec advantages;
    Vec returns_to_go;
};

/// Recursive GAE; values[t] estimates the state before step t and
/// bootstrap_value the state after the last step.
GaeResult gae(const Vec &rewards, const Vec &values, const std::vector<bool> &dones, double gamma,
              double lambda, double bootstrap_value = 0.0);

struct UpdateStats
{
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double kl_approx = 0.0;
    double clip_frac = 0.0;
    bool aborted = false;
};

/// Optimizer state that persists across updates.
struct Learner
{
    Learner(Agent agent, const TrainConfig &cfg);

    Agent agent;
    Adam policy_opt;
    Adam value_opt;
};

/// Gradient of the clipped surrogate (mean over the given samples) w.r.t. the policy parameters.
Vec surrogate_gradient(const GaussianPolicy &pol, const Mat &obs, const Mat &acts, const Vec &logp_old,
                       const Vec &adv, double clip_eps, double *clip_frac = nullptr);

/// Fills buffer.advantages and returns_to_go, then runs the PPO epochs.
UpdateStats ppo_update(RolloutBuffer &buffer, Learner &learner, const TrainConfig &cfg, Rng &shuffle_rng);

struct EvalResult
{
    std::vector<double> returns;
    std::vector<double> input_roc;
    int violations = 0;
    int steps = 0;
    double mean_correction = 0.0;
    int filter_failures = 0;
};

/// Rolls out the deterministic (mean) policy for one episode from each start.
/// With a filter, inputs are certified using the policy as preview.
EvalResult evaluate_policy(const EnvSpec &env, const GaussianPolicy &policy, SafetyFilter *filter,
                           const std::vector<StateVec> &starts, std::uint64_t seed);

struct CurvePoint
{
    long step = 0;
    double eval_return = 0.0;
    int violation_count = 0;
};

/// Filter telemetry of one training step.
struct StepTelemetry
{
    double correction = 0.0;
    double slack_total = 0.0;
    int sqp_iterations = 0;
    double solve_ms = 0.0;
};

struct TrainResult
{
    Agent agent;
    std::vector<EpisodeSummary> episodes;
    std::vector<CurvePoint> curve;
    std::vector<UpdateStats> updates;
    long steps = 0;
    long violating_steps = 0;
    double correction_sum = 0.0;
    int filter_failures = 0;
    double wall_seconds = 0.0;
    /// One entry per step, recorded only when a training filter is used.
    std::vector<StepTelemetry> telemetry;

    double violation_fraction() const;
    double mean_correction() const;
    double ms_per_step() const;
    /// Per-episode CSV; contains no timing, so equal seeds give equal bytes.
    void write_log(std::ostream &os) const;
    /// Per-step filter CSV; solve_ms makes it machine dependent.
    void write_telemetry(std::ostream &os) const;
};

/**
 * Full PPO run. curve_starts are evaluated with the certified policy
 * (M = cfg.m_eval) after every update. When checkpoint_path is set the
 * initial and final policies are written there.
 */
TrainResult run_training(const EnvSpec &env, const EllipsoidSet &terminal, const TrainConfig &cfg,
                         const std::vector<StateVec> &curve_starts,
                         const std::optional<std::string> &checkpoint_path = std::nullopt);

} // namespace sfrl
