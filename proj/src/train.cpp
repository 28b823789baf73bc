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


#include "sfrl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sfrl/errors.hpp"
#include "sfrl/metrics.hpp"

namespace sfrl
{
namespace
{

constexpr std::uint64_t kEvalSeed = 0x5eed5eedULL;

Rng derived_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

StateVec sample_box(const BoxSet &box, Rng &rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    StateVec x(box.dim());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x[i] = box.lower[i] + unit(rng) * (box.upper[i] - box.lower[i]);
    return x;
}

void clip_norm(Vec &g, double max_norm)
{
    if (max_norm <= 0.0)
        return;
    const double n = g.norm();
    if (n > max_norm)
        g *= max_norm / n;
}

void write_checkpoint(const std::string &path, const Agent &agent)
{
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open checkpoint '" + path + "'");
    write_policy(os, agent.policy);
    write_mlp(os, agent.value);
    if (!os)
        throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

PolicyPreview make_preview(const EnvSpec &env, const ReferenceTrajectory &ref, const GaussianPolicy &policy,
                           int k)
{
    return [&env, &ref, &policy, k](const StateVec &z, int j) {
        return env.action_to_input(policy.mean(env.observe(ref, z, k + j)));
    };
}

} // namespace

std::string Mods::label() const
{
    if (!needs_filter())
        return "std";
    std::string out;
    for (auto [on, name] : {std::pair{fa, "fa"}, std::pair{pc, "pc"}, std::pair{sr, "sr"}})
        if (on)
            out += (out.empty() ? "" : "+") + std::string(name);
    return out;
}

Mods Mods::parse(const std::string &text)
{
    Mods m;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ','))
    {
        std::istringstream parts(token);
        std::string part;
        while (std::getline(parts, part, '+'))
        {
            part.erase(0, part.find_first_not_of(" \t"));
            part.erase(part.find_last_not_of(" \t") + 1);
            if (part == "fa")
                m.fa = true;
            else if (part == "pc")
                m.pc = true;
            else if (part == "sr")
                m.sr = true;
            else if (!part.empty() && part != "std" && part != "none")
                throw ContractViolation("unknown modification '" + part + "'");
        }
    }
    return m;
}

void TrainConfig::validate() const
{
    require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda must be in [0, 1]");
    require(clip_eps > 0.0, "clip_eps must be positive");
    require(lr > 0.0, "lr must be positive");
    require(epochs_per_update >= 1 && minibatch >= 1 && steps_per_update >= 1, "PPO batch sizes must be positive");
    require(total_steps >= 0, "total_steps must be nonnegative");
    require(alpha >= 0.0 && beta >= 0.0, "alpha and beta must be nonnegative");
    require(!hidden.empty(), "at least one hidden layer");
    require(horizon >= 1 && m_train >= 1 && m_eval >= 1 && m_train <= horizon && m_eval <= horizon,
            "need 1 <= M <= H");
    require(reset_max_tries >= 1, "reset_max_tries must be positive");
    require(max_grad_norm >= 0.0, "max_grad_norm must be nonnegative");
}

double shaped_reward(double r, const InputVec &u_uncert, const InputVec &u_cert, double alpha)
{
    require(alpha >= 0.0, "alpha must be nonnegative");
    require(u_uncert.size() == u_cert.size(), "shaped_reward: input dimension mismatch");
    return r - alpha * (u_uncert - u_cert).squaredNorm();
}

double penalized_reward(double r, bool violated, double beta)
{
    require(beta >= 0.0, "beta must be nonnegative");
    return violated ? r - beta : r;
}

EnvRunner::EnvRunner(EnvSpec e) : env(std::move(e)), ref(env.reference()), start_box(env.x_box) {}

Agent make_agent(int obs_dim, int act_dim, const TrainConfig &cfg, Rng &rng)
{
    std::vector<int> pdims{obs_dim};
    pdims.insert(pdims.end(), cfg.hidden.begin(), cfg.hidden.end());
    std::vector<int> vdims = pdims;
    pdims.push_back(act_dim);
    vdims.push_back(1);
    Mlp pnet(pdims);
    pnet.init(rng, 1.0, 0.01);
    Mlp vnet(vdims);
    vnet.init(rng, 1.0, 1.0);
    return Agent{GaussianPolicy(std::move(pnet), cfg.initial_log_std), std::move(vnet)};
}

TrainRngs::TrainRngs(std::uint64_t seed)
    : policy(derived_rng(seed, 1)), disturbance(derived_rng(seed, 2)), reset(derived_rng(seed, 3)),
      shuffle(derived_rng(seed, 4))
{
}

StateVec safe_reset(const SafetyFilter &filter, const BoxSet &start_box, Rng &rng, int max_tries)
{
    require(max_tries >= 1, "safe_reset: max_tries must be positive");
    require(start_box.dim() == filter.model().n, "safe_reset: start box dimension mismatch");
    for (int t = 0; t < max_tries; ++t)
    {
        const StateVec x = sample_box(start_box, rng);
        if (filter.check_feasible(x))
            return x;
    }
    throw ResetExhausted("no feasible start state in " + std::to_string(max_tries) + " samples");
}

RolloutBuffer collect_rollout(EnvRunner &runner, const Agent &agent, SafetyFilter *filter,
                              const TrainConfig &cfg, int steps, TrainRngs &rngs)
{
    const Mods &mods = cfg.mods;
    require(!mods.needs_filter() || filter != nullptr, "collect_rollout: modifications require a filter");
    require(steps >= 0, "collect_rollout: negative step count");
    const EnvSpec &env = runner.env;

    RolloutBuffer buf;
    buf.transitions.reserve(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t)
    {
        if (!runner.in_episode)
        {
            runner.x = mods.sr ? safe_reset(*filter, runner.start_box, rngs.reset, cfg.reset_max_tries)
                               : sample_box(runner.start_box, rngs.reset);
            runner.k = 0;
            runner.in_episode = true;
            runner.current = {};
            runner.episode_inputs.clear();
            if (filter)
                filter->reset_warm_start();
        }

        Transition tr;
        tr.x = runner.x;
        tr.obs = env.observe(runner.ref, runner.x, runner.k);
        const PolicySample s = policy_sample(agent.policy, tr.obs, rngs.policy);
        tr.u_buffered = s.u;
        tr.logp = s.logp;
        tr.value = agent.value.forward(tr.obs)[0];
        tr.u_uncert = env.action_to_input(s.u);

        InputVec u_cert = tr.u_uncert;
        if (filter && (mods.fa || mods.pc))
        {
            try
            {
                const FilterResult fr = filter->certify(runner.x, tr.u_uncert);
                u_cert = fr.u_cert;
                tr.slack_total = fr.slack_total;
                tr.sqp_iterations = fr.sqp_iterations;
                tr.solve_ms = fr.solve_ms;
            }
            catch (const NumericalError &)
            {
                tr.filter_failed = true;
                filter->reset_warm_start();
            }
        }
        tr.correction = (tr.u_uncert - u_cert).norm();
        tr.u_applied = mods.fa ? u_cert : tr.u_uncert;

        TrueStep next = step_true(env.model, env.dist, runner.x, tr.u_applied, rngs.disturbance);
        tr.x_next = std::move(next.x);
        tr.w = std::move(next.w);
        tr.violated = violates(env.x_box, tr.x_next);
        tr.r_base = env.reward(runner.ref, tr.x_next, runner.k + 1);
        tr.r_shaped = mods.pc ? shaped_reward(tr.r_base, tr.u_uncert, u_cert, cfg.alpha)
                              : penalized_reward(tr.r_base, tr.violated, cfg.beta);
        tr.done = runner.k + 1 >= env.episode_len;

        EpisodeSummary &ep = runner.current;
        ep.ret += tr.r_base;
        ep.steps += 1;
        ep.violations += tr.violated;
        ep.correction_sum += tr.correction;
        runner.episode_inputs.push_back(tr.u_applied);

        runner.x = tr.x_next;
        runner.k += 1;
        if (tr.done)
        {
            ep.input_roc = input_roc(runner.episode_inputs, env.model.dt);
            buf.episodes.push_back(ep);
            runner.in_episode = false;
        }
        buf.transitions.push_back(std::move(tr));
    }
    buf.bootstrap_value = 0.0;
    if (!buf.transitions.empty() && !buf.transitions.back().done)
        buf.bootstrap_value = agent.value.forward(env.observe(runner.ref, runner.x, runner.k))[0];
    return buf;
}

GaeResult gae(const Vec &rewards, const Vec &values, const std::vector<bool> &dones, double gamma,
              double lambda, double bootstrap_value)
{
    const Eigen::Index n = rewards.size();
    require(values.size() == n && static_cast<Eigen::Index>(dones.size()) == n, "gae: length mismatch");
    GaeResult out{Vec::Zero(n), Vec::Zero(n)};
    double next_value = bootstrap_value;
    double running = 0.0;
    for (Eigen::Index t = n - 1; t >= 0; --t)
    {
        const double live = dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
        const double delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        out.advantages[t] = running;
        next_value = values[t];
    }
    out.returns_to_go = out.advantages + values;
    return out;
}

Learner::Learner(Agent a, const TrainConfig &cfg)
    : agent(std::move(a)), policy_opt(agent.policy.param_count(), cfg.lr),
      value_opt(agent.value.params.size(), cfg.lr)
{
}

Vec surrogate_gradient(const GaussianPolicy &pol, const Mat &obs, const Mat &acts, const Vec &logp_old,
                       const Vec &adv, double clip_eps, double *clip_frac)
{
    const Eigen::Index n = obs.cols();
    require(n > 0 && logp_old.size() == n && adv.size() == n, "surrogate_gradient: size mismatch");
    const Vec logp = policy_log_prob_batch(pol, obs, acts);
    Vec coeff(n);
    int clipped = 0;
    for (Eigen::Index k = 0; k < n; ++k)
    {
        const double ratio = std::exp(logp[k] - logp_old[k]);
        // The min() picks the constant clipped branch outside [1-eps, 1+eps] on the improving side.
        const bool flat = (adv[k] > 0.0 && ratio > 1.0 + clip_eps) || (adv[k] < 0.0 && ratio < 1.0 - clip_eps);
        coeff[k] = flat ? 0.0 : adv[k] * ratio / static_cast<double>(n);
        clipped += std::abs(ratio - 1.0) > clip_eps;
    }
    if (clip_frac)
        *clip_frac = static_cast<double>(clipped) / static_cast<double>(n);
    return policy_log_prob_grad(pol, obs, acts, coeff);
}

UpdateStats ppo_update(RolloutBuffer &buffer, Learner &learner, const TrainConfig &cfg, Rng &shuffle_rng)
{
    const auto &trs = buffer.transitions;
    const Eigen::Index n = static_cast<Eigen::Index>(trs.size());
    require(n > 0, "ppo_update: empty buffer");
    GaussianPolicy &pol = learner.agent.policy;
    Mlp &vnet = learner.agent.value;

    Vec rewards(n), values(n), logp_old(n);
    std::vector<bool> dones(static_cast<std::size_t>(n));
    Mat obs(pol.input_dim(), n), acts(pol.action_dim(), n);
    for (Eigen::Index k = 0; k < n; ++k)
    {
        const Transition &t = trs[static_cast<std::size_t>(k)];
        rewards[k] = t.r_shaped;
        values[k] = t.value;
        logp_old[k] = t.logp;
        dones[static_cast<std::size_t>(k)] = t.done;
        obs.col(k) = t.obs;
        acts.col(k) = t.u_buffered;
    }
    const GaeResult g = gae(rewards, values, dones, cfg.gamma, cfg.gae_lambda, buffer.bootstrap_value);
    buffer.advantages = g.advantages;
    buffer.returns_to_go = g.returns_to_go;

    Vec adv = g.advantages.array() - g.advantages.mean();
    const double sd = std::sqrt(adv.squaredNorm() / static_cast<double>(n));
    if (sd > 1e-12)
        adv /= sd;

    const Vec theta_start = pol.flat_params();
    const Vec value_start = vnet.params;
    UpdateStats stats;
    int batches = 0;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch)
    {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (Eigen::Index start = 0; start < n; start += cfg.minibatch)
        {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.minibatch, n - start);
            Mat mo(obs.rows(), b), ma(acts.rows(), b);
            Vec mlp_old(b), madv(b), mret(b);
            for (Eigen::Index i = 0; i < b; ++i)
            {
                const Eigen::Index k = order[static_cast<std::size_t>(start + i)];
                mo.col(i) = obs.col(k);
                ma.col(i) = acts.col(k);
                mlp_old[i] = logp_old[k];
                madv[i] = adv[k];
                mret[i] = g.returns_to_go[k];
            }

            const Vec logp = policy_log_prob_batch(pol, mo, ma);
            const Vec ratio = (logp - mlp_old).array().exp();
            const Vec clipped = ratio.cwiseMax(1.0 - cfg.clip_eps).cwiseMin(1.0 + cfg.clip_eps);
            const double ploss = -(ratio.cwiseProduct(madv)).cwiseMin(clipped.cwiseProduct(madv)).mean();
            double cfrac = 0.0;
            Vec pgrad = surrogate_gradient(pol, mo, ma, mlp_old, madv, cfg.clip_eps, &cfrac);

            const Vec v = vnet.forward_batch(mo).row(0).transpose();
            const Vec diff = v - mret;
            const double vloss = diff.squaredNorm() / static_cast<double>(b);
            Vec vgrad = vnet.grad_batch(mo, (2.0 / static_cast<double>(b)) * diff.transpose());

            if (!std::isfinite(ploss) || !std::isfinite(vloss) || !pgrad.allFinite() || !vgrad.allFinite())
            {
                pol.set_flat_params(theta_start);
                vnet.params = value_start;
                stats.aborted = true;
                return stats;
            }

            Vec ascent = -pgrad;
            clip_norm(ascent, cfg.max_grad_norm);
            clip_norm(vgrad, cfg.max_grad_norm);
            Vec theta = pol.flat_params();
            learner.policy_opt.step(theta, ascent);
            pol.set_flat_params(theta);
            learner.value_opt.step(vnet.params, vgrad);

            stats.policy_loss += ploss;
            stats.value_loss += vloss;
            stats.kl_approx += (mlp_old - logp).mean();
            stats.clip_frac += cfrac;
            ++batches;
        }
    }
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.kl_approx /= batches;
    stats.clip_frac /= batches;
    return stats;
}

EvalResult evaluate_policy(const EnvSpec &env, const GaussianPolicy &policy, SafetyFilter *filter,
                           const std::vector<StateVec> &starts, std::uint64_t seed)
{
    const ReferenceTrajectory ref = env.reference();
    EvalResult out;
    double correction_sum = 0.0;
    for (std::size_t i = 0; i < starts.size(); ++i)
    {
        Rng rng = derived_rng(seed, i);
        StateVec x = starts[i];
        if (filter)
            filter->reset_warm_start();
        std::vector<InputVec> inputs;
        double ret = 0.0;
        for (int k = 0; k < env.episode_len; ++k)
        {
            const InputVec u = env.action_to_input(policy.mean(env.observe(ref, x, k)));
            InputVec u_app = u;
            if (filter)
            {
                try
                {
                    const PolicyPreview preview =
                        filter->config().M >= 2 ? make_preview(env, ref, policy, k) : PolicyPreview{};
                    u_app = filter->certify(x, u, preview).u_cert;
                }
                catch (const NumericalError &)
                {
                    ++out.filter_failures;
                    filter->reset_warm_start();
                }
                correction_sum += (u - u_app).norm();
            }
            x = step_true(env.model, env.dist, x, u_app, rng).x;
            ret += env.reward(ref, x, k + 1);
            out.violations += violates(env.x_box, x);
            ++out.steps;
            inputs.push_back(u_app);
        }
        out.returns.push_back(ret);
        out.input_roc.push_back(input_roc(inputs, env.model.dt));
    }
    out.mean_correction = out.steps > 0 ? correction_sum / out.steps : 0.0;
    return out;
}

double TrainResult::violation_fraction() const
{
    return steps > 0 ? static_cast<double>(violating_steps) / static_cast<double>(steps) : 0.0;
}

double TrainResult::mean_correction() const
{
    return steps > 0 ? correction_sum / static_cast<double>(steps) : 0.0;
}

double TrainResult::ms_per_step() const
{
    return steps > 0 ? 1e3 * wall_seconds / static_cast<double>(steps) : 0.0;
}

void TrainResult::write_log(std::ostream &os) const
{
    os << "episode,steps,return,violations,mean_correction,input_roc\n";
    char buf[160];
    for (std::size_t i = 0; i < episodes.size(); ++i)
    {
        const EpisodeSummary &e = episodes[i];
        std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%d,%.17g,%.17g\n", i, e.steps, e.ret, e.violations,
                      e.steps > 0 ? e.correction_sum / e.steps : 0.0, e.input_roc);
        os << buf;
    }
}

void TrainResult::write_telemetry(std::ostream &os) const
{
    os << "step,correction,slack_total,sqp_iterations,solve_ms\n";
    char buf[160];
    for (std::size_t i = 0; i < telemetry.size(); ++i)
    {
        const StepTelemetry &t = telemetry[i];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d,%.6f\n", i, t.correction, t.slack_total,
                      t.sqp_iterations, t.solve_ms);
        os << buf;
    }
}

TrainResult run_training(const EnvSpec &env, const EllipsoidSet &terminal, const TrainConfig &cfg,
                         const std::vector<StateVec> &curve_starts,
                         const std::optional<std::string> &checkpoint_path)
{
    cfg.validate();
    env.validate();
    const auto t0 = std::chrono::steady_clock::now();

    Rng init_rng = derived_rng(cfg.seed, 0);
    Learner learner(make_agent(env.obs_dim(), env.act_dim(), cfg, init_rng), cfg);
    if (checkpoint_path)
        write_checkpoint(*checkpoint_path + ".init.ckpt", learner.agent);

    std::optional<SafetyFilter> train_filter;
    if (cfg.mods.needs_filter())
        train_filter.emplace(make_filter(env, terminal, cfg.horizon, cfg.m_train));
    std::optional<SafetyFilter> eval_filter;
    if (!curve_starts.empty())
        eval_filter.emplace(make_filter(env, terminal, cfg.horizon, cfg.m_eval));

    TrainRngs rngs(cfg.seed);
    EnvRunner runner(env);
    TrainResult res;
    while (res.steps < cfg.total_steps)
    {
        const int n = static_cast<int>(std::min<long>(cfg.steps_per_update, cfg.total_steps - res.steps));
        RolloutBuffer buf = collect_rollout(runner, learner.agent, train_filter ? &*train_filter : nullptr, cfg, n, rngs);
        for (const Transition &t : buf.transitions)
        {
            res.violating_steps += t.violated;
            res.correction_sum += t.correction;
            res.filter_failures += t.filter_failed;
            if (train_filter)
                res.telemetry.push_back({t.correction, t.slack_total, t.sqp_iterations, t.solve_ms});
        }
        res.steps += n;
        res.episodes.insert(res.episodes.end(), buf.episodes.begin(), buf.episodes.end());
        res.updates.push_back(ppo_update(buf, learner, cfg, rngs.shuffle));
        if (res.updates.back().aborted)
            throw NumericalError("PPO update produced non-finite values at step " + std::to_string(res.steps));

        if (eval_filter)
        {
            const EvalResult ev =
                evaluate_policy(env, learner.agent.policy, &*eval_filter, curve_starts, kEvalSeed);
            const double mean_ret =
                std::accumulate(ev.returns.begin(), ev.returns.end(), 0.0) / static_cast<double>(ev.returns.size());
            res.curve.push_back({res.steps, mean_ret, ev.violations});
        }
    }
    if (checkpoint_path && res.steps > 0)
        write_checkpoint(*checkpoint_path + ".final.ckpt", learner.agent);
    res.agent = std::move(learner.agent);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace sfrl
