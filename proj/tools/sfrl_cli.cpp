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

// Command-line front end: experiment matrices, reference export, terminal sets.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfrl/errors.hpp"
#include "sfrl/harness.hpp"

namespace
{

struct RunOptions
{
    std::string config;
    std::optional<std::string> env;
    std::optional<std::string> mods;
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<long> seeds;
    std::optional<long> steps;
    std::optional<int> horizon;
    std::optional<int> m_train;
    std::optional<int> m_eval;
    std::optional<int> workers;
    std::optional<int> eval_starts;
    std::vector<std::string> sets;
    std::string out = "out";
};

template <class T>
std::string join(const std::vector<T> &v)
{
    std::string s;
    for (const T &x : v)
    {
        if (!s.empty())
            s += ',';
        if constexpr (std::is_floating_point_v<T>)
        {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", x);
            s += buf;
        }
        else
            s += std::to_string(x);
    }
    return s;
}

sfrl::ExperimentSpec build_spec(const RunOptions &o)
{
    sfrl::ExperimentSpec spec = o.config.empty() ? sfrl::ExperimentSpec{} : sfrl::load_experiment(o.config);
    auto set = [&](const std::string &key, const std::string &value) {
        sfrl::apply_override(spec, key + "=" + value);
    };
    if (o.env)
        set("experiment.env", *o.env);
    if (o.mods)
        set("experiment.combos", *o.mods);
    if (!o.alphas.empty())
        set("experiment.alphas", join(o.alphas));
    if (!o.betas.empty())
        set("experiment.betas", join(o.betas));
    if (!o.seeds.empty())
        set("experiment.seeds", join(o.seeds));
    if (o.steps)
        set("train.total_steps", std::to_string(*o.steps));
    if (o.horizon)
        set("filter.horizon", std::to_string(*o.horizon));
    if (o.m_train)
        set("filter.m_train", std::to_string(*o.m_train));
    if (o.m_eval)
        set("filter.m_eval", std::to_string(*o.m_eval));
    if (o.workers)
        set("experiment.workers", std::to_string(*o.workers));
    if (o.eval_starts)
        set("experiment.eval_starts", std::to_string(*o.eval_starts));
    for (const auto &kv : o.sets)
        sfrl::apply_override(spec, kv);
    spec.validate();
    return spec;
}

int cmd_run(const RunOptions &o)
{
    const sfrl::ExperimentSpec spec = build_spec(o);
    const auto runs = sfrl::expand_runs(spec);
    std::cerr << "experiment " << spec.name << " (" << sfrl::spec_hash(spec) << "): " << runs.size() << " runs on "
              << sfrl::to_string(spec.env) << ", writing to " << o.out << '\n';
    const auto records = sfrl::run_matrix(spec);
    sfrl::emit_outputs(records, spec, o.out);

    int failed = 0;
    for (const auto &r : records)
    {
        if (r.ok)
            std::fprintf(stderr, "  %-28s return %8.3f  roc %7.3f  train viol %6.2f%%  %.3f ms/step\n",
                         r.run.id().c_str(), r.return_mean(), r.input_roc(), 100.0 * r.train_violation_fraction,
                         r.ms_per_step);
        else
        {
            ++failed;
            std::fprintf(stderr, "  %-28s FAILED: %s\n", r.run.id().c_str(), r.error.c_str());
        }
    }
    return failed > 0 ? 1 : 0;
}

std::ostream &open_or_stdout(const std::string &path, std::ofstream &file)
{
    if (path.empty() || path == "-")
        return std::cout;
    file.open(path);
    if (!file)
        throw std::runtime_error("cannot open " + path + " for writing");
    return file;
}

int cmd_reference(const std::string &env_name, const std::string &out)
{
    const sfrl::EnvSpec env = sfrl::make_env(sfrl::parse_env_kind(env_name));
    std::ofstream file;
    env.reference().write_csv(open_or_stdout(out, file));
    return 0;
}

int cmd_terminal(const std::string &env_name, const std::string &out)
{
    const sfrl::EnvSpec env = sfrl::make_env(sfrl::parse_env_kind(env_name));
    const sfrl::EllipsoidSet ell = sfrl::env_terminal_set(env);
    std::ofstream file;
    sfrl::write_terminal_set(open_or_stdout(out, file), ell);
    std::cerr << "terminal set for " << env_name << ": level " << ell.c << ", contraction " << ell.rho << '\n';
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Safety-filtered reinforcement learning experiments"};
    app.require_subcommand(1);

    RunOptions ro;
    CLI::App *run = app.add_subcommand("run", "Train and evaluate an experiment matrix");
    run->add_option("--config", ro.config, "INI experiment file")->check(CLI::ExistingFile);
    run->add_option("--env", ro.env, "double_integrator, planar_quad or linear_drone");
    run->add_option("--mods", ro.mods, "Combinations, e.g. \"std;fa,pc,sr\" or \"all\"");
    run->add_option("--alpha", ro.alphas, "Correction penalties for PC combinations")->delimiter(',');
    run->add_option("--beta", ro.betas, "Violation penalties for the other combinations")->delimiter(',');
    run->add_option("--seed", ro.seeds, "Training seeds")->delimiter(',');
    run->add_option("--steps", ro.steps, "Environment steps per run");
    run->add_option("--horizon", ro.horizon, "Filter prediction horizon H");
    run->add_option("--m-train", ro.m_train, "Filtering horizon during training");
    run->add_option("--m-eval", ro.m_eval, "Filtering horizon during evaluation");
    run->add_option("--workers", ro.workers, "Concurrent runs");
    run->add_option("--eval-starts", ro.eval_starts, "Shared evaluation start states");
    run->add_option("--set", ro.sets, "Extra override section.key=value (repeatable)");
    run->add_option("--out", ro.out, "Output directory")->capture_default_str();

    std::string env_name = "double_integrator", out;
    CLI::App *ref = app.add_subcommand("reference", "Write the figure-eight reference as CSV");
    ref->add_option("--env", env_name)->capture_default_str();
    ref->add_option("--out", out, "File (default stdout)");
    CLI::App *term = app.add_subcommand("terminal", "Synthesize and write the terminal set");
    term->add_option("--env", env_name)->capture_default_str();
    term->add_option("--out", out, "File (default stdout)");

    CLI11_PARSE(app, argc, argv);
    try
    {
        if (*run)
            return cmd_run(ro);
        if (*ref)
            return cmd_reference(env_name, out);
        return cmd_terminal(env_name, out);
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
