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

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "oracles.hpp"
#include "sfrl/errors.hpp"
#include "sfrl/harness.hpp"

namespace sfrl
{
namespace
{

namespace fs = std::filesystem;

ExperimentSpec tiny_spec()
{
    ExperimentSpec s;
    s.name = "tiny";
    s.env = EnvKind::DoubleIntegrator;
    s.combos = {Mods::parse("fa+sr")};
    s.seeds = {0};
    s.eval_starts = 2;
    s.curve_starts = 1;
    s.train.total_steps = 400;
    s.train.steps_per_update = 200;
    s.train.epochs_per_update = 2;
    return s;
}

std::string slurp(const fs::path &p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path scratch_dir(const std::string &tag)
{
    fs::path p = fs::temp_directory_path() / ("sfrl_harness_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

RunRecord fake_record(const std::string &mods, double penalty, std::uint64_t seed, std::vector<double> returns)
{
    RunRecord r;
    r.run.mods = Mods::parse(mods);
    (r.run.mods.pc ? r.run.alpha : r.run.beta) = penalty;
    r.run.seed = seed;
    r.env = "double_integrator";
    r.spec_hash = "0123456789abcdef";
    r.ok = true;
    r.steps = 1000;
    r.returns = std::move(returns);
    r.input_rocs = {0.1 * seed + 1.0 / 3.0, 2.5};
    r.uncert_returns = {7.0 + seed, 1.0 / 7.0};
    r.train_violation_fraction = 0.0123456789 * (seed + 1);
    r.mean_correction = 0.5;
    r.ms_per_step = 0.25 + seed;
    r.curve = {{200, 1.5, 0}, {400, 2.75, 1}};
    return r;
}

} // namespace

TEST(ParseExperiment, ReadsEverySection)
{
    std::istringstream is(R"(
; comment
[experiment]
name = ablation
env = linear_drone
combos = std; fa+sr; fa,pc,sr
alphas = 0.1, 1, 10
betas = 0, 0.01
seeds = 3 4
eval_starts = 7
curve_starts = 2
workers = 2

[env]
w_max = 0.002
duration = 4

[filter]
horizon = 12
m_eval = 3
slack_linear = 500

[train]
total_steps = 5000
hidden = 32, 16
lr = 1e-3
)");
    const ExperimentSpec s = parse_experiment(is);
    EXPECT_EQ(s.name, "ablation");
    EXPECT_EQ(s.env, EnvKind::LinearDrone);
    ASSERT_EQ(s.combos.size(), 3u);
    EXPECT_EQ(s.combos[0], Mods{});
    EXPECT_EQ(s.combos[1], (Mods{true, false, true}));
    EXPECT_EQ(s.combos[2], (Mods{true, true, true}));
    EXPECT_EQ(s.alphas, (std::vector<double>{0.1, 1.0, 10.0}));
    EXPECT_EQ(s.betas, (std::vector<double>{0.0, 0.01}));
    EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(s.eval_starts, 7);
    EXPECT_EQ(s.curve_starts, 2);
    EXPECT_EQ(s.workers, 2);
    EXPECT_EQ(s.filter_horizon(), 12);
    EXPECT_EQ(s.train.m_eval, 3);
    EXPECT_EQ(s.train.total_steps, 5000);
    EXPECT_EQ(s.train.hidden, (std::vector<int>{32, 16}));
    EXPECT_DOUBLE_EQ(s.train.lr, 1e-3);

    const EnvSpec e = s.make_env();
    EXPECT_DOUBLE_EQ(e.dist.w_max, 0.002);
    EXPECT_EQ(e.episode_len, 200);
    EXPECT_DOUBLE_EQ(e.filter.slack_linear, 500.0);
    EXPECT_NO_THROW(s.validate());
}

TEST(ParseExperiment, DefaultsKeepTaskHorizon)
{
    std::istringstream is("[experiment]\nenv = double_integrator\n");
    const ExperimentSpec s = parse_experiment(is);
    EXPECT_EQ(s.filter_horizon(), make_env(EnvKind::DoubleIntegrator).filter.H);
}

TEST(ParseExperiment, AllExpandsToEightCombos)
{
    std::istringstream is("[experiment]\ncombos = all\n");
    const ExperimentSpec s = parse_experiment(is);
    std::set<std::string> labels;
    for (const Mods &m : s.combos)
        labels.insert(m.label());
    EXPECT_EQ(labels.size(), 8u);
}

TEST(ParseExperiment, RejectsBadInput)
{
    auto parse = [](const std::string &text) {
        std::istringstream is(text);
        return parse_experiment(is);
    };
    EXPECT_THROW(parse("[train]\nlearning_rate = 1\n"), ConfigError);
    EXPECT_THROW(parse("[train]\nlr = fast\n"), ConfigError);
    EXPECT_THROW(parse("[train]\ntotal_steps = 1.5\n"), ConfigError);
    EXPECT_THROW(parse("[experiment]\nenv = moon_lander\n"), ConfigError);
    EXPECT_THROW(parse("[experiment]\ncombos = fa+xx\n"), ConfigError);
    EXPECT_THROW(parse("[experiment]\nseeds = -1\n"), ConfigError);
    EXPECT_THROW(parse("lr = 1\n"), ConfigError);
    EXPECT_THROW(parse("[experiment\n"), ConfigError);
    EXPECT_THROW(load_experiment("/nonexistent/dir/x.ini"), ConfigError);
}

TEST(ParseExperiment, OverridesReplaceFileValues)
{
    std::istringstream is("[train]\ntotal_steps = 5000\n");
    ExperimentSpec s = parse_experiment(is);
    apply_override(s, "train.total_steps=42");
    apply_override(s, "experiment.combos = fa+pc");
    EXPECT_EQ(s.train.total_steps, 42);
    ASSERT_EQ(s.combos.size(), 1u);
    EXPECT_EQ(s.combos[0], (Mods{true, true, false}));
    EXPECT_THROW(apply_override(s, "train.total_steps"), ConfigError);
    EXPECT_THROW(apply_override(s, "nosuch.key=1"), ConfigError);
}

TEST(ExperimentSpec, ValidateRejectsEmptyLists)
{
    ExperimentSpec s = tiny_spec();
    s.seeds.clear();
    EXPECT_THROW(s.validate(), ContractViolation);

    s = tiny_spec();
    s.combos = {Mods::parse("fa+pc")};
    s.alphas.clear();
    EXPECT_THROW(s.validate(), ContractViolation);

    s = tiny_spec();
    s.curve_starts = -1;
    EXPECT_THROW(s.validate(), ContractViolation);

    s = tiny_spec();
    s.train.m_eval = s.filter_horizon() + 1;
    EXPECT_THROW(s.validate(), ContractViolation);
}

TEST(ExpandRuns, CountsAndDisabledPenalties)
{
    ExperimentSpec s = tiny_spec();
    s.combos = {Mods{}, Mods::parse("fa+sr"), Mods::parse("fa+pc+sr")};
    s.alphas = {0.1, 1, 10};
    s.betas = {0, 0.5};
    s.seeds = {0, 1};
    const std::vector<RunSpec> runs = expand_runs(s);
    // Two plain combos sweep beta, the PC combo sweeps alpha.
    ASSERT_EQ(runs.size(), 2u * 2 * 2 + 3u * 2);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < runs.size(); ++i)
    {
        EXPECT_EQ(runs[i].index, static_cast<int>(i));
        ids.insert(runs[i].id());
        if (runs[i].mods.pc)
            EXPECT_EQ(runs[i].beta, 0.0);
        else
            EXPECT_EQ(runs[i].alpha, 0.0);
    }
    EXPECT_EQ(ids.size(), runs.size());
    EXPECT_EQ(runs.back().id(), "fa+pc+sr_a10_s1");
    EXPECT_EQ(runs.front().id(), "std_b0_s0");
}

TEST(SpecHash, MatchesIndependentFnv1a)
{
    // Published FNV-1a 64 test vectors.
    EXPECT_EQ(oracle::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(oracle::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);

    const ExperimentSpec s = tiny_spec();
    char expect[17];
    std::snprintf(expect, sizeof expect, "%016llx",
                  static_cast<unsigned long long>(oracle::fnv1a64(canonical_text(s))));
    EXPECT_EQ(spec_hash(s), expect);
}

TEST(SpecHash, SensitiveToResultFieldsOnly)
{
    const ExperimentSpec a = tiny_spec();
    ExperimentSpec b = a;
    EXPECT_EQ(spec_hash(a), spec_hash(b));
    b.workers = 4;
    b.keep_telemetry = false;
    EXPECT_EQ(spec_hash(a), spec_hash(b));
    b.train.lr *= 1.0 + 1e-15;
    EXPECT_NE(spec_hash(a), spec_hash(b));
    b = a;
    b.seeds = {1};
    EXPECT_NE(spec_hash(a), spec_hash(b));
}

TEST(SharedEvalStarts, AllFeasibleAndReproducible)
{
    ExperimentSpec s = tiny_spec();
    s.eval_starts = 10;
    const EnvSpec env = s.make_env();
    const EllipsoidSet term = env_terminal_set(env);
    const auto a = shared_eval_starts(s, env, term);
    const auto b = shared_eval_starts(s, env, term);
    ASSERT_EQ(a.size(), 10u);
    const SafetyFilter f = make_filter(env, term, s.filter_horizon(), 1);
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        EXPECT_EQ(a[i], b[i]);
        EXPECT_TRUE(f.check_feasible(a[i]));
    }
}

TEST(RunMatrix, OneComboOneSeedTwoStarts)
{
    const ExperimentSpec s = tiny_spec();
    const std::vector<RunRecord> recs = run_matrix(s);
    ASSERT_EQ(recs.size(), 1u);
    const RunRecord &r = recs[0];
    ASSERT_TRUE(r.ok) << r.error;
    EXPECT_EQ(r.returns.size(), 2u);
    EXPECT_EQ(r.uncert_returns.size(), 2u);
    EXPECT_EQ(r.input_rocs.size(), 2u);
    EXPECT_EQ(r.steps, 400);
    EXPECT_EQ(r.curve.size(), 2u);
    EXPECT_EQ(r.spec_hash, spec_hash(s));
    EXPECT_EQ(r.train_violation_fraction, 0.0);
    EXPECT_EQ(r.telemetry.size(), 400u);
    for (double v : r.returns)
        EXPECT_TRUE(std::isfinite(v));
}

TEST(RunMatrix, RepeatedSpecGivesIdenticalRunsCsv)
{
    ExperimentSpec s = tiny_spec();
    s.combos = {Mods{}, Mods::parse("fa+pc+sr")};
    s.keep_telemetry = false;
    const auto a = run_matrix(s);
    s.workers = 2;
    const auto b = run_matrix(s);
    std::ostringstream ca, cb;
    write_runs_csv(ca, a);
    write_runs_csv(cb, b);
    EXPECT_EQ(ca.str(), cb.str());
    ASSERT_EQ(a.size(), 2u);
    EXPECT_TRUE(a[0].telemetry.empty());
}

TEST(RunOne, FailureIsRecordedNotThrown)
{
    ExperimentSpec s = tiny_spec();
    const EnvSpec env = s.make_env();
    const EllipsoidSet term = env_terminal_set(env);
    const auto starts = shared_eval_starts(s, env, term);
    // Rejected inside training, after the matrix has been set up.
    s.train.m_eval = s.filter_horizon() + 1;
    const RunRecord r = run_one(s, expand_runs(s)[0], env, term, starts);
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.error.empty());
    std::ostringstream os;
    write_runs_csv(os, {r});
    std::istringstream is(os.str());
    const auto rows = read_csv(is);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].at("status"), "failed");
    EXPECT_TRUE(summarize_rows(rows).empty());
}

TEST(EmitOutputs, EmptyRecordsGiveHeadersOnly)
{
    const fs::path dir = scratch_dir("empty");
    emit_outputs({}, tiny_spec(), dir);
    std::string header;
    for (std::size_t i = 0; i < runs_csv_columns().size(); ++i)
        header += runs_csv_columns()[i] + (i + 1 < runs_csv_columns().size() ? "," : "\n");
    EXPECT_EQ(slurp(dir / "runs.csv"), header);
    EXPECT_EQ(slurp(dir / "timing.csv"), "run_id,ms_per_step,wall_seconds\n");
    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(j["runs"], 0);
    EXPECT_TRUE(j["groups"].empty());
    fs::remove_all(dir);
}

TEST(EmitOutputs, OneRecordSummaryEqualsRow)
{
    const fs::path dir = scratch_dir("one");
    const RunRecord r = fake_record("fa+pc+sr", 1.0, 0, {40.0, 44.0, 39.0});
    emit_outputs({r}, tiny_spec(), dir);

    std::ifstream is(dir / "runs.csv");
    const auto rows = read_csv(is);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].at("run_id"), "fa+pc+sr_a1_s0");
    EXPECT_EQ(std::stod(rows[0].at("return_mean")), 41.0);
    EXPECT_EQ(std::stod(rows[0].at("return_median")), 40.0);

    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    ASSERT_EQ(j["groups"].size(), 1u);
    const auto &g = j["groups"][0];
    EXPECT_EQ(g["runs"], 1);
    EXPECT_EQ(g["return_mean"].get<double>(), std::stod(rows[0].at("return_mean")));
    EXPECT_EQ(g["return_std"].get<double>(), 0.0);
    EXPECT_EQ(g["uncert_return"].get<double>(), std::stod(rows[0].at("uncert_return")));
    EXPECT_EQ(g["input_roc"].get<double>(), std::stod(rows[0].at("input_roc")));
    EXPECT_EQ(g["train_violation_pct"].get<double>(), std::stod(rows[0].at("train_violation_pct")));
    EXPECT_EQ(g["ms_per_step"].get<double>(), 0.25);

    EXPECT_EQ(slurp(dir / "curves" / "fa+pc+sr_a1_s0.csv"), "step,eval_return,violation_count\n200,1.5,0\n400,2.75,1\n");
    EXPECT_TRUE(fs::exists(dir / "logs" / "fa+pc+sr_a1_s0.episodes.csv"));
    fs::remove_all(dir);
}

TEST(EmitOutputs, CsvRoundTripReproducesSummary)
{
    std::vector<RunRecord> recs;
    for (std::uint64_t seed = 0; seed < 3; ++seed)
    {
        recs.push_back(fake_record("std", 0.0, seed, {10.0 / 3.0 + seed, std::exp(1.0) * seed}));
        recs.push_back(fake_record("fa+pc+sr", 0.1, seed, {std::sqrt(2.0) + seed, 1e-3 / 7.0}));
        recs.push_back(fake_record("fa+pc+sr", 10.0, seed, {std::acos(-1.0) * seed, 5.0}));
    }
    recs[4].ok = false;
    recs[4].error = "diverged, badly\nat step 3";

    const fs::path dir = scratch_dir("roundtrip");
    emit_outputs(recs, tiny_spec(), dir);
    std::ifstream runs(dir / "runs.csv"), timing(dir / "timing.csv");
    auto rows = read_csv(runs);
    const auto trows = read_csv(timing);
    ASSERT_EQ(rows.size(), recs.size());
    ASSERT_EQ(trows.size(), recs.size());
    EXPECT_EQ(rows[4].at("error"), "diverged; badly at step 3");

    // Recompute the aggregates here, from the parsed text only.
    struct Agg
    {
        std::vector<double> ret, unc, roc, viol, ms;
    };
    std::map<std::string, Agg> agg;
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        if (rows[i].at("status") != "ok")
            continue;
        Agg &a = agg[rows[i].at("mods") + "|" + rows[i].at("alpha") + "|" + rows[i].at("beta")];
        a.ret.push_back(std::stod(rows[i].at("return_mean")));
        a.unc.push_back(std::stod(rows[i].at("uncert_return")));
        a.roc.push_back(std::stod(rows[i].at("input_roc")));
        a.viol.push_back(std::stod(rows[i].at("train_violation_pct")));
        a.ms.push_back(std::stod(trows[i].at("ms_per_step")));
    }
    auto mean = [](const std::vector<double> &v) {
        double s = 0.0;
        for (double x : v)
            s += x;
        return s / v.size();
    };
    auto pstd = [&](const std::vector<double> &v) {
        const double m = mean(v);
        double s = 0.0;
        for (double x : v)
            s += (x - m) * (x - m);
        return std::sqrt(s / v.size());
    };

    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    ASSERT_EQ(j["groups"].size(), agg.size());
    EXPECT_EQ(j["failed_runs"], 1);
    for (const auto &g : j["groups"])
    {
        char key[128];
        std::snprintf(key, sizeof key, "%s|%.17g|%.17g", g["mods"].get<std::string>().c_str(),
                      g["alpha"].get<double>(), g["beta"].get<double>());
        ASSERT_TRUE(agg.count(key)) << key;
        const Agg &a = agg.at(key);
        EXPECT_EQ(g["runs"].get<std::size_t>(), a.ret.size());
        EXPECT_NEAR(g["return_mean"].get<double>(), mean(a.ret), 1e-12);
        EXPECT_NEAR(g["return_std"].get<double>(), pstd(a.ret), 1e-12);
        EXPECT_NEAR(g["uncert_return"].get<double>(), mean(a.unc), 1e-12);
        EXPECT_NEAR(g["input_roc"].get<double>(), mean(a.roc), 1e-12);
        EXPECT_NEAR(g["train_violation_pct"].get<double>(), mean(a.viol), 1e-12);
        EXPECT_NEAR(g["ms_per_step"].get<double>(), mean(a.ms), 1e-12);
    }
    fs::remove_all(dir);
}

TEST(EmitOutputs, UnwritableDirectoryNamesThePath)
{
    const fs::path blocker = scratch_dir("blocker");
    std::ofstream(blocker) << "x";
    try
    {
        emit_outputs({}, tiny_spec(), blocker / "out");
        FAIL() << "expected an I/O error";
    }
    catch (const std::runtime_error &e)
    {
        EXPECT_NE(std::string(e.what()).find(blocker.string()), std::string::npos);
    }
    fs::remove(blocker);
}

} // namespace sfrl
