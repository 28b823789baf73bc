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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfrl/env.hpp"
#include "sfrl/train.hpp"

namespace sfrl
{

/**
 * A matrix of training runs: every modification combination, for each of
 * its penalty values, for each seed. Combinations with PC sweep `alphas`,
 * the others sweep `betas`.
 */
struct ExperimentSpec
{
    std::string name = "experiment";
    EnvKind env = EnvKind::DoubleIntegrator;
    TaskParams task;
    std::vector<Mods> combos{Mods{}};
    std::vector<double> alphas{1.0};
    std::vector<double> betas{0.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int eval_starts = 20;
    /// Leading eval starts reused for the per-update learning curve (at most eval_starts).
    int curve_starts = 5;
    std::uint64_t start_seed = 1234;
    int workers = 1;
    /// Keep per-step filter telemetry in the records (written under logs/).
    bool keep_telemetry = true;
    /// When set, initial and final checkpoints go to <dir>/<run id>.*.ckpt.
    std::string checkpoint_dir;

    /// Per-run settings; mods, alpha, beta and seed are set per run.
    TrainConfig train;
    /// Filter horizon; the task default when unset.
    std::optional<int> horizon;
    std::optional<double> slack_linear;
    std::optional<double> slack_quadratic;
    std::optional<int> sqp_max_iters;

    void validate() const;
    EnvSpec make_env() const;
    int filter_horizon() const;
};

/// Reads an INI file with [experiment], [env], [filter] and [train] sections.
ExperimentSpec parse_experiment(std::istream &is);
ExperimentSpec load_experiment(const std::string &path);
/// Applies "section.key=value" overrides on top of a spec.
void apply_override(ExperimentSpec &spec, const std::string &assignment);

/// Canonical text of every field that affects results.
std::string canonical_text(const ExperimentSpec &spec);
/// 64-bit FNV-1a of canonical_text, as 16 hex digits.
std::string spec_hash(const ExperimentSpec &spec);

struct RunSpec
{
    int index = 0;
    Mods mods;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;

    /// File-safe identifier such as "fa+pc+sr_a1_s0".
    std::string id() const;
};

std::vector<RunSpec> expand_runs(const ExperimentSpec &spec);

/// Initial states accepted by the filter, drawn once and shared by all runs.
std::vector<StateVec> shared_eval_starts(const ExperimentSpec &spec, const EnvSpec &env,
                                         const EllipsoidSet &terminal);

struct RunRecord
{
    RunSpec run;
    std::string env;
    std::string spec_hash;
    bool ok = false;
    std::string error;

    long steps = 0;
    /// Certified (M = m_eval) return from each eval start.
    std::vector<double> returns;
    std::vector<double> input_rocs;
    int eval_violations = 0;
    std::vector<double> uncert_returns;
    int uncert_violations = 0;
    double train_violation_fraction = 0.0;
    double mean_correction = 0.0;
    int filter_failures = 0;
    double ms_per_step = 0.0;
    double wall_seconds = 0.0;
    std::vector<CurvePoint> curve;
    std::vector<EpisodeSummary> episodes;
    std::vector<StepTelemetry> telemetry;

    double return_mean() const;
    double return_std() const;
    double return_median() const;
    double input_roc() const;
    double uncert_return_mean() const;
};

/// Trains and evaluates one entry of the matrix. Failures are captured in the record.
RunRecord run_one(const ExperimentSpec &spec, const RunSpec &run, const EnvSpec &env,
                  const EllipsoidSet &terminal, const std::vector<StateVec> &eval_starts);

/// Runs every entry on a pool of spec.workers threads; records keep expansion order.
std::vector<RunRecord> run_matrix(const ExperimentSpec &spec);

/// runs.csv column names, in order.
const std::vector<std::string> &runs_csv_columns();
void write_runs_csv(std::ostream &os, const std::vector<RunRecord> &records);
void write_timing_csv(std::ostream &os, const std::vector<RunRecord> &records);
void write_curve_csv(std::ostream &os, const RunRecord &record);

/// Per-configuration means over seeds, keyed by "mods alpha beta".
struct GroupSummary
{
    std::string mods;
    double alpha = 0.0;
    double beta = 0.0;
    int runs = 0;
    double return_mean = 0.0;
    double return_std = 0.0;
    double uncert_return = 0.0;
    double input_roc = 0.0;
    double train_violation_pct = 0.0;
    double ms_per_step = 0.0;
};

/// Rows of runs.csv as parsed back from text.
using CsvRow = std::map<std::string, std::string>;
std::vector<CsvRow> read_csv(std::istream &is);

/// Groups runs.csv rows (successful runs only) and averages them. An
/// optional ms_per_step column (from timing.csv) is averaged too.
std::vector<GroupSummary> summarize_rows(const std::vector<CsvRow> &rows);
/// Same aggregates computed from the printed rows, so they round-trip exactly.
std::vector<GroupSummary> summarize(const std::vector<RunRecord> &records);

/**
 * Writes runs.csv, timing.csv, summary.json, curves/<run>.csv and
 * logs/<run>.episodes.csv (plus logs/<run>.filter.csv when telemetry is
 * kept) under out_dir.
 */
void emit_outputs(const std::vector<RunRecord> &records, const ExperimentSpec &spec,
                  const std::filesystem::path &out_dir);

} // namespace sfrl
