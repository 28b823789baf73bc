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


#include "sfrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include "json.hpp"

#include "sfrl/errors.hpp"

namespace sfrl
{
namespace
{

namespace pt = boost::property_tree;

std::string trim(const std::string &s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string &s, const std::string &seps)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s)
    {
        if (seps.find(c) != std::string::npos)
        {
            if (!trim(cur).empty())
                out.push_back(trim(cur));
            cur.clear();
        }
        else
            cur += c;
    }
    if (!trim(cur).empty())
        out.push_back(trim(cur));
    return out;
}

double to_double(const std::string &key, const std::string &v)
{
    try
    {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (trim(v.substr(pos)).empty() && std::isfinite(d))
            return d;
    }
    catch (const std::exception &)
    {
    }
    throw ConfigError(key + ": expected a number, got '" + v + "'");
}

long to_long(const std::string &key, const std::string &v)
{
    try
    {
        std::size_t pos = 0;
        const long l = std::stol(v, &pos);
        if (trim(v.substr(pos)).empty())
            return l;
    }
    catch (const std::exception &)
    {
    }
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

bool to_bool(const std::string &key, const std::string &v)
{
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<Mods> parse_combos(const std::string &key, const std::string &v)
{
    std::vector<Mods> out;
    for (const std::string &tok : split(v, "; \t"))
    {
        if (tok == "all")
        {
            for (int bits = 0; bits < 8; ++bits)
                out.push_back({(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0});
            continue;
        }
        try
        {
            out.push_back(Mods::parse(tok));
        }
        catch (const ContractViolation &e)
        {
            throw ConfigError(key + ": " + e.what());
        }
    }
    return out;
}

void set_key(ExperimentSpec &s, const std::string &key, const std::string &raw)
{
    const std::string v = trim(raw);
    auto dbl = [&] { return to_double(key, v); };
    auto integer = [&] { return static_cast<int>(to_long(key, v)); };
    auto doubles = [&] {
        std::vector<double> out;
        for (const auto &t : split(v, ", \t"))
            out.push_back(to_double(key, t));
        return out;
    };

    if (key == "experiment.name")
        s.name = v;
    else if (key == "experiment.env")
    {
        try
        {
            s.env = parse_env_kind(v);
        }
        catch (const ContractViolation &e)
        {
            throw ConfigError(key + ": " + e.what());
        }
    }
    else if (key == "experiment.combos")
        s.combos = parse_combos(key, v);
    else if (key == "experiment.alphas")
        s.alphas = doubles();
    else if (key == "experiment.betas")
        s.betas = doubles();
    else if (key == "experiment.seeds")
    {
        s.seeds.clear();
        for (const auto &t : split(v, ", \t"))
        {
            const long l = to_long(key, t);
            if (l < 0)
                throw ConfigError(key + ": seeds must be nonnegative");
            s.seeds.push_back(static_cast<std::uint64_t>(l));
        }
    }
    else if (key == "experiment.eval_starts")
        s.eval_starts = integer();
    else if (key == "experiment.curve_starts")
        s.curve_starts = integer();
    else if (key == "experiment.start_seed")
        s.start_seed = static_cast<std::uint64_t>(to_long(key, v));
    else if (key == "experiment.workers")
        s.workers = integer();
    else if (key == "experiment.keep_telemetry")
        s.keep_telemetry = to_bool(key, v);
    else if (key == "experiment.checkpoint_dir")
        s.checkpoint_dir = v;
    else if (key == "env.dt")
        s.task.dt = dbl();
    else if (key == "env.w_max")
        s.task.w_max = dbl();
    else if (key == "env.duration")
        s.task.duration = dbl();
    else if (key == "env.mass")
        s.task.quad.mass = dbl();
    else if (key == "env.inertia")
        s.task.quad.inertia = dbl();
    else if (key == "env.arm_length")
        s.task.quad.arm_length = dbl();
    else if (key == "env.gravity")
        s.task.quad.gravity = s.task.drone.gravity = dbl();
    else if (key == "env.attitude_tau")
        s.task.drone.attitude_tau = dbl();
    else if (key == "filter.horizon")
        s.horizon = integer();
    else if (key == "filter.m_train")
        s.train.m_train = integer();
    else if (key == "filter.m_eval")
        s.train.m_eval = integer();
    else if (key == "filter.slack_linear")
        s.slack_linear = dbl();
    else if (key == "filter.slack_quadratic")
        s.slack_quadratic = dbl();
    else if (key == "filter.sqp_max_iters")
        s.sqp_max_iters = integer();
    else if (key == "train.gamma")
        s.train.gamma = dbl();
    else if (key == "train.gae_lambda")
        s.train.gae_lambda = dbl();
    else if (key == "train.clip_eps")
        s.train.clip_eps = dbl();
    else if (key == "train.lr")
        s.train.lr = dbl();
    else if (key == "train.epochs")
        s.train.epochs_per_update = integer();
    else if (key == "train.minibatch")
        s.train.minibatch = integer();
    else if (key == "train.steps_per_update")
        s.train.steps_per_update = integer();
    else if (key == "train.total_steps")
        s.train.total_steps = to_long(key, v);
    else if (key == "train.hidden")
    {
        s.train.hidden.clear();
        for (const auto &t : split(v, ", \t"))
            s.train.hidden.push_back(static_cast<int>(to_long(key, t)));
    }
    else if (key == "train.initial_log_std")
        s.train.initial_log_std = dbl();
    else if (key == "train.max_grad_norm")
        s.train.max_grad_norm = dbl();
    else if (key == "train.reset_max_tries")
        s.train.reset_max_tries = integer();
    else
        throw ConfigError("unknown configuration key '" + key + "'");
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Shortest decimal that round-trips, for identifiers.
std::string short_num(double v)
{
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double mean_of(const std::vector<double> &v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double> &v)
{
    if (v.size() < 2)
        return 0.0;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

std::ofstream open_out(const std::filesystem::path &path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

void close_out(std::ofstream &os, const std::filesystem::path &path)
{
    os.close();
    if (!os)
        throw std::runtime_error("failed writing " + path.string());
}

// CSV fields never contain commas except error messages, which are sanitized.
std::string csv_safe(std::string s)
{
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace

void ExperimentSpec::validate() const
{
    require(!seeds.empty(), "experiment needs at least one seed");
    require(!combos.empty(), "experiment needs at least one modification combination");
    const bool any_pc = std::any_of(combos.begin(), combos.end(), [](const Mods &m) { return m.pc; });
    const bool any_plain = std::any_of(combos.begin(), combos.end(), [](const Mods &m) { return !m.pc; });
    require(!any_pc || !alphas.empty(), "combinations with PC need at least one alpha");
    require(!any_plain || !betas.empty(), "combinations without PC need at least one beta");
    for (double a : alphas)
        require(std::isfinite(a) && a >= 0.0, "alpha must be finite and nonnegative");
    for (double b : betas)
        require(std::isfinite(b) && b >= 0.0, "beta must be finite and nonnegative");
    require(eval_starts >= 1, "eval_starts must be positive");
    require(curve_starts >= 0, "curve_starts must be nonnegative");
    require(workers >= 1, "workers must be positive");
    if (horizon)
        require(*horizon >= 1, "filter horizon must be positive");
    TrainConfig t = train;
    t.horizon = filter_horizon();
    t.validate();
}

EnvSpec ExperimentSpec::make_env() const
{
    EnvSpec e = sfrl::make_env(env, task);
    if (slack_linear)
        e.filter.slack_linear = *slack_linear;
    if (slack_quadratic)
        e.filter.slack_quadratic = *slack_quadratic;
    if (sqp_max_iters)
        e.filter.sqp_max_iters = *sqp_max_iters;
    return e;
}

int ExperimentSpec::filter_horizon() const
{
    return horizon ? *horizon : sfrl::make_env(env, task).filter.H;
}

void apply_override(ExperimentSpec &spec, const std::string &assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    set_key(spec, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentSpec parse_experiment(std::istream &is)
{
    pt::ptree tree;
    try
    {
        pt::read_ini(is, tree);
    }
    catch (const pt::ini_parser_error &e)
    {
        throw ConfigError(std::string("malformed configuration: ") + e.what());
    }
    ExperimentSpec spec;
    for (const auto &[section, body] : tree)
    {
        if (body.empty())
            throw ConfigError("key '" + section + "' must be inside a section");
        for (const auto &[key, value] : body)
            set_key(spec, section + "." + key, value.data());
    }
    return spec;
}

ExperimentSpec load_experiment(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot open configuration file " + path);
    try
    {
        return parse_experiment(is);
    }
    catch (const ConfigError &e)
    {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string canonical_text(const ExperimentSpec &s)
{
    const EnvSpec e = s.make_env();
    std::ostringstream os;
    auto hex = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%a", v);
        return std::string(buf);
    };
    os << "name=" << s.name << "\nenv=" << to_string(s.env) << "\ndt=" << hex(e.model.dt)
       << "\nw_max=" << hex(e.dist.w_max) << "\nduration=" << hex(e.duration)
       << "\nquad=" << hex(s.task.quad.mass) << ',' << hex(s.task.quad.inertia) << ','
       << hex(s.task.quad.arm_length) << ',' << hex(s.task.quad.gravity) << "\ndrone=" << hex(s.task.drone.attitude_tau)
       << ',' << hex(s.task.drone.gravity) << "\ncombos=";
    for (const Mods &m : s.combos)
        os << m.label() << ';';
    os << "\nalphas=";
    for (double a : s.alphas)
        os << hex(a) << ';';
    os << "\nbetas=";
    for (double b : s.betas)
        os << hex(b) << ';';
    os << "\nseeds=";
    for (auto sd : s.seeds)
        os << sd << ';';
    const TrainConfig &t = s.train;
    os << "\neval_starts=" << s.eval_starts << "\ncurve_starts=" << std::min(s.curve_starts, s.eval_starts) << "\nstart_seed=" << s.start_seed
       << "\nhorizon=" << s.filter_horizon() << "\nm_train=" << t.m_train << "\nm_eval=" << t.m_eval
       << "\nslack=" << hex(e.filter.slack_linear) << ',' << hex(e.filter.slack_quadratic)
       << "\nsqp_max_iters=" << e.filter.sqp_max_iters << "\ngamma=" << hex(t.gamma) << "\ngae_lambda="
       << hex(t.gae_lambda) << "\nclip_eps=" << hex(t.clip_eps) << "\nlr=" << hex(t.lr)
       << "\nepochs=" << t.epochs_per_update << "\nminibatch=" << t.minibatch
       << "\nsteps_per_update=" << t.steps_per_update << "\ntotal_steps=" << t.total_steps << "\nhidden=";
    for (int h : t.hidden)
        os << h << ';';
    os << "\ninitial_log_std=" << hex(t.initial_log_std) << "\nmax_grad_norm=" << hex(t.max_grad_norm)
       << "\nreset_max_tries=" << t.reset_max_tries << '\n';
    return os.str();
}

std::string spec_hash(const ExperimentSpec &spec)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text(spec))
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string RunSpec::id() const
{
    std::string s = mods.label();
    s += mods.pc ? "_a" + short_num(alpha) : "_b" + short_num(beta);
    return s + "_s" + std::to_string(seed);
}

std::vector<RunSpec> expand_runs(const ExperimentSpec &spec)
{
    std::vector<RunSpec> runs;
    for (const Mods &m : spec.combos)
    {
        const std::vector<double> &penalties = m.pc ? spec.alphas : spec.betas;
        for (double p : penalties)
            for (auto seed : spec.seeds)
            {
                RunSpec r;
                r.index = static_cast<int>(runs.size());
                r.mods = m;
                r.alpha = m.pc ? p : 0.0;
                r.beta = m.pc ? 0.0 : p;
                r.seed = seed;
                runs.push_back(r);
            }
    }
    return runs;
}

std::vector<StateVec> shared_eval_starts(const ExperimentSpec &spec, const EnvSpec &env,
                                         const EllipsoidSet &terminal)
{
    const SafetyFilter filter = make_filter(env, terminal, spec.filter_horizon(), 1);
    Rng rng(spec.start_seed);
    std::vector<StateVec> starts;
    for (int i = 0; i < spec.eval_starts; ++i)
        starts.push_back(safe_reset(filter, env.x_box, rng, spec.train.reset_max_tries));
    return starts;
}

double RunRecord::return_mean() const
{
    return mean_of(returns);
}

double RunRecord::return_std() const
{
    return std_of(returns);
}

double RunRecord::return_median() const
{
    if (returns.empty())
        return 0.0;
    std::vector<double> v = returns;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double RunRecord::input_roc() const
{
    return mean_of(input_rocs);
}

double RunRecord::uncert_return_mean() const
{
    return mean_of(uncert_returns);
}

RunRecord run_one(const ExperimentSpec &spec, const RunSpec &run, const EnvSpec &env,
                  const EllipsoidSet &terminal, const std::vector<StateVec> &eval_starts)
{
    RunRecord rec;
    rec.run = run;
    rec.env = to_string(spec.env);
    rec.spec_hash = spec_hash(spec);
    try
    {
        TrainConfig cfg = spec.train;
        cfg.mods = run.mods;
        cfg.alpha = run.alpha;
        cfg.beta = run.beta;
        cfg.seed = run.seed;
        cfg.horizon = spec.filter_horizon();

        const auto n_curve = std::min<std::size_t>(static_cast<std::size_t>(spec.curve_starts), eval_starts.size());
        const std::vector<StateVec> curve_starts(eval_starts.begin(), eval_starts.begin() + n_curve);
        std::optional<std::string> ckpt;
        if (!spec.checkpoint_dir.empty())
        {
            std::filesystem::create_directories(spec.checkpoint_dir);
            ckpt = (std::filesystem::path(spec.checkpoint_dir) / run.id()).string();
        }
        TrainResult tr = run_training(env, terminal, cfg, curve_starts, ckpt);

        SafetyFilter eval_filter = make_filter(env, terminal, cfg.horizon, cfg.m_eval);
        // Evaluation disturbances use their own stream, equal for every run.
        const std::uint64_t eval_seed = spec.start_seed ^ 0x9e3779b97f4a7c15ULL;
        const EvalResult cert = evaluate_policy(env, tr.agent.policy, &eval_filter, eval_starts, eval_seed);
        const EvalResult unc = evaluate_policy(env, tr.agent.policy, nullptr, eval_starts, eval_seed);

        rec.steps = tr.steps;
        rec.returns = cert.returns;
        rec.input_rocs = cert.input_roc;
        rec.eval_violations = cert.violations;
        rec.uncert_returns = unc.returns;
        rec.uncert_violations = unc.violations;
        rec.train_violation_fraction = tr.violation_fraction();
        rec.mean_correction = tr.mean_correction();
        rec.filter_failures = tr.filter_failures + cert.filter_failures;
        rec.ms_per_step = tr.ms_per_step();
        rec.wall_seconds = tr.wall_seconds;
        rec.curve = std::move(tr.curve);
        rec.episodes = std::move(tr.episodes);
        if (spec.keep_telemetry)
            rec.telemetry = std::move(tr.telemetry);
        rec.ok = true;
    }
    catch (const std::exception &e)
    {
        rec = RunRecord{};
        rec.run = run;
        rec.env = to_string(spec.env);
        rec.spec_hash = spec_hash(spec);
        rec.error = e.what();
    }
    return rec;
}

std::vector<RunRecord> run_matrix(const ExperimentSpec &spec)
{
    spec.validate();
    const EnvSpec env = spec.make_env();
    const EllipsoidSet terminal = env_terminal_set(env);
    const std::vector<StateVec> starts = shared_eval_starts(spec, env, terminal);
    const std::vector<RunSpec> runs = expand_runs(spec);

    std::vector<RunRecord> records(runs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++)
            records[i] = run_one(spec, runs[i], env, terminal, starts);
    };
    const int n_threads = std::min<int>(spec.workers, static_cast<int>(runs.size()));
    if (n_threads <= 1)
        worker();
    else
    {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
        for (auto &th : pool)
            th.join();
    }
    return records;
}

const std::vector<std::string> &runs_csv_columns()
{
    static const std::vector<std::string> cols{
        "run_id",        "env",           "mods",           "alpha",
        "beta",          "seed",          "spec_hash",      "status",
        "steps",         "eval_starts",   "return_mean",    "return_std",
        "return_median", "uncert_return", "uncert_violations", "eval_violations",
        "input_roc",     "train_violation_pct", "mean_correction", "filter_failures",
        "error"};
    return cols;
}

void write_runs_csv(std::ostream &os, const std::vector<RunRecord> &records)
{
    const auto &cols = runs_csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        os << cols[i] << (i + 1 < cols.size() ? ',' : '\n');
    for (const RunRecord &r : records)
    {
        os << r.run.id() << ',' << r.env << ',' << r.run.mods.label() << ',' << fmt(r.run.alpha) << ','
           << fmt(r.run.beta) << ',' << r.run.seed << ',' << r.spec_hash << ',' << (r.ok ? "ok" : "failed") << ','
           << r.steps << ',' << r.returns.size() << ',' << fmt(r.return_mean()) << ',' << fmt(r.return_std()) << ','
           << fmt(r.return_median()) << ',' << fmt(r.uncert_return_mean()) << ',' << r.uncert_violations << ','
           << r.eval_violations << ',' << fmt(r.input_roc()) << ',' << fmt(100.0 * r.train_violation_fraction)
           << ',' << fmt(r.mean_correction) << ',' << r.filter_failures << ',' << csv_safe(r.error) << '\n';
    }
}

void write_timing_csv(std::ostream &os, const std::vector<RunRecord> &records)
{
    os << "run_id,ms_per_step,wall_seconds\n";
    for (const RunRecord &r : records)
        os << r.run.id() << ',' << fmt(r.ms_per_step) << ',' << fmt(r.wall_seconds) << '\n';
}

void write_curve_csv(std::ostream &os, const RunRecord &record)
{
    os << "step,eval_return,violation_count\n";
    for (const CurvePoint &c : record.curve)
        os << c.step << ',' << fmt(c.eval_return) << ',' << c.violation_count << '\n';
}

std::vector<CsvRow> read_csv(std::istream &is)
{
    std::string line;
    if (!std::getline(is, line))
        return {};
    const std::vector<std::string> header = [&] {
        std::vector<std::string> h;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ','))
            h.push_back(f);
        return h;
    }();
    std::vector<CsvRow> rows;
    while (std::getline(is, line))
    {
        if (line.empty())
            continue;
        CsvRow row;
        std::size_t start = 0;
        for (std::size_t i = 0; i < header.size(); ++i)
        {
            const auto end = line.find(',', start);
            if (end == std::string::npos && i + 1 < header.size())
                throw std::runtime_error("csv row has fewer fields than the header: " + line);
            row[header[i]] = line.substr(start, end == std::string::npos ? std::string::npos : end - start);
            start = end == std::string::npos ? line.size() : end + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<GroupSummary> summarize_rows(const std::vector<CsvRow> &rows)
{
    struct Acc
    {
        GroupSummary g;
        std::vector<double> ret, unc, roc, viol, ms;
    };
    std::vector<Acc> groups;
    auto num = [](const CsvRow &r, const char *k) { return std::strtod(r.at(k).c_str(), nullptr); };
    for (const CsvRow &r : rows)
    {
        if (r.at("status") != "ok")
            continue;
        const std::string mods = r.at("mods");
        const double alpha = num(r, "alpha"), beta = num(r, "beta");
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Acc &a) {
            return a.g.mods == mods && a.g.alpha == alpha && a.g.beta == beta;
        });
        if (it == groups.end())
        {
            groups.push_back({});
            it = groups.end() - 1;
            it->g.mods = mods;
            it->g.alpha = alpha;
            it->g.beta = beta;
        }
        it->ret.push_back(num(r, "return_mean"));
        it->unc.push_back(num(r, "uncert_return"));
        it->roc.push_back(num(r, "input_roc"));
        it->viol.push_back(num(r, "train_violation_pct"));
        if (r.count("ms_per_step"))
            it->ms.push_back(num(r, "ms_per_step"));
    }
    std::vector<GroupSummary> out;
    for (Acc &a : groups)
    {
        a.g.runs = static_cast<int>(a.ret.size());
        a.g.return_mean = mean_of(a.ret);
        a.g.return_std = std_of(a.ret);
        a.g.uncert_return = mean_of(a.unc);
        a.g.input_roc = mean_of(a.roc);
        a.g.train_violation_pct = mean_of(a.viol);
        a.g.ms_per_step = mean_of(a.ms);
        out.push_back(a.g);
    }
    return out;
}

std::vector<GroupSummary> summarize(const std::vector<RunRecord> &records)
{
    std::ostringstream os;
    write_runs_csv(os, records);
    std::istringstream is(os.str());
    std::vector<CsvRow> rows = read_csv(is);
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i]["ms_per_step"] = fmt(records[i].ms_per_step);
    return summarize_rows(rows);
}

void emit_outputs(const std::vector<RunRecord> &records, const ExperimentSpec &spec,
                  const std::filesystem::path &out_dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir / "curves", ec);
    if (!ec)
        fs::create_directories(out_dir / "logs", ec);
    if (ec)
        throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

    auto write = [](const fs::path &path, const std::function<void(std::ostream &)> &body) {
        std::ofstream os = open_out(path);
        body(os);
        close_out(os, path);
    };
    write(out_dir / "runs.csv", [&](std::ostream &os) { write_runs_csv(os, records); });
    write(out_dir / "timing.csv", [&](std::ostream &os) { write_timing_csv(os, records); });
    for (const RunRecord &r : records)
    {
        const std::string id = r.run.id();
        write(out_dir / "curves" / (id + ".csv"), [&](std::ostream &os) { write_curve_csv(os, r); });
        write(out_dir / "logs" / (id + ".episodes.csv"), [&](std::ostream &os) {
            TrainResult tr;
            tr.episodes = r.episodes;
            tr.write_log(os);
        });
        if (!r.telemetry.empty())
            write(out_dir / "logs" / (id + ".filter.csv"), [&](std::ostream &os) {
                TrainResult tr;
                tr.telemetry = r.telemetry;
                tr.write_telemetry(os);
            });
    }

    nlohmann::ordered_json j;
    j["name"] = spec.name;
    j["env"] = to_string(spec.env);
    j["spec_hash"] = spec_hash(spec);
    j["runs"] = records.size();
    j["failed_runs"] = std::count_if(records.begin(), records.end(), [](const RunRecord &r) { return !r.ok; });
    j["groups"] = nlohmann::ordered_json::array();
    for (const GroupSummary &g : summarize(records))
        j["groups"].push_back({{"mods", g.mods},
                               {"alpha", g.alpha},
                               {"beta", g.beta},
                               {"runs", g.runs},
                               {"return_mean", g.return_mean},
                               {"return_std", g.return_std},
                               {"uncert_return", g.uncert_return},
                               {"input_roc", g.input_roc},
                               {"train_violation_pct", g.train_violation_pct},
                               {"ms_per_step", g.ms_per_step}});
    write(out_dir / "summary.json", [&](std::ostream &os) { os << j.dump(2) << '\n'; });
}

} // namespace sfrl
