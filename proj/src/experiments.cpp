#include "aoinf/experiments.hpp"

#include "aoinf/transform.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace aoinf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads the keys of one JSON object and rejects anything it did not consume.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(where("") + "expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        const json* v = take(key);
        if (v == nullptr) return;
        out = convert<T>(*v, where(key));
    }

    const json* take(const char* key) {
        seen_.emplace_back(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
                throw ConfigError("unknown config key '" + where(key.c_str()) + "'");
    }

    std::string where(const char* key) const {
        if (path_.empty()) return key;
        return *key ? path_ + "." + key : path_ + ": ";
    }

    template <typename T>
    static T convert(const json& v, const std::string& name) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(name + ": expected true or false");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(name + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (!v.is_number_unsigned() && v.get<long long>() < 0)
                    throw ConfigError(name + ": expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(name + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(name + ": expected a string");
        } else {
            if (!v.is_array()) throw ConfigError(name + ": expected a list");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], name + "[" + std::to_string(i) + "]"));
            return out;
        }
        return v.get<T>();
    }

private:
    const json& obj_;
    std::string path_;
    std::vector<std::string> seen_;
};

SystemState state_from_json(const json& v, const std::string& path) {
    Section s(v, path);
    SystemState st;
    s.get("aoinf", st.aoinf);
    s.get("phase", st.mode.phase);
    s.get("cache_full", st.mode.cache_full);
    s.get("cache_age", st.mode.cache_age);
    s.finish();
    return st;
}

json state_to_json(const SystemState& s) {
    return {{"aoinf", s.aoinf},
            {"phase", s.mode.phase},
            {"cache_full", s.mode.cache_full},
            {"cache_age", s.mode.cache_age}};
}

json params_to_json(const ModelParams& p) {
    return {{"aoinf_cap", p.aoinf_cap},     {"period", p.period},
            {"window", p.window},           {"compute_dur", p.compute_dur},
            {"tx_dur", p.tx_dur},           {"upload_dur", p.upload_dur},
            {"ground_infer_dur", p.ground_infer_dur},
            {"p_tx", p.p_tx},               {"p_offload", p.p_offload}};
}

// JSON number carrying exactly the 12-significant-digit text.
json num(double x) {
    if (!std::isfinite(x)) return nullptr;
    return std::stod(format_number(x));
}

void append_int(std::string& buf, long v) {
    char tmp[24];
    const auto res = std::to_chars(tmp, tmp + sizeof tmp, v);
    buf.append(tmp, res.ptr);
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    fn(out);
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) {
    write_file(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

// Runs fn(i) for i in [0, n) on `workers` threads; the first exception is
// rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < count; ++w) pool.emplace_back(work);
        work();
    }
    if (error) std::rethrow_exception(error);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <typename T>
T parse_field(const std::string& text, const std::string& what, long line_no) {
    T value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ConfigError("line " + std::to_string(line_no) + ": bad " + what + " '" + text + "'");
    return value;
}

// Parses a state table with a trailing column handled by `last`.
template <typename Fn>
void read_state_table(std::istream& in, const StateSpace& space, const std::string& last_column,
                      Fn&& last) {
    const std::string header = "delta,phase,cache_full,cache_age," + last_column;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty table, expected header '" + header + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw ConfigError("table header '" + line + "' != '" + header + "'");
    std::vector<char> seen(space.size(), 0);
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                              std::to_string(f.size()));
        const int cache_full = parse_field<int>(f[2], "cache_full", line_no);
        if (cache_full != 0 && cache_full != 1)
            throw ConfigError("line " + std::to_string(line_no) + ": cache_full must be 0 or 1");
        const SystemState s{parse_field<int>(f[0], "delta", line_no),
                            {parse_field<int>(f[1], "phase", line_no), cache_full == 1,
                             parse_field<int>(f[3], "cache_age", line_no)}};
        if (!is_admissible(s, space.params()))
            throw ConfigError("line " + std::to_string(line_no) + ": state " + to_string(s) +
                              " is not in the state space");
        const std::size_t idx = space.index(s);
        if (seen[idx]) throw ConfigError("line " + std::to_string(line_no) + ": duplicate state " + to_string(s));
        seen[idx] = 1;
        last(idx, f[4], line_no);
    }
    const auto missing = std::find(seen.begin(), seen.end(), 0);
    if (missing != seen.end())
        throw ConfigError("table is missing state " +
                          to_string(space[static_cast<std::size_t>(missing - seen.begin())]));
}

json solve_report_json(const SolveReport& r, const SolveConfig& cfg) {
    return {{"converged", r.converged},
            {"gain_per_slot", num(r.gain_per_slot)},
            {"transformed_gain", num(r.transformed_gain)},
            {"theta", num(r.theta)},
            {"iterations", r.iterations},
            {"final_span", num(r.final_span())},
            {"gain_bounds", {num(r.gain_bounds.first), num(r.gain_bounds.second)}},
            {"bracket_width", num(r.bracket_width())},
            {"tolerance", num(cfg.tolerance)}};
}

void write_policy_outputs(const ExperimentConfig& cfg, const StateSpace& space,
                          const SolveReport& report) {
    if (cfg.write_csv) {
        write_file(cfg.output_dir / "policy.csv",
                   [&](std::ostream& o) { write_policy_csv(o, space, report.policy); });
        write_file(cfg.output_dir / "values.csv",
                   [&](std::ostream& o) { write_values_csv(o, space, report.values); });
    }
    if (cfg.write_json) {
        json rows = json::array();
        for (std::size_t s = 0; s < space.size(); ++s) {
            json row = state_to_json(space[s]);
            row["action"] = to_string(report.policy[s]);
            row["value"] = num(report.values[s]);
            rows.push_back(std::move(row));
        }
        write_json(cfg.output_dir / "policy.json", rows);
    }
}

json evaluation_json(const EvaluationResult& e) {
    json classes = json::array();
    for (std::size_t c = 0; c < e.class_gains.size(); ++c)
        classes.push_back({{"gain", num(e.class_gains[c])}, {"weight", num(e.class_weights[c])}});
    return {{"average_aoinf_per_slot", num(e.average_aoinf_per_slot)},
            {"reachable_states", e.reachable_count},
            {"recurrent_states", e.stationary_distribution.size()},
            {"closed_classes", classes}};
}

}  // namespace

std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

void ExperimentConfig::validate() const {
    model.validate();
    solver.validate(model);
    if (!is_admissible(start_state, model))
        throw std::invalid_argument("start_state " + to_string(start_state) + " is not admissible");
    if (sweep) {
        if (sweep->p_tx.empty() || sweep->p_offload.empty())
            throw std::invalid_argument("sweep grids must be non-empty");
        for (const auto* grid : {&sweep->p_tx, &sweep->p_offload})
            for (double p : *grid)
                if (!(p >= 0.0 && p <= 1.0))
                    throw std::invalid_argument("sweep probabilities must lie in [0, 1]");
    }
    if (simulation) {
        if (simulation->horizon < 1) throw std::invalid_argument("simulation.horizon must be >= 1");
        if (simulation->warmup < 0 || simulation->warmup >= simulation->horizon)
            throw std::invalid_argument("simulation.warmup must lie in [0, horizon)");
        if (simulation->seeds.empty()) throw std::invalid_argument("simulation.seeds must be non-empty");
    }
    if (workers < 0) throw std::invalid_argument("workers must be >= 0");
}

int ExperimentConfig::resolved_workers() const {
    if (workers > 0) return workers;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig cfg;
    Section root(doc, "");
    bool start_given = false;
    if (const json* m = root.take("model")) {
        Section s(*m, "model");
        ModelParams& p = cfg.model;
        s.get("aoinf_cap", p.aoinf_cap);
        s.get("period", p.period);
        s.get("window", p.window);
        s.get("compute_dur", p.compute_dur);
        s.get("tx_dur", p.tx_dur);
        s.get("upload_dur", p.upload_dur);
        s.get("ground_infer_dur", p.ground_infer_dur);
        s.get("p_tx", p.p_tx);
        s.get("p_offload", p.p_offload);
        s.finish();
    }
    if (const json* v = root.take("solver")) {
        Section s(*v, "solver");
        SolveConfig& c = cfg.solver;
        s.get("theta", c.transform.theta);
        s.get("tolerance", c.tolerance);
        s.get("max_iterations", c.max_iterations);
        s.get("tie_tolerance", c.tie_tolerance);
        s.get("threads", c.threads);
        if (const json* ref = s.take("reference_state"))
            c.reference_state = state_from_json(*ref, "solver.reference_state");
        s.finish();
    }
    if (const json* v = root.take("sweep")) {
        if (!v->is_null()) {
            Section s(*v, "sweep");
            SweepGrid g;
            s.get("p_tx", g.p_tx);
            s.get("p_offload", g.p_offload);
            s.finish();
            cfg.sweep = g;
        }
    }
    if (const json* v = root.take("simulation")) {
        if (!v->is_null()) {
            Section s(*v, "simulation");
            SimulationBlock b;
            s.get("horizon", b.horizon);
            s.get("seeds", b.seeds);
            s.get("warmup", b.warmup);
            s.get("write_trace", b.write_trace);
            s.finish();
            cfg.simulation = b;
        }
    }
    if (const json* v = root.take("start_state")) {
        cfg.start_state = state_from_json(*v, "start_state");
        start_given = true;
    }
    std::string dir = cfg.output_dir.string();
    root.get("output_dir", dir);
    cfg.output_dir = dir;
    if (const json* v = root.take("output_formats")) {
        const auto formats = Section::convert<std::vector<std::string>>(*v, "output_formats");
        cfg.write_csv = cfg.write_json = false;
        for (const std::string& f : formats) {
            std::string lower = f;
            std::transform(lower.begin(), lower.end(), lower.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
            if (lower == "csv")
                cfg.write_csv = true;
            else if (lower == "json")
                cfg.write_json = true;
            else
                throw ConfigError("output_formats: unknown format '" + f + "' (csv, json)");
        }
    }
    root.get("workers", cfg.workers);
    root.finish();
    if (!start_given) cfg.start_state = default_start_state(cfg.model);
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json doc;
    doc["model"] = params_to_json(cfg.model);
    doc["solver"] = {{"theta", cfg.solver.transform.theta},
                     {"tolerance", cfg.solver.tolerance},
                     {"max_iterations", cfg.solver.max_iterations},
                     {"tie_tolerance", cfg.solver.tie_tolerance},
                     {"threads", cfg.solver.threads},
                     {"reference_state", state_to_json(cfg.solver.reference_state)}};
    if (cfg.sweep) doc["sweep"] = {{"p_tx", cfg.sweep->p_tx}, {"p_offload", cfg.sweep->p_offload}};
    if (cfg.simulation)
        doc["simulation"] = {{"horizon", cfg.simulation->horizon},
                             {"seeds", cfg.simulation->seeds},
                             {"warmup", cfg.simulation->warmup},
                             {"write_trace", cfg.simulation->write_trace}};
    doc["start_state"] = state_to_json(cfg.start_state);
    doc["output_dir"] = cfg.output_dir.string();
    json formats = json::array();
    if (cfg.write_csv) formats.push_back("csv");
    if (cfg.write_json) formats.push_back("json");
    doc["output_formats"] = formats;
    doc["workers"] = cfg.workers;
    return doc;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::size_t pos = 0;
    while (true) {
        const auto dot = key.find('.', pos);
        const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (node->is_null()) *node = json::object();
        if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    *node = std::move(value);
}

ExperimentConfig load_config(const std::optional<fs::path>& path,
                             const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file " + path->string());
        try {
            doc = json::parse(in, nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw ConfigError(path->string() + ": " + e.what());
        }
    }
    for (const std::string& o : overrides) apply_override(doc, o);
    ExperimentConfig cfg = config_from_json(doc);
    cfg.validate();
    return cfg;
}

void write_policy_csv(std::ostream& out, const StateSpace& space, const Policy& policy) {
    out << "delta,phase,cache_full,cache_age,action\n";
    for (std::size_t s = 0; s < space.size(); ++s) {
        const SystemState& st = space[s];
        out << st.aoinf << ',' << st.mode.phase << ',' << (st.mode.cache_full ? 1 : 0) << ','
            << st.mode.cache_age << ',' << to_string(policy[s]) << '\n';
    }
}

void write_values_csv(std::ostream& out, const StateSpace& space, const ValueFunction& values) {
    out << "delta,phase,cache_full,cache_age,value\n";
    for (std::size_t s = 0; s < space.size(); ++s) {
        const SystemState& st = space[s];
        out << st.aoinf << ',' << st.mode.phase << ',' << (st.mode.cache_full ? 1 : 0) << ','
            << st.mode.cache_age << ',' << format_number(values[s]) << '\n';
    }
}

void write_trace_csv(std::ostream& out, const TrajectoryLog& log) {
    const std::vector<Action> actions = log.action_per_slot();
    std::string buf = "slot,aoinf,cache_age,visible_flag,action_in_progress\n";
    for (long n = 0; n < log.horizon(); ++n) {
        const auto i = static_cast<std::size_t>(n);
        append_int(buf, n);
        buf += ',';
        append_int(buf, log.per_slot_aoinf[i]);
        buf += ',';
        append_int(buf, log.cache_age_per_slot[i]);
        buf += log.visible_at(n) ? ",1," : ",0,";
        buf += to_string(actions[i]);
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

void write_events_csv(std::ostream& out, const TrajectoryLog& log) {
    out << "generated_at,delivered_at,success,kind\n";
    for (const UpdateEvent& e : log.update_events)
        out << e.generated_at << ',' << e.delivered_at << ',' << (e.success ? 1 : 0) << ','
            << to_string(e.kind) << '\n';
}

Policy read_policy_csv(std::istream& in, const StateSpace& space) {
    Policy policy(space.size(), Action::Idle);
    read_state_table(in, space, "action", [&](std::size_t idx, const std::string& text, long line_no) {
        try {
            policy[idx] = parse_action(text);
        } catch (const std::exception&) {
            throw ConfigError("line " + std::to_string(line_no) + ": unknown action '" + text + "'");
        }
        if (!is_feasible(space[idx].mode, policy[idx], space.params()))
            throw ConfigError("line " + std::to_string(line_no) + ": " + text + " is infeasible at " +
                              to_string(space[idx]));
    });
    return policy;
}

ValueFunction read_values_csv(std::istream& in, const StateSpace& space) {
    ValueFunction values(space.size(), 0.0);
    read_state_table(in, space, "value", [&](std::size_t idx, const std::string& text, long line_no) {
        values[idx] = parse_field<double>(text, "value", line_no);
    });
    return values;
}

Policy load_policy_file(const fs::path& path, const StateSpace& space) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open policy file " + path.string());
    try {
        return read_policy_csv(in, space);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

json summary_to_json(const TrajectorySummary& s) {
    json counts = json::object(), freq = json::object(), levels = json::object();
    for (const auto& [a, c] : s.action_counts) counts[std::string(to_string(a))] = c;
    for (const auto& [a, f] : s.action_frequency) freq[std::string(to_string(a))] = num(f);
    for (const auto& [level, c] : s.reset_levels) levels[std::to_string(level)] = c;
    return {{"time_average_aoinf", num(s.time_average_aoinf)},
            {"slots", s.slots},
            {"action_counts", counts},
            {"action_frequency", freq},
            {"reset_levels", levels},
            {"successful_deliveries", s.successful_deliveries},
            {"link_actions", s.link_actions},
            {"feasible_link_fraction", num(s.feasible_link_fraction)}};
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg) {
    if (!cfg.sweep) throw ConfigError("sweep requested but the config has no sweep block");
    std::vector<SweepRow> rows;
    for (double pt : cfg.sweep->p_tx)
        for (double po : cfg.sweep->p_offload) {
            SweepRow row;
            row.p_tx = pt;
            row.p_offload = po;
            rows.push_back(row);
        }

    parallel_for(rows.size(), cfg.resolved_workers(), [&](std::size_t i) {
        SweepRow& row = rows[i];
        try {
            ModelParams p = cfg.model;
            p.p_tx = row.p_tx;
            p.p_offload = row.p_offload;
            p.validate();
            SolveConfig solver = cfg.solver;
            solver.threads = 1;
            const StateSpace space(p);
            const TransformedKernel kernel = build_transformed_kernel(space, solver.transform);
            const SolveReport report = rvi_solve(space, kernel, solver);
            row.converged = report.converged;
            auto gain = [&](const DecisionRule& rule) {
                return evaluate_policy_exact(rule, space, cfg.start_state).average_aoinf_per_slot;
            };
            row.gain_opt = gain(DecisionRule(report.policy));
            row.gain_random = gain(random_policy(space));
            row.gain_onboard = gain(DecisionRule(onboard_policy(space)));
            row.gain_offload = gain(DecisionRule(offload_policy(space)));
            row.ok = report.converged;
            if (!report.converged) row.error = "solver did not converge";
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    });
    return rows;
}

std::vector<CheckResult> run_verify(const ExperimentConfig& cfg, const VerifyOptions& opts) {
    std::vector<CheckResult> checks;
    const StateSpace space(cfg.model);
    const SmdpKernel smdp = build_smdp_kernel(space);

    // Reference solve, on a corrupted kernel in fault-injection mode.
    TransformedKernel kernel = build_transformed_kernel(space, cfg.solver.transform);
    if (opts.fault) inject_fault(kernel, *opts.fault);
    const SolveReport report = rvi_solve(space, kernel, cfg.solver);
    const double rho = report.gain_per_slot;

    {
        CheckResult c{"convergence", report.converged, report.final_span(), report.iterations, ""};
        c.detail = "span " + format_number(report.final_span()) + " after " +
                   std::to_string(report.iterations) + " iterations; bracket width " +
                   format_number(report.bracket_width());
        checks.push_back(c);
    }
    {
        const EvaluationResult exact = evaluate_policy_exact(report.policy, space, cfg.start_state);
        const double diff = std::abs(exact.average_aoinf_per_slot - rho);
        checks.push_back({"solver_oracle_agreement", diff <= opts.agreement_tolerance, diff, 1,
                          "solver " + format_number(rho) + " vs exact " +
                              format_number(exact.average_aoinf_per_slot)});
    }
    {
        const MonotonicityReport m = check_monotonicity(space, report.values, opts.structure_tolerance);
        checks.push_back({"monotonicity", m.ok(), m.worst_excess, static_cast<long>(m.violations.size()),
                          "value nondecreasing in aoinf for every mode"});
    }
    {
        const ThresholdReport t = check_tx_compute_threshold(space, report.values, rho, opts.structure_tolerance);
        double worst = 0.0;
        for (const auto& v : t.violations) worst = std::max(worst, std::abs(v.amount));
        checks.push_back({"tx_compute_threshold", t.ok(), worst, static_cast<long>(t.violations.size()),
                          std::to_string(t.checked_pairs) + " (aoinf, phase) pairs checked"});
    }
    {
        CheckResult c{"theta_invariance", true, 0.0, 0, ""};
        std::optional<Policy> first_policy;
        std::optional<double> first_gain;
        for (double theta : opts.thetas) {
            SolveConfig sc = cfg.solver;
            sc.transform.theta = theta;
            TransformedKernel k = build_transformed_kernel(space, sc.transform);
            if (opts.fault) inject_fault(k, *opts.fault);
            const SolveReport r = rvi_solve(space, k, sc);
            if (!r.converged) {
                c.passed = false;
                c.detail += "theta " + format_number(theta) + " did not converge; ";
            }
            if (!first_policy) {
                first_policy = r.policy;
                first_gain = r.gain_per_slot;
                continue;
            }
            long differ = 0;
            for (std::size_t s = 0; s < space.size(); ++s) differ += r.policy[s] != (*first_policy)[s];
            const double gap = std::abs(r.gain_per_slot - *first_gain);
            c.count += differ;
            c.worst = std::max(c.worst, gap);
            if (differ > 0 || gap > opts.agreement_tolerance) c.passed = false;
        }
        std::string thetas;
        for (double t : opts.thetas) thetas += (thetas.empty() ? "" : ", ") + format_number(t);
        c.detail += "thetas {" + thetas + "}; count = states with differing actions, worst = gain gap";
        checks.push_back(c);
    }
    {
        const RatioFormResidual r = max_ratio_form_residual(smdp, report.values, rho);
        checks.push_back({"ratio_form_residual", r.max_residual <= opts.residual_tolerance, r.max_residual,
                          static_cast<long>(space.size()),
                          "worst state " + to_string(space[r.worst_state])});
    }
    {
        const CertificateReport cert = improvement_certificate(report.policy, space, opts.structure_tolerance);
        checks.push_back({"improvement_certificate", cert.ok(), cert.worst_improvement,
                          static_cast<long>(cert.violations.size()),
                          "exact gain " + format_number(cert.gain)});
    }
    {
        double worst = 0.0;
        for (std::size_t s = 0; s < space.size(); ++s)
            for (const auto& row : smdp.rows(s)) {
                double sum = 0.0;
                for (const IndexedMass& m : smdp.entries(row)) sum += m.prob;
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        for (std::size_t s = 0; s < space.size(); ++s)
            for (const auto& row : kernel.rows(s)) {
                double sum = 0.0;
                for (const IndexedMass& m : kernel.entries(row)) sum += m.prob;
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        checks.push_back({"row_sums", worst <= 1e-12, worst,
                          static_cast<long>(smdp.num_rows() + kernel.num_rows()),
                          "SMDP and transformed rows sum to 1"});
    }
    return checks;
}

int cmd_solve(const ExperimentConfig& cfg, std::ostream& log) {
    const StateSpace space(cfg.model);
    const TransformedKernel kernel = build_transformed_kernel(space, cfg.solver.transform);
    const auto t0 = std::chrono::steady_clock::now();
    const SolveReport report = rvi_solve(space, kernel, cfg.solver);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json doc = solve_report_json(report, cfg.solver);
    doc["states"] = space.size();
    doc["seconds"] = num(seconds);
    doc["exact_gain"] = num(evaluate_policy_exact(report.policy, space, cfg.start_state).average_aoinf_per_slot);
    doc["model"] = params_to_json(cfg.model);
    write_json(cfg.output_dir / "report.json", doc);
    write_policy_outputs(cfg, space, report);

    log << "solve: gain_per_slot " << format_number(report.gain_per_slot) << ", " << report.iterations
        << " iterations, span " << format_number(report.final_span())
        << (report.converged ? "" : " (NOT CONVERGED)") << '\n';
    return report.converged ? 0 : 1;
}

int cmd_evaluate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log) {
    const StateSpace space(cfg.model);
    json doc = json::object();
    bool ok = true;
    if (opts.policy_file) {
        const Policy policy = load_policy_file(*opts.policy_file, space);
        doc["policy_file"] = evaluation_json(evaluate_policy_exact(policy, space, cfg.start_state));
    } else {
        const SolveReport report = rvi_solve(space, build_transformed_kernel(space, cfg.solver.transform), cfg.solver);
        ok = report.converged;
        doc["solver"] = solve_report_json(report, cfg.solver);
        doc["optimal"] = evaluation_json(evaluate_policy_exact(report.policy, space, cfg.start_state));
        doc["random"] = evaluation_json(evaluate_policy_exact(random_policy(space), space, cfg.start_state));
        doc["onboard"] = evaluation_json(evaluate_policy_exact(onboard_policy(space), space, cfg.start_state));
        doc["offload"] = evaluation_json(evaluate_policy_exact(offload_policy(space), space, cfg.start_state));
    }
    doc["start_state"] = state_to_json(cfg.start_state);
    write_json(cfg.output_dir / "evaluation.json", doc);
    for (const auto& [name, e] : doc.items())
        if (e.is_object() && e.contains("average_aoinf_per_slot"))
            log << "evaluate: " << name << " " << e["average_aoinf_per_slot"].dump() << '\n';
    return ok ? 0 : 1;
}

int cmd_simulate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log) {
    if (!cfg.simulation) throw ConfigError("simulate requires a simulation block");
    const StateSpace space(cfg.model);
    bool ok = true;
    Policy policy;
    json doc = json::object();
    if (opts.policy_file) {
        policy = load_policy_file(*opts.policy_file, space);
        doc["policy_source"] = opts.policy_file->string();
    } else {
        const SolveReport report = rvi_solve(space, build_transformed_kernel(space, cfg.solver.transform), cfg.solver);
        ok = report.converged;
        policy = report.policy;
        doc["policy_source"] = "solve";
        doc["gain_per_slot"] = num(report.gain_per_slot);
    }

    std::vector<std::uint64_t> seeds = cfg.simulation->seeds;
    if (opts.seed) seeds = {*opts.seed};
    std::vector<TrajectorySummary> summaries(seeds.size());
    parallel_for(seeds.size(), cfg.resolved_workers(), [&](std::size_t i) {
        const SimulationConfig sc{cfg.simulation->horizon, cfg.simulation->warmup, seeds[i]};
        const TrajectoryLog tl = simulate(policy, space, cfg.start_state, sc);
        summaries[i] = summarize(tl);
        const std::string tag = "seed" + std::to_string(seeds[i]);
        if (cfg.write_csv) {
            if (cfg.simulation->write_trace)
                write_file(cfg.output_dir / ("trace_" + tag + ".csv"),
                           [&](std::ostream& o) { write_trace_csv(o, tl); });
            write_file(cfg.output_dir / ("events_" + tag + ".csv"),
                       [&](std::ostream& o) { write_events_csv(o, tl); });
        }
    });

    json runs = json::array();
    double mean = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        json s = summary_to_json(summaries[i]);
        s["seed"] = seeds[i];
        runs.push_back(std::move(s));
        mean += summaries[i].time_average_aoinf;
    }
    mean /= static_cast<double>(seeds.size());
    doc["horizon"] = cfg.simulation->horizon;
    doc["warmup"] = cfg.simulation->warmup;
    doc["runs"] = runs;
    doc["mean_time_average_aoinf"] = num(mean);
    write_json(cfg.output_dir / "summary.json", doc);
    log << "simulate: " << seeds.size() << " run(s), mean time-average AoInf " << format_number(mean) << '\n';
    return ok ? 0 : 1;
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
    const std::vector<SweepRow> rows = run_sweep(cfg);
    long failures = 0;
    for (const SweepRow& r : rows) failures += !r.ok;
    if (cfg.write_csv)
        write_file(cfg.output_dir / "sweep.csv", [&](std::ostream& o) {
            o << "p_tx,p_offload,gain_opt,gain_random,gain_onboard,gain_offload\n";
            for (const SweepRow& r : rows) {
                if (!r.ok) continue;
                o << format_number(r.p_tx) << ',' << format_number(r.p_offload) << ','
                  << format_number(r.gain_opt) << ',' << format_number(r.gain_random) << ','
                  << format_number(r.gain_onboard) << ',' << format_number(r.gain_offload) << '\n';
            }
        });
    json doc = json::object();
    json jrows = json::array(), failed = json::array();
    for (const SweepRow& r : rows) {
        if (!r.ok) {
            failed.push_back({{"p_tx", num(r.p_tx)}, {"p_offload", num(r.p_offload)}, {"error", r.error}});
            continue;
        }
        jrows.push_back({{"p_tx", num(r.p_tx)},
                         {"p_offload", num(r.p_offload)},
                         {"gain_opt", num(r.gain_opt)},
                         {"gain_random", num(r.gain_random)},
                         {"gain_onboard", num(r.gain_onboard)},
                         {"gain_offload", num(r.gain_offload)}});
    }
    doc["failures"] = failed;
    if (cfg.write_json) doc["rows"] = jrows;
    write_json(cfg.output_dir / "sweep.json", doc);
    log << "sweep: " << rows.size() - static_cast<std::size_t>(failures) << " of " << rows.size()
        << " grid points done\n";
    for (const SweepRow& r : rows)
        if (!r.ok)
            log << "  failed p_tx=" << format_number(r.p_tx) << " p_offload=" << format_number(r.p_offload)
                << ": " << r.error << '\n';
    return failures == 0 ? 0 : 1;
}

int cmd_verify(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log) {
    VerifyOptions vo;
    if (opts.inject_fault) vo.fault = KernelFault{};
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<CheckResult> checks = run_verify(cfg, vo);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool all = true;
    json jchecks = json::array();
    for (const CheckResult& c : checks) {
        all = all && c.passed;
        jchecks.push_back({{"name", c.name},
                           {"passed", c.passed},
                           {"count", c.count},
                           {"worst", num(c.worst)},
                           {"detail", c.detail}});
        log << (c.passed ? "PASS " : "FAIL ") << c.name << "  count=" << c.count
            << " worst=" << format_number(c.worst) << "  " << c.detail << '\n';
    }
    write_json(cfg.output_dir / "verify.json", {{"passed", all},
                                                {"fault_injected", opts.inject_fault},
                                                {"seconds", num(seconds)},
                                                {"checks", jchecks}});
    return all ? 0 : 1;
}

}  // namespace aoinf
