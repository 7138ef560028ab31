#include "pdd/cli/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

namespace pdd::cli {

Experiment parse_experiment(const std::string& name) {
    if (name == "cmac") return Experiment::cmac;
    if (name == "thp") return Experiment::thp;
    if (name == "toy") return Experiment::toy;
    throw ConfigError("unknown experiment '" + name + "' (expected cmac, thp or toy)");
}

std::string to_string(Experiment e) {
    switch (e) {
        case Experiment::cmac: return "cmac";
        case Experiment::thp: return "thp";
        case Experiment::toy: return "toy";
    }
    return "cmac";
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    }
    return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
    long long v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
    }
    return v;
}

int parse_int(const std::string& key, const std::string& text) {
    const long long v = parse_integer(key, text);
    if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("config key '" + key + "': integer out of range");
    return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

Field real(std::string key, double RunConfig::*member) {
    return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_double(key, v); },
            [member](const RunConfig& c) { return format_double(c.*member); }};
}

template <class Get>
Field real_ref(std::string key, Get ref) {
    return {key, [key, ref](RunConfig& c, const std::string& v) { ref(c) = parse_double(key, v); },
            [ref](const RunConfig& c) { return format_double(ref(c)); }};
}

template <class Get>
Field int_ref(std::string key, Get ref) {
    return {key, [key, ref](RunConfig& c, const std::string& v) { ref(c) = parse_int(key, v); },
            [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

template <class Get>
Field bool_ref(std::string key, Get ref) {
    return {key, [key, ref](RunConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); },
            [ref](const RunConfig& c) { return std::string(ref(c) ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"run.experiment", [](RunConfig& c, const std::string& v) { c.experiment = parse_experiment(v); },
                     [](const RunConfig& c) { return to_string(c.experiment); }});
        f.push_back({"run.seed",
                     [](RunConfig& c, const std::string& v) {
                         const long long s = parse_integer("run.seed", v);
                         if (s < 0) throw ConfigError("config key 'run.seed': must be nonnegative");
                         c.solver.seed = static_cast<std::uint64_t>(s);
                     },
                     [](const RunConfig& c) { return std::to_string(c.solver.seed); }});
        f.push_back(int_ref("run.workers", [](auto& c) -> auto& { return c.solver.workers; }));

        f.push_back(int_ref("solver.batch", [](auto& c) -> auto& { return c.solver.batch; }));
        f.push_back(int_ref("solver.max_iters", [](auto& c) -> auto& { return c.solver.max_iters; }));
        f.push_back(real_ref("solver.feas_tolerance", [](auto& c) -> auto& { return c.solver.feas_tolerance; }));
        f.push_back(real_ref("solver.stop_tolerance", [](auto& c) -> auto& { return c.solver.stop_tolerance; }));
        f.push_back(int_ref("solver.stop_window", [](auto& c) -> auto& { return c.solver.stop_window; }));
        f.push_back(int_ref("solver.eval_batch", [](auto& c) -> auto& { return c.solver.eval_batch; }));
        f.push_back(real("solver.tau", &RunConfig::tau));
        f.push_back(real("solver.lambda_cap", &RunConfig::lambda_cap));
        f.push_back(real("solver.start_lambda", &RunConfig::start_lambda));
        f.push_back(real_ref("solver.gap_tolerance", [](auto& c) -> auto& { return c.solver.barrier.gap_tolerance; }));

        f.push_back(real_ref("schedule.rho_scale", [](auto& c) -> auto& { return c.solver.schedule.rho_scale; }));
        f.push_back(real_ref("schedule.rho_shift", [](auto& c) -> auto& { return c.solver.schedule.rho_shift; }));
        f.push_back(
            real_ref("schedule.rho_exponent", [](auto& c) -> auto& { return c.solver.schedule.rho_exponent; }));
        f.push_back(
            real_ref("schedule.gamma_scale", [](auto& c) -> auto& { return c.solver.schedule.gamma_scale; }));
        f.push_back(
            real_ref("schedule.gamma_shift", [](auto& c) -> auto& { return c.solver.schedule.gamma_shift; }));

        f.push_back(int_ref("cmac.N", [](auto& c) -> auto& { return c.cmac.N; }));
        f.push_back(real_ref("cmac.P_db", [](auto& c) -> auto& { return c.cmac.P_db; }));
        f.push_back(real_ref("cmac.Gamma", [](auto& c) -> auto& { return c.cmac.Gamma; }));
        f.push_back({"cmac.law", [](RunConfig& c, const std::string& v) { c.cmac.law = cmac::parse_gain_law(v); },
                     [](const RunConfig& c) {
                         return std::string(c.cmac.law == cmac::GainLaw::gamma ? "gamma" : "exponential");
                     }});
        f.push_back(real_ref("cmac.gain_mean", [](auto& c) -> auto& { return c.cmac.gain_mean; }));
        f.push_back(real_ref("cmac.gain_shape", [](auto& c) -> auto& { return c.cmac.gain_shape; }));
        f.push_back(real_ref("cmac.power_cap", [](auto& c) -> auto& { return c.cmac.power_cap; }));

        f.push_back(int_ref("thp.M", [](auto& c) -> auto& { return c.thp.dims.M; }));
        f.push_back(int_ref("thp.S", [](auto& c) -> auto& { return c.thp.dims.S; }));
        f.push_back(int_ref("thp.K", [](auto& c) -> auto& { return c.thp.dims.K; }));
        f.push_back(int_ref("thp.J", [](auto& c) -> auto& { return c.thp.J; }));
        f.push_back(int_ref("thp.paths", [](auto& c) -> auto& { return c.thp.paths; }));
        f.push_back({"thp.rate_target",
                     [](RunConfig& c, const std::string& v) {
                         const double g = parse_double("thp.rate_target", v);
                         c.thp.gamma = Vector::Constant(1, g);
                     },
                     [](const RunConfig& c) {
                         return format_double(c.thp.gamma.size() == 0 ? 1.0 : c.thp.gamma[0]);
                     }});

        f.push_back(int_ref("toy.dim", [](auto& c) -> auto& { return c.toy.dim; }));
        f.push_back(real_ref("toy.mean", [](auto& c) -> auto& { return c.toy.mean; }));
        f.push_back(real_ref("toy.target", [](auto& c) -> auto& { return c.toy.target; }));
        f.push_back(real_ref("toy.noise", [](auto& c) -> auto& { return c.toy.noise; }));
        f.push_back(real_ref("toy.box", [](auto& c) -> auto& { return c.toy.box; }));

        f.push_back(int_ref("baseline.samples", [](auto& c) -> auto& { return c.baseline_samples; }));
        f.push_back(bool_ref("baseline.ellipsoid", [](auto& c) -> auto& { return c.baseline_ellipsoid; }));
        f.push_back(bool_ref("baseline.short_term", [](auto& c) -> auto& { return c.baseline_short_term; }));

        f.push_back(bool_ref("output.timing", [](auto& c) -> auto& { return c.timing; }));
        f.push_back(bool_ref("output.plot_data", [](auto& c) -> auto& { return c.plot_data; }));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& key) {
    for (const Field& f : fields()) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

void validate(RunConfig& c) {
    if (c.solver.batch < 1) throw ConfigError("solver.batch must be >= 1");
    if (c.solver.max_iters < 1) throw ConfigError("solver.max_iters must be >= 1");
    if (!(c.solver.feas_tolerance > 0.0)) throw ConfigError("solver.feas_tolerance must be positive");
    if (!(c.solver.stop_tolerance > 0.0)) throw ConfigError("solver.stop_tolerance must be positive");
    if (c.solver.stop_window < 1) throw ConfigError("solver.stop_window must be >= 1");
    if (c.solver.eval_batch < 1) throw ConfigError("solver.eval_batch must be >= 1");
    if (c.solver.workers < 1) throw ConfigError("run.workers must be >= 1");
    if (!(c.tau > 0.0)) throw ConfigError("solver.tau must be positive");
    if (!(c.lambda_cap > 0.0)) throw ConfigError("solver.lambda_cap must be positive");
    if (!(c.start_lambda >= 0.0 && c.start_lambda <= c.lambda_cap)) {
        throw ConfigError("solver.start_lambda must lie in [0, solver.lambda_cap]");
    }
    if (c.baseline_samples < 1) throw ConfigError("baseline.samples must be >= 1");
    if (c.thp.gamma.size() == 1) c.thp.gamma = Vector::Constant(c.thp.dims.K, c.thp.gamma[0]);
    try {
        switch (c.experiment) {
            case Experiment::cmac: c.cmac.validate(); break;
            case Experiment::thp: c.thp.validate(); break;
            case Experiment::toy: c.toy.validate(); break;
        }
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

std::string RunConfig::canonical() const {
    std::map<std::string, std::string> sorted;
    for (const Field& f : fields()) sorted[f.key] = f.get(*this);
    sorted.erase("run.workers");  // results do not depend on the worker count
    std::ostringstream out;
    for (const auto& [k, v] : sorted) out << k << " = " << v << '\n';
    return out.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical()); }

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("config line " + std::to_string(number) + ": empty key or value");
        }
        if (!out.emplace(key, value).second) throw ConfigError("duplicate config key '" + key + "'");
    }
    return out;
}

RunConfig default_config(Experiment e) {
    RunConfig c;
    c.experiment = e;
    c.solver.seed = 1;
    switch (e) {
        case Experiment::cmac: c.solver.stop_tolerance = 1e-2; break;
        case Experiment::thp: c.solver.max_iters = 1000; break;
        case Experiment::toy: c.solver.stop_tolerance = 1e-7; break;
    }
    return c;
}

RunConfig resolve_config(const std::map<std::string, std::string>& keys, const Overrides& overrides) {
    for (const auto& [key, value] : keys) {
        if (!find_field(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    Experiment e = Experiment::cmac;
    if (overrides.experiment) {
        e = parse_experiment(*overrides.experiment);
    } else if (const auto it = keys.find("run.experiment"); it != keys.end()) {
        e = parse_experiment(it->second);
    }
    RunConfig c = default_config(e);
    for (const auto& [key, value] : keys) find_field(key)->set(c, value);
    c.experiment = e;
    if (overrides.seed) c.solver.seed = *overrides.seed;
    if (overrides.workers) c.solver.workers = *overrides.workers;
    if (overrides.max_iters) c.solver.max_iters = *overrides.max_iters;
    validate(c);
    return c;
}

}  // namespace pdd::cli
