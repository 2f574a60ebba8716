#include "mgp/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mgp/diagnostics.hpp"
#include "mgp/error.hpp"
#include "mgp/format.hpp"
#include "mgp/parallel.hpp"
#include "mgp/version.hpp"

namespace mgp {

using nlohmann::json;

namespace {

constexpr std::uint64_t kDataTag = 1;
constexpr std::uint64_t kEngineTag = 2;
constexpr std::uint64_t kBetaTag = 3;
constexpr std::uint64_t kPopulationTag = 4;
constexpr std::uint64_t kPruneTag = 5;
constexpr std::uint64_t kDiagnosticTag = 6;
constexpr std::size_t kPruneSample = 10000;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ValidationError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + ": field '" + key + "' has the wrong type");
    }
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) throw ValidationError(where + ": missing field '" + key + "'");
    return get<T>(j, key, T{}, where);
}

std::size_t count_field(const json& j, const char* key, std::size_t fallback, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ValidationError(where + ": field '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

ColumnSpec parse_column(const json& j, const std::string& where) {
    check_keys(j, {"name", "kind", "levels"}, where);
    ColumnSpec c;
    c.name = require<std::string>(j, "name", where);
    const auto kind = get<std::string>(j, "kind", "continuous", where);
    if (kind == "continuous") {
        c.kind = ColumnKind::continuous;
    } else if (kind == "categorical") {
        c.kind = ColumnKind::categorical;
        if (j.contains("levels")) {
            c.levels = get<std::vector<std::string>>(j, "levels", {}, where);
            c.infer_levels = false;
        }
    } else {
        throw ValidationError(where + ": column kind must be continuous or categorical");
    }
    return c;
}

SetupConfig parse_setup(const json& j, std::size_t index, const std::filesystem::path& base_dir) {
    const std::string where = "setups[" + std::to_string(index) + "]";
    const auto kind = require<std::string>(j, "kind", where);
    SetupConfig s;
    s.name = require<std::string>(j, "name", where);
    if (kind == "csv") {
        check_keys(j, {"name", "kind", "path", "features", "response", "n_train", "strata"}, where);
        s.synthetic = false;
        s.path = require<std::string>(j, "path", where);
        if (s.path.is_relative() && !base_dir.empty()) s.path = base_dir / s.path;
        if (!j.contains("features") || !j.at("features").is_array() || j.at("features").empty()) {
            throw ValidationError(where + ": 'features' must be a non-empty array");
        }
        for (std::size_t k = 0; k < j.at("features").size(); ++k) {
            s.schema.features.push_back(parse_column(j.at("features")[k], where + ".features[" + std::to_string(k) + "]"));
        }
        if (!j.contains("response")) throw ValidationError(where + ": missing field 'response'");
        s.schema.response = parse_column(j.at("response"), where + ".response");
        s.n_train = count_field(j, "n_train", 0, where);
        if (s.n_train == 0) throw ValidationError(where + ": n_train must be positive");
        if (j.contains("strata")) {
            for (const auto& st : j.at("strata")) {
                check_keys(st, {"column", "bins"}, where + ".strata");
                s.strata.push_back({require<std::string>(st, "column", where + ".strata"),
                                    count_field(st, "bins", 0, where + ".strata")});
            }
        }
        return s;
    }
    check_keys(j, {"name", "kind", "dim", "n", "noise_sd", "df", "s_left", "s_mid", "strength", "gmm_location", "beta"},
               where);
    auto& syn = s.synthetic_setup;
    syn.name = s.name;
    syn.kind = parse_setup_kind(kind);
    syn.dim = count_field(j, "dim", 10, where);
    syn.n = count_field(j, "n", 0, where);
    syn.noise_sd = get<double>(j, "noise_sd", 1.0, where);
    syn.df = get<int>(j, "df", 5, where);
    syn.s_left = get<double>(j, "s_left", 0.25, where);
    syn.s_mid = get<double>(j, "s_mid", 0.5, where);
    if (j.contains("strength")) {
        const auto strength = get<std::string>(j, "strength", "", where);
        if (strength == "s1") {
            syn.s_left = 0.25;
            syn.s_mid = 0.5;
        } else if (strength == "s2") {
            syn.s_left = 0.05;
            syn.s_mid = 0.25;
        } else if (strength == "s3") {
            syn.s_left = 0.01;
            syn.s_mid = 0.1;
        } else {
            throw ValidationError(where + ": strength must be s1, s2 or s3");
        }
    }
    syn.gmm_location = get<double>(j, "gmm_location", 0.0, where);
    if (j.contains("beta")) {
        const auto beta = get<std::vector<double>>(j, "beta", {}, where);
        syn.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
        s.beta_given = true;
        syn.validate();
    } else {
        syn.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(syn.dim));
        syn.validate();
    }
    return s;
}

RuleConfig parse_rule(const json& j, std::size_t index) {
    const std::string where = "rules[" + std::to_string(index) + "]";
    check_keys(j, {"name", "kind", "bandwidth", "plugin_model", "prior_mean", "prior_variance", "noise_variance",
                   "probs", "binarize_at", "endpoint", "max_pipeline", "forward_steps"},
               where);
    RuleConfig r;
    r.kind = parse_rule_kind(require<std::string>(j, "kind", where));
    r.name = get<std::string>(j, "name", std::string(to_string(r.kind)), where);
    r.bandwidth = get<double>(j, "bandwidth", 0.8, where);
    const auto model = get<std::string>(j, "plugin_model", "auto", where);
    if (model == "auto") {
        r.plugin_model = PluginModel::automatic;
    } else if (model == "gaussian_linear") {
        r.plugin_model = PluginModel::gaussian_linear;
    } else if (model == "logistic") {
        r.plugin_model = PluginModel::logistic;
    } else {
        throw ValidationError(where + ": plugin_model must be auto, gaussian_linear or logistic");
    }
    r.prior_mean = get<double>(j, "prior_mean", 0.0, where);
    r.prior_variance = get<double>(j, "prior_variance", 1.0, where);
    r.noise_variance = get<double>(j, "noise_variance", 1.0, where);
    r.probs = get<std::vector<double>>(j, "probs", {0.5, 0.5}, where);
    if (j.contains("binarize_at") && !j.at("binarize_at").is_null()) r.binarize_at = get<double>(j, "binarize_at", 0.0, where);
    r.endpoint = get<std::string>(j, "endpoint", "", where);
    r.max_pipeline = count_field(j, "max_pipeline", 1, where);
    r.forward_steps = count_field(j, "forward_steps", 0, where);
    r.validate();
    return r;
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string canonical_of(json j) {
    j.erase("workers");
    j.erase("output_dir");
    return j.dump();
}

std::string join(const std::vector<double>& values) {
    std::string out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (k) out += ';';
        out += format_number(values[k]);
    }
    return out;
}

std::string safe_name(const std::string& s) {
    std::string out = s;
    for (char& c : out) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    }
    return out;
}

bool categorical_setup(const ExperimentConfig& config, const SetupConfig& s, std::size_t* classes) {
    if (s.synthetic) {
        *classes = s.synthetic_setup.binary() ? 2 : 0;
        return s.synthetic_setup.binary();
    }
    if (s.schema.response.kind != ColumnKind::categorical) {
        *classes = 0;
        return false;
    }
    if (!s.schema.response.infer_levels) {
        *classes = s.schema.response.levels.size();
    } else {
        *classes = load_csv(s.path, s.schema).num_classes();
    }
    (void)config;
    return true;
}

const SetupConfig& find_setup(const ExperimentConfig& c, const std::string& name, std::size_t* index) {
    for (std::size_t i = 0; i < c.setups.size(); ++i) {
        if (c.setups[i].name == name) {
            *index = i;
            return c.setups[i];
        }
    }
    throw ValidationError("unknown setup '" + name + "'");
}

const RuleConfig& find_rule(const ExperimentConfig& c, const std::string& name, std::size_t* index) {
    for (std::size_t i = 0; i < c.rules.size(); ++i) {
        if (c.rules[i].name == name) {
            *index = i;
            return c.rules[i];
        }
    }
    throw ValidationError("unknown rule '" + name + "'");
}

void ensure_dir(const std::filesystem::path& p) {
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw Error("cannot create " + p.string() + ": " + ec.message());
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json schema_document() {
    return json{
        {"results.csv",
         {{"setup", "setup name"},
          {"rule", "rule name"},
          {"repetitions", "repetitions with a valid joint credible set"},
          {"invalid_repetitions", "repetitions without one (too few usable draws, zero variance, or an error)"},
          {"p", "dimension of theta"},
          {"coverage", "fraction of valid repetitions whose joint set contains theta(F_0)"},
          {"size_median", "median over repetitions of the trace of the posterior covariance"},
          {"marginal_coverage", "per-coordinate marginal interval coverage, ';'-separated in coordinate order"},
          {"winkler_median", "per-coordinate median Winkler score, ';'-separated in coordinate order"},
          {"failed_trajectories", "trajectories that raised an error, summed over repetitions"},
          {"nonconverged_draws", "draws whose optimizer stopped above tolerance, summed over repetitions"},
          {"config_hash", "hash of the canonical configuration"},
          {"version", "artifact version"}}},
        {"marginals.csv",
         {{"setup", "setup name"},
          {"rule", "rule name"},
          {"coordinate", "theta coordinate name"},
          {"theta0", "population value"},
          {"marginal_coverage", "coverage of the marginal interval"},
          {"winkler_median", "median Winkler score"}}},
        {"draws/<setup>__<rule>__rep<r>.csv",
         {{"trajectory", "draw index"},
          {"<coordinate>", "theta coordinates"},
          {"converged", "1 if the optimizer met its tolerance"},
          {"failed", "1 if the trajectory raised an error"}}},
        {"diagnostics/trace__<setup>__<rule>.csv",
         {{"step", "checkpoint m"},
          {"value", "|theta(F_n) - theta(F_m)|_1 / p"},
          {"trajectory", "trajectory index, or 'mean' for the average"}}},
        {"diagnostics/acid__<setup>__<rule>.csv",
         {{"step", "i"},
          {"term", "sum_y |E p_{i+1}(y|x*) - p_i(y|x*)|"},
          {"standard_error", "Monte Carlo standard error of the term"},
          {"cumulative", "running sum of terms"}}},
        {"diagnostics/concentration__<setup>__<rule>.csv",
         {{"n", "sample size"},
          {"coordinate", "theta coordinate"},
          {"mean", "posterior mean"},
          {"sd", "posterior standard deviation (empty with fewer than two draws)"}}}};
}

struct RepOutcome {
    bool valid = false;
    bool covered = false;
    double size = 0.0;
    std::vector<bool> marginal_covered;
    std::vector<double> winkler;
    std::size_t failed = 0;
    std::size_t nonconverged = 0;
    std::string error;
};

}  // namespace

std::string ExperimentConfig::hash() const { return fnv1a_hex(canonical); }

std::string ExperimentConfig::run_id() const { return safe_name(name) + "-" + hash().substr(0, 12); }

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    check_keys(j, {"name", "seed", "alpha", "repetitions", "workers", "output_dir", "engine", "functional", "uq",
                   "setups", "rules", "diagnostics"},
               "config");
    ExperimentConfig c;
    c.name = require<std::string>(j, "name", "config");
    if (c.name.empty()) throw ValidationError("config: name must not be empty");
    c.seed = get<std::uint64_t>(j, "seed", 0, "config");
    c.alpha = get<double>(j, "alpha", 0.05, "config");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ValidationError("config: alpha must lie in (0, 1)");
    c.repetitions = count_field(j, "repetitions", 100, "config");
    if (c.repetitions == 0) throw ValidationError("config: repetitions must be at least 1");
    c.workers = std::max<std::size_t>(count_field(j, "workers", 1, "config"), 1);
    c.output_dir = get<std::string>(j, "output_dir", "out", "config");
    if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;

    if (j.contains("engine")) {
        const auto& e = j.at("engine");
        check_keys(e, {"forward_steps", "draws", "checkpoint_stride", "refit_repeats", "save_draws"}, "engine");
        if (e.contains("forward_steps") && !e.at("forward_steps").is_null()) {
            c.forward_steps = count_field(e, "forward_steps", 0, "engine");
        }
        c.draws = count_field(e, "draws", 100, "engine");
        c.checkpoint_stride = count_field(e, "checkpoint_stride", 0, "engine");
        c.refit_repeats = count_field(e, "refit_repeats", 5, "engine");
        c.save_draws = get<bool>(e, "save_draws", false, "engine");
    }
    if (c.draws < 2) throw ValidationError("engine: draws must be at least 2");
    if (c.refit_repeats == 0) throw ValidationError("engine: refit_repeats must be positive");
    if (j.contains("functional")) {
        const auto& f = j.at("functional");
        check_keys(f, {"condition_threshold", "damping"}, "functional");
        c.condition_threshold = get<double>(f, "condition_threshold", 1e8, "functional");
        c.damping = get<double>(f, "damping", 1e-8, "functional");
        if (!(c.condition_threshold > 1.0) || !(c.damping >= 0.0)) {
            throw ValidationError("functional: condition_threshold must exceed 1 and damping be non-negative");
        }
    }
    if (j.contains("uq")) {
        const auto& u = j.at("uq");
        check_keys(u, {"cutoff"}, "uq");
        const auto cutoff = get<std::string>(u, "cutoff", "empirical", "uq");
        if (cutoff == "empirical") {
            c.cutoff = CutoffMode::empirical;
        } else if (cutoff == "chi_squared") {
            c.cutoff = CutoffMode::chi_squared;
        } else {
            throw ValidationError("uq: cutoff must be empirical or chi_squared");
        }
    }

    if (!j.contains("setups") || !j.at("setups").is_array() || j.at("setups").empty()) {
        throw ValidationError("config: 'setups' must be a non-empty array");
    }
    if (!j.contains("rules") || !j.at("rules").is_array() || j.at("rules").empty()) {
        throw ValidationError("config: 'rules' must be a non-empty array");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < j.at("setups").size(); ++i) {
        c.setups.push_back(parse_setup(j.at("setups")[i], i, base_dir));
        if (!names.insert(c.setups.back().name).second) {
            throw ValidationError("config: duplicate setup name '" + c.setups.back().name + "'");
        }
    }
    names.clear();
    for (std::size_t i = 0; i < j.at("rules").size(); ++i) {
        c.rules.push_back(parse_rule(j.at("rules")[i], i));
        if (!names.insert(c.rules.back().name).second) {
            throw ValidationError("config: duplicate rule name '" + c.rules.back().name + "'");
        }
    }

    if (j.contains("diagnostics")) {
        const auto& d = j.at("diagnostics");
        check_keys(d, {"trace", "acid", "concentration"}, "diagnostics");
        std::size_t idx = 0;
        for (const auto& t : d.value("trace", json::array())) {
            const std::string where = "diagnostics.trace";
            check_keys(t, {"setup", "rule", "draws", "checkpoint_stride", "forward_steps", "ratio"}, where);
            TraceSpec s;
            s.setup = require<std::string>(t, "setup", where);
            s.rule = require<std::string>(t, "rule", where);
            s.draws = count_field(t, "draws", 20, where);
            s.checkpoint_stride = count_field(t, "checkpoint_stride", 50, where);
            if (t.contains("forward_steps")) s.forward_steps = count_field(t, "forward_steps", 0, where);
            s.ratio = get<double>(t, "ratio", 0.1, where);
            if (s.draws == 0 || s.checkpoint_stride == 0) throw ValidationError(where + ": draws and stride must be positive");
            find_setup(c, s.setup, &idx);
            find_rule(c, s.rule, &idx);
            c.traces.push_back(s);
        }
        for (const auto& a : d.value("acid", json::array())) {
            const std::string where = "diagnostics.acid";
            check_keys(a, {"setup", "rule", "x_star", "horizon_steps", "mc_draws"}, where);
            AcidSpec s;
            s.setup = require<std::string>(a, "setup", where);
            s.rule = require<std::string>(a, "rule", where);
            if (a.contains("x_star")) s.x_star = get<std::vector<double>>(a, "x_star", {}, where);
            s.horizon_steps = count_field(a, "horizon_steps", 100, where);
            s.mc_draws = count_field(a, "mc_draws", 500, where);
            if (s.mc_draws < 2) throw ValidationError(where + ": mc_draws must be at least 2");
            find_setup(c, s.setup, &idx);
            find_rule(c, s.rule, &idx);
            c.acids.push_back(s);
        }
        for (const auto& k : d.value("concentration", json::array())) {
            const std::string where = "diagnostics.concentration";
            check_keys(k, {"setup", "rule", "sizes", "forward_steps", "draws"}, where);
            ConcentrationSpec s;
            s.setup = require<std::string>(k, "setup", where);
            s.rule = require<std::string>(k, "rule", where);
            s.sizes = require<std::vector<std::size_t>>(k, "sizes", where);
            s.forward_steps = count_field(k, "forward_steps", 500, where);
            s.draws = count_field(k, "draws", 100, where);
            if (s.sizes.empty()) throw ValidationError(where + ": sizes must not be empty");
            if (!find_setup(c, s.setup, &idx).synthetic) throw ValidationError(where + ": needs a synthetic setup");
            find_rule(c, s.rule, &idx);
            c.concentrations.push_back(s);
        }
    }
    c.canonical = canonical_of(j);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, path.parent_path());
}

ExperimentConfig apply_overrides(ExperimentConfig config, const RunOptions& options) {
    if (options.workers) config.workers = std::max<std::size_t>(*options.workers, 1);
    if (options.output_dir) config.output_dir = *options.output_dir;
    if (options.seed_override) {
        config.seed = *options.seed_override;
        json j = json::parse(config.canonical);
        j["seed"] = config.seed;
        config.canonical = j.dump();
    }
    return config;
}

void check_compatibility(const ExperimentConfig& config) {
    for (const auto& s : config.setups) {
        std::size_t classes = 0;
        const bool categorical = categorical_setup(config, s, &classes);
        for (const auto& r : config.rules) {
            const std::string pair = "setup '" + s.name + "' with rule '" + r.name + "': ";
            if (r.kind == RuleKind::copula && categorical && classes > 2) {
                throw ValidationError(pair + "copula rule is not applied to multinomial responses");
            }
            if (r.kind == RuleKind::conjugate && categorical) throw ValidationError(pair + "conjugate rule needs a continuous response");
            if (r.kind == RuleKind::plugin && r.plugin_model != PluginModel::automatic &&
                (r.plugin_model == PluginModel::logistic) != categorical) {
                throw ValidationError(pair + "plug-in model does not match the response");
            }
            const bool mock = r.kind == RuleKind::mock_constant || r.kind == RuleKind::mock_drifting ||
                              r.kind == RuleKind::mock_polya;
            if (mock && !categorical) throw ValidationError(pair + "mock rules produce class labels only");
            if (mock && r.kind != RuleKind::mock_constant && classes != 2) throw ValidationError(pair + "mock rule is binary");
            if (r.kind == RuleKind::mock_constant && r.probs.size() != classes) {
                throw ValidationError(pair + "probs length differs from the number of classes");
            }
        }
    }
}

DesignMatrix PreparedSetup::repetition_data(std::uint64_t master_seed, std::size_t setup_index, std::size_t rep) const {
    RngStream rng(derive_seed(master_seed, {kDataTag, setup_index, rep}), 0);
    if (config.synthetic) return encode(generate(config.synthetic_setup, rng), params);
    return encode(stratified_split(*population, config.n_train, config.strata, rng), params);
}

PreparedSetup prepare_setup(const ExperimentConfig& config, std::size_t index) {
    PreparedSetup p;
    p.config = config.setups.at(index);
    if (p.config.synthetic) {
        auto& syn = p.config.synthetic_setup;
        if (!p.config.beta_given) {
            RngStream rng(derive_seed(config.seed, {kBetaTag, index}), 0);
            syn.beta = draw_beta(syn.dim, rng);
        }
        p.params = analytic_standardization(syn);
        RngStream prune_rng(derive_seed(config.seed, {kPruneTag, index}), 0);
        const DesignMatrix sample = encode(generate(syn, prune_rng, kPruneSample), p.params);
        p.loss = LossSpec::for_design(sample, prune_collinear(sample.x, config.condition_threshold), config.damping);
        p.theta0 = population_theta(syn, p.loss, derive_seed(config.seed, {kPopulationTag, index}));
        p.coordinates = p.loss.coordinate_names(sample.column_names);
        p.num_classes = sample.num_classes;
    } else {
        p.population = load_csv(p.config.path, p.config.schema);
        if (p.config.n_train > p.population->size()) {
            throw ValidationError("setup '" + p.config.name + "': n_train exceeds the population size");
        }
        p.params = fit_standardization(*p.population);
        const DesignMatrix full = encode(*p.population, p.params);
        p.loss = LossSpec::for_design(full, prune_collinear(full.x, config.condition_threshold), config.damping);
        p.theta0 = population_theta(full, p.loss);
        p.coordinates = p.loss.coordinate_names(full.column_names);
        p.num_classes = full.num_classes;
    }
    return p;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    check_compatibility(config);
    ExperimentResult result;
    result.run_dir = config.output_dir / config.run_id();
    ensure_dir(result.run_dir);
    if (config.save_draws) ensure_dir(result.run_dir / "draws");
    for (std::size_t s = 0; s < config.setups.size(); ++s) result.setups.push_back(prepare_setup(config, s));

    const std::size_t n_rules = config.rules.size();
    const std::size_t reps = config.repetitions;
    const std::size_t units = config.setups.size() * n_rules * reps;
    std::vector<RepOutcome> outcomes(units);

    parallel_for(units, config.workers, [&](std::size_t u) {
        const std::size_t s = u / (n_rules * reps);
        const std::size_t r = (u / reps) % n_rules;
        const std::size_t rep = u % reps;
        const PreparedSetup& setup = result.setups[s];
        const RuleConfig& rule = config.rules[r];
        RepOutcome& out = outcomes[u];
        try {
            const DesignMatrix data = setup.repetition_data(config.seed, s, rep);
            EngineConfig engine;
            engine.forward_steps = config.forward_steps;
            engine.draws = config.draws;
            engine.seed = derive_seed(config.seed, {kEngineTag, s, r, rep});
            engine.workers = 1;
            engine.refit_repeats = config.refit_repeats;
            const auto posterior = run_mgp(data, rule, setup.loss, engine);
            out.failed = posterior.failed_count();
            out.nonconverged = posterior.nonconverged_count();
            if (config.save_draws) {
                write_draws_csv(result.run_dir / "draws" /
                                    (safe_name(setup.config.name) + "__" + safe_name(rule.name) + "__rep" +
                                     std::to_string(rep) + ".csv"),
                                posterior);
            }
            const Eigen::MatrixXd draws = posterior.usable();
            const auto set = joint_credible_set(draws, config.alpha, config.cutoff);
            out.covered = set.contains(setup.theta0);
            out.size = size_metric(draws);
            for (Eigen::Index j = 0; j < setup.theta0.size(); ++j) {
                const auto interval = marginal_interval(draws, static_cast<std::size_t>(j), config.alpha);
                out.marginal_covered.push_back(interval.contains(setup.theta0(j)));
                out.winkler.push_back(winkler_score(interval, setup.theta0(j), config.alpha));
            }
            out.valid = true;
        } catch (const Error& e) {
            out.valid = false;
            out.error = e.what();
        }
    });

    std::ostringstream results;
    results << "setup,rule,repetitions,invalid_repetitions,p,coverage,size_median,marginal_coverage,winkler_median,"
               "failed_trajectories,nonconverged_draws,config_hash,version\n";
    std::ostringstream marginals;
    marginals << "setup,rule,coordinate,theta0,marginal_coverage,winkler_median\n";
    std::ostringstream table;
    table << std::left << std::setw(20) << "setup" << std::setw(16) << "rule" << "coverage (size median)\n";
    json errors = json::array();

    for (std::size_t s = 0; s < config.setups.size(); ++s) {
        const auto& setup = result.setups[s];
        const auto p = static_cast<std::size_t>(setup.theta0.size());
        for (std::size_t r = 0; r < n_rules; ++r) {
            ResultRow row;
            row.setup = setup.config.name;
            row.rule = config.rules[r].name;
            row.p = p;
            row.coordinates = setup.coordinates;
            std::vector<double> sizes;
            std::vector<std::vector<double>> wink(p);
            std::vector<double> marg(p, 0.0);
            double hits = 0.0;
            for (std::size_t rep = 0; rep < reps; ++rep) {
                const auto& o = outcomes[(s * n_rules + r) * reps + rep];
                row.failed_trajectories += o.failed;
                row.nonconverged_draws += o.nonconverged;
                if (!o.valid) {
                    ++row.invalid_repetitions;
                    errors.push_back({{"setup", row.setup}, {"rule", row.rule}, {"repetition", rep}, {"error", o.error}});
                    continue;
                }
                ++row.repetitions;
                hits += o.covered;
                sizes.push_back(o.size);
                for (std::size_t j = 0; j < p; ++j) {
                    marg[j] += o.marginal_covered[j];
                    wink[j].push_back(o.winkler[j]);
                }
            }
            const double valid = static_cast<double>(row.repetitions);
            const double nan = std::numeric_limits<double>::quiet_NaN();
            row.coverage = row.repetitions ? hits / valid : nan;
            row.size_median = row.repetitions ? median(sizes) : nan;
            for (std::size_t j = 0; j < p; ++j) {
                row.marginal_coverage.push_back(row.repetitions ? marg[j] / valid : nan);
                row.winkler_median.push_back(row.repetitions ? median(wink[j]) : nan);
            }
            results << row.setup << ',' << row.rule << ',' << row.repetitions << ',' << row.invalid_repetitions << ','
                    << row.p << ',' << format_number(row.coverage) << ',' << format_number(row.size_median) << ','
                    << join(row.marginal_coverage) << ',' << join(row.winkler_median) << ','
                    << row.failed_trajectories << ',' << row.nonconverged_draws << ',' << config.hash() << ','
                    << version() << '\n';
            for (std::size_t j = 0; j < p; ++j) {
                marginals << row.setup << ',' << row.rule << ',' << row.coordinates[j] << ','
                          << format_number(setup.theta0(static_cast<Eigen::Index>(j))) << ','
                          << format_number(row.marginal_coverage[j]) << ',' << format_number(row.winkler_median[j])
                          << '\n';
            }
            char cell[64];
            std::snprintf(cell, sizeof cell, "%.2f (%.3g)", row.coverage, row.size_median);
            table << std::setw(20) << row.setup << std::setw(16) << row.rule << cell << '\n';
            result.rows.push_back(std::move(row));
        }
    }

    json manifest{{"name", config.name},
                  {"run_id", config.run_id()},
                  {"config_hash", config.hash()},
                  {"version", std::string(version())},
                  {"seed", config.seed},
                  {"alpha", config.alpha},
                  {"repetitions", config.repetitions},
                  {"config", json::parse(config.canonical)},
                  {"errors", errors}};
    json setups = json::array();
    for (const auto& s : result.setups) {
        json entry{{"name", s.config.name},
                   {"coordinates", s.coordinates},
                   {"theta0", vector_json(s.theta0)},
                   {"active_columns", s.loss.active}};
        if (s.config.synthetic) {
            entry["kind"] = std::string(to_string(s.config.synthetic_setup.kind));
            entry["n"] = s.config.synthetic_setup.sample_size();
            entry["beta"] = vector_json(s.config.synthetic_setup.beta);
        } else {
            entry["kind"] = "csv";
            entry["n"] = s.config.n_train;
            entry["population_rows"] = s.population->size();
        }
        setups.push_back(entry);
    }
    manifest["setups"] = setups;
    write_text(result.run_dir / "manifest.json", manifest.dump(2) + "\n");
    write_text(result.run_dir / "results.csv", results.str());
    write_text(result.run_dir / "marginals.csv", marginals.str());
    write_text(result.run_dir / "table.txt", table.str());
    write_text(result.run_dir / "schema.json", schema_document().dump(2) + "\n");
    return result;
}

DiagnosticsResult run_diagnostics(const ExperimentConfig& config) {
    check_compatibility(config);
    DiagnosticsResult result;
    result.run_dir = config.output_dir / config.run_id();
    const auto dir = result.run_dir / "diagnostics";
    ensure_dir(dir);
    std::vector<std::optional<PreparedSetup>> prepared(config.setups.size());
    auto setup_of = [&](const std::string& name, std::size_t* index) -> const PreparedSetup& {
        find_setup(config, name, index);
        if (!prepared[*index]) prepared[*index] = prepare_setup(config, *index);
        return *prepared[*index];
    };
    json summary{{"config_hash", config.hash()}, {"version", std::string(version())}};

    for (const auto& t : config.traces) {
        std::size_t s = 0;
        std::size_t r = 0;
        const auto& setup = setup_of(t.setup, &s);
        const auto& rule = find_rule(config, t.rule, &r);
        const DesignMatrix data = setup.repetition_data(config.seed, s, 0);
        EngineConfig engine;
        engine.forward_steps = t.forward_steps ? t.forward_steps : config.forward_steps;
        engine.draws = t.draws;
        engine.checkpoint_stride = t.checkpoint_stride;
        engine.keep_checkpoints = true;
        engine.seed = derive_seed(config.seed, {kDiagnosticTag, 0, s, r});
        engine.workers = config.workers;
        engine.refit_repeats = config.refit_repeats;
        const auto posterior = run_mgp(data, rule, setup.loss, engine);
        const auto series = l1_trace(posterior, posterior.theta_data);
        const std::string key = safe_name(t.setup) + "__" + safe_name(t.rule);
        write_trace_csv(dir / ("trace__" + key + ".csv"), series);
        const auto stability = trace_stability(series, t.ratio);
        result.traces.emplace_back(key, stability);
        summary["trace"][key] = {{"first_quarter_slope", stability.first_slope},
                                 {"last_quarter_slope", stability.last_slope},
                                 {"stabilized", stability.stabilized},
                                 {"failed_trajectories", posterior.failed_count()}};
    }

    for (const auto& a : config.acids) {
        std::size_t s = 0;
        std::size_t r = 0;
        const auto& setup = setup_of(a.setup, &s);
        const auto& rule_config = find_rule(config, a.rule, &r);
        const DesignMatrix data = setup.repetition_data(config.seed, s, 0);
        const auto rule = make_rule(rule_config, data, setup.loss);
        const std::vector<double> x_star = a.x_star ? *a.x_star : std::vector<double>(data.cols() - 1, 0.0);
        if (x_star.size() + 1 != data.cols()) throw ValidationError("diagnostics.acid: x_star has the wrong length");
        const auto series = acid_cumsum(*rule, x_star, data.rows() + a.horizon_steps, a.mc_draws,
                                        derive_seed(config.seed, {kDiagnosticTag, 1, s, r}), config.workers);
        const std::string key = safe_name(a.setup) + "__" + safe_name(a.rule);
        write_acid_csv(dir / ("acid__" + key + ".csv"), series);
        result.acid_final.emplace_back(key, series.cumulative.back());
        std::size_t above = 0;
        for (std::size_t k = 0; k < series.terms.size(); ++k) above += series.terms[k] > 3.0 * series.standard_errors[k];
        summary["acid"][key] = {{"final_cumulative", series.cumulative.back()}, {"terms_above_3se", above}};
    }

    for (const auto& c : config.concentrations) {
        std::size_t s = 0;
        std::size_t r = 0;
        find_setup(config, c.setup, &s);
        const auto& rule = find_rule(config, c.rule, &r);
        SyntheticSetup syn = config.setups[s].synthetic_setup;
        if (!config.setups[s].beta_given) {
            RngStream rng(derive_seed(config.seed, {kBetaTag, s}), 0);
            syn.beta = draw_beta(syn.dim, rng);
        }
        const auto points = concentration_sweep(syn, rule, c.sizes, c.forward_steps, c.draws,
                                                derive_seed(config.seed, {kDiagnosticTag, 2, s, r}), config.workers);
        const std::string key = safe_name(c.setup) + "__" + safe_name(c.rule);
        std::ostringstream out;
        out << "n,coordinate,mean,sd\n";
        for (const auto& pt : points) {
            for (Eigen::Index j = 0; j < pt.mean.size(); ++j) {
                out << pt.n << ',' << j << ',' << format_number(pt.mean(j)) << ','
                    << (pt.sd.size() ? format_number(pt.sd(j)) : std::string()) << '\n';
            }
        }
        write_text(dir / ("concentration__" + key + ".csv"), out.str());
    }
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return result;
}

json theta0_report(const ExperimentConfig& config) {
    json out = json::object();
    for (std::size_t s = 0; s < config.setups.size(); ++s) {
        const auto p = prepare_setup(config, s);
        out[p.config.name] = {{"coordinates", p.coordinates}, {"theta0", vector_json(p.theta0)}};
        if (p.config.synthetic) out[p.config.name]["beta"] = vector_json(p.config.synthetic_setup.beta);
    }
    return out;
}

}  // namespace mgp
