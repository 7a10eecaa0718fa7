#include "ilb/config.hpp"

#include "ilb/error.hpp"
#include "ilb/operator.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ilb {

using nlohmann::json;

namespace {

json defaults_json(const RunConfig& c)
{
    json j;
    j["m"] = c.gas.m;
    j["m1"] = c.gas.m1;
    j["eps"] = c.gas.eps;
    j["theta1"] = c.gas.theta1;
    j["u1"] = {c.gas.u1.x(), c.gas.u1.y(), c.gas.u1.z()};
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["out"] = c.out.string();
    j["grid"] = {{"N", c.grid.N},     {"L", c.grid.L},           {"Nr", c.grid.Nr},
                 {"s_order", c.grid.s_order}, {"sector", c.grid.sector}, {"memory_mb", c.grid.memory_mb}};
    j["solver"] = {{"method", c.solver.method},
                   {"dt", c.solver.dt},
                   {"t_end", c.solver.t_end},
                   {"samples", c.solver.samples},
                   {"initial_theta", c.solver.initial_theta},
                   {"initial_shift", c.solver.initial_shift},
                   {"fit_from", c.solver.fit_from},
                   {"fit_to", c.solver.fit_to}};
    j["spectrum"] = {{"k", c.spectrum.k}, {"tol", c.spectrum.tol}, {"max_iter", c.spectrum.max_iter}};
    j["calibration"] = {{"mc_samples", c.calibration.mc_samples}};
    j["transport"] = {{"nx", c.transport.nx},
                      {"steps", c.transport.steps},
                      {"N", c.transport.N},
                      {"dt", c.transport.dt},
                      {"collisions", c.transport.collisions}};
    return j;
}

bool same_kind(const json& def, const json& val)
{
    if (def.is_number_unsigned())
        return val.is_number_unsigned();
    if (def.is_number())
        return val.is_number();
    if (def.is_boolean())
        return val.is_boolean();
    if (def.is_string())
        return val.is_string();
    if (def.is_array()) {
        if (!val.is_array() || val.size() != def.size())
            return false;
        for (const auto& x : val)
            if (!x.is_number())
                return false;
        return true;
    }
    return false;
}

void merge(json& base, const json& user, const std::string& prefix)
{
    if (!user.is_object())
        throw ConfigError("configuration" + (prefix.empty() ? std::string() : " section '" + prefix + "'")
                          + " must be a JSON object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key()))
            throw ConfigError("unknown configuration key '" + key + "'");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge(slot, it.value(), key);
        } else if (same_kind(slot, it.value())) {
            slot = it.value();
        } else {
            throw ConfigError("configuration key '" + key + "' expects " + std::string(slot.type_name())
                              + (slot.is_number_unsigned() ? " (nonnegative integer)" : "") + ", got "
                              + it.value().dump());
        }
    }
}

RunConfig from_json(const json& j)
{
    RunConfig c;
    c.gas.m = j["m"].get<double>();
    c.gas.m1 = j["m1"].get<double>();
    c.gas.eps = j["eps"].get<double>();
    c.gas.theta1 = j["theta1"].get<double>();
    const auto u = j["u1"].get<std::vector<double>>();
    c.gas.u1 = Vec3(u[0], u[1], u[2]);
    c.seed = j["seed"].get<std::uint64_t>();
    c.threads = j["threads"].get<unsigned>();
    c.out = j["out"].get<std::string>();
    const auto& g = j["grid"];
    c.grid.N = g["N"].get<std::size_t>();
    c.grid.L = g["L"].get<double>();
    c.grid.Nr = g["Nr"].get<std::size_t>();
    c.grid.s_order = g["s_order"].get<std::size_t>();
    c.grid.sector = g["sector"].get<std::string>();
    c.grid.memory_mb = g["memory_mb"].get<std::size_t>();
    const auto& s = j["solver"];
    c.solver.method = s["method"].get<std::string>();
    c.solver.dt = s["dt"].get<double>();
    c.solver.t_end = s["t_end"].get<double>();
    c.solver.samples = s["samples"].get<std::size_t>();
    c.solver.initial_theta = s["initial_theta"].get<double>();
    c.solver.initial_shift = s["initial_shift"].get<std::vector<double>>();
    c.solver.fit_from = s["fit_from"].get<double>();
    c.solver.fit_to = s["fit_to"].get<double>();
    const auto& sp = j["spectrum"];
    c.spectrum.k = sp["k"].get<std::size_t>();
    c.spectrum.tol = sp["tol"].get<double>();
    c.spectrum.max_iter = sp["max_iter"].get<std::size_t>();
    c.calibration.mc_samples = j["calibration"]["mc_samples"].get<std::size_t>();
    const auto& t = j["transport"];
    c.transport.nx = t["nx"].get<std::size_t>();
    c.transport.steps = t["steps"].get<std::size_t>();
    c.transport.N = t["N"].get<std::size_t>();
    c.transport.dt = t["dt"].get<double>();
    c.transport.collisions = t["collisions"].get<bool>();
    return c;
}

json parse_value(const std::string& text)
{
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded())
        return json(text); // bare strings such as sector=full-3d
    return v;
}

} // namespace

std::string RunConfig::to_json() const { return defaults_json(*this).dump(2); }

std::uint64_t RunConfig::hash() const
{
    json j = defaults_json(*this);
    j.erase("out");
    j.erase("threads");
    const std::string canon = j.dump();
    return fnv1a(canon.data(), canon.size());
}

std::string RunConfig::hash_hex() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

void validate_config(const RunConfig& c)
{
    try {
        c.gas.validate();
    } catch (const InvalidParameter& e) {
        throw ConfigError(e.what());
    }
    auto require = [](bool ok, const std::string& msg) {
        if (!ok)
            throw ConfigError(msg);
    };
    require(c.grid.N >= 8 && c.grid.N % 2 == 0, "grid.N must be an even integer >= 8");
    require(c.grid.L > 0, "grid.L must be positive");
    require(c.grid.Nr >= 8, "grid.Nr must be >= 8");
    require(c.grid.s_order >= 2, "grid.s_order must be >= 2");
    require(c.grid.sector == "radial-isotropic" || c.grid.sector == "full-3d",
            "grid.sector must be radial-isotropic or full-3d");
    require(c.solver.method == "spectral-exponential" || c.solver.method == "rk4",
            "solver.method must be spectral-exponential or rk4");
    require(c.solver.dt >= 0, "solver.dt must be >= 0");
    require(c.solver.t_end >= 0, "solver.t_end must be >= 0");
    require(c.solver.samples >= 10, "solver.samples must be >= 10");
    require(c.solver.initial_theta > 0, "solver.initial_theta must be positive");
    require(0 <= c.solver.fit_from && c.solver.fit_from < c.solver.fit_to && c.solver.fit_to <= 1,
            "solver.fit_from and solver.fit_to must satisfy 0 <= fit_from < fit_to <= 1");
    require(c.spectrum.k != 1, "spectrum.k must be 0 or >= 2");
    require(c.spectrum.tol > 0, "spectrum.tol must be positive");
    require(c.calibration.mc_samples >= 1000, "calibration.mc_samples must be >= 1000");
    require(c.transport.nx >= 2, "transport.nx must be >= 2");
    require(c.transport.N >= 8 && c.transport.N % 2 == 0, "transport.N must be an even integer >= 8");
    require(c.transport.dt >= 0, "transport.dt must be >= 0");
}

RunConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides)
{
    json eff = defaults_json(RunConfig{});
    if (!json_text.empty()) {
        json user;
        try {
            user = json::parse(json_text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
        }
        merge(eff, user, "");
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override '" + ov + "' is not of the form key=value");
        const std::string key = ov.substr(0, eq);
        json patch = parse_value(ov.substr(eq + 1));
        // rebuild the dotted path as nested objects
        std::vector<std::string> parts;
        std::stringstream ss(key);
        for (std::string part; std::getline(ss, part, '.');)
            parts.push_back(part);
        for (auto it = parts.rbegin(); it != parts.rend(); ++it)
            patch = json{{*it, patch}};
        merge(eff, patch, "");
    }
    RunConfig cfg = from_json(eff);
    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot read configuration file " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config(buf.str(), overrides);
}

} // namespace ilb
