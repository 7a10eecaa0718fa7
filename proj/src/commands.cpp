#include "ilb/commands.hpp"

#include "ilb/error.hpp"
#include "ilb/evolution.hpp"
#include "ilb/microscopic_oracle.hpp"
#include "ilb/operator.hpp"
#include "ilb/rng.hpp"
#include "ilb/spectral.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>

namespace ilb {

using nlohmann::json;
namespace fs = std::filesystem;

int CommandResult::exit_code() const
{
    for (std::size_t k = 0; k < checks.size(); ++k)
        if (!checks[k].passed)
            return 10 + static_cast<int>(k) + 1;
    return 0;
}

const std::vector<std::string>& command_names()
{
    static const std::vector<std::string> names = {"validate", "calibrate", "sigma",          "kernel",
                                                   "spectrum", "evolve",    "transport-demo", "report"};
    return names;
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e))
        return 2;
    if (dynamic_cast<const MissingCalibration*>(&e))
        return 3;
    if (dynamic_cast<const CacheMismatch*>(&e))
        return 4;
    return 1;
}

namespace {

std::string fmt(double x)
{
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
}

std::string hex64(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_atomic(const fs::path& path, const std::string& text)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw Error("cannot write " + tmp.string());
        os << text;
    }
    fs::rename(tmp, path);
}

/// Shared state of one command invocation.
struct Session {
    const RunConfig& cfg;
    std::ostream& log;
    CommandResult result;

    void check(const std::string& name, bool passed, const std::string& detail)
    {
        result.checks.push_back({name, passed, detail});
        log << (passed ? "  ok    " : "  FAIL  ") << name << ": " << detail << '\n';
    }

    json checks_json() const
    {
        json arr = json::array();
        for (const auto& c : result.checks)
            arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        return arr;
    }

    json artifact(const std::string& command) const
    {
        return {{"command", command}, {"config_hash", cfg.hash_hex()}};
    }

    void emit(const fs::path& name, const std::string& text)
    {
        const auto path = cfg.out / name;
        write_atomic(path, text);
        result.artifacts.push_back(path);
    }

    void emit_json(const fs::path& name, json j)
    {
        j["checks"] = checks_json();
        emit(name, j.dump(2) + "\n");
    }

    std::string csv_comment() const { return "config_hash=" + cfg.hash_hex(); }
};

KernelContext calibrated_context(const RunConfig& cfg)
{
    return make_kernel_context(cfg.gas, load_calibration(cfg.out));
}

Vec3 random_velocity(CounterRng& rng, const Vec3& center, double scale)
{
    return center + scale * Vec3(rng.normal(), rng.normal(), rng.normal());
}

Vec3 random_unit(CounterRng& rng)
{
    Vec3 n(rng.normal(), rng.normal(), rng.normal());
    return n / n.norm();
}

// ---------------------------------------------------------------- validate

void cmd_validate(Session& s)
{
    const auto& cfg = s.cfg;
    const KernelContext ctx = make_kernel_context(cfg.gas);
    const double width = reference_thermal_width(cfg.gas, ctx.consts);
    CounterRng rng(cfg.seed, 101);

    double db = 0, sym = 0, def = 0;
    for (int i = 0; i < 10000; ++i) {
        const Vec3 v = random_velocity(rng, cfg.gas.u1, 1.5 * width);
        const Vec3 w = random_velocity(rng, cfg.gas.u1, 1.5 * width);
        db = std::max(db, detailed_balance_residual(ctx, v, w));
        const double g = symmetrized_G(ctx, v, w);
        if (g > 0) {
            sym = std::max(sym, std::abs(symmetrized_G(ctx, w, v) / g - 1.0));
            def = std::max(def, std::abs(symmetrized_G_definition(ctx, v, w) / g - 1.0));
        }
    }
    s.check("detailed_balance", db < 1e-12, "max residual " + fmt(db) + " over 1e4 pairs (< 1e-12)");
    s.check("kernel_symmetry", sym < 1e-13 && def < 1e-10,
            "G(v,w)/G(w,v) - 1 = " + fmt(sym) + ", closed form vs definition " + fmt(def));

    const double a1 = std::sqrt(cfg.gas.theta1 / cfg.gas.m1);
    double rest = 0, mom = 0, energy_gain = 0, inv_rest = 0;
    for (int i = 0; i < 100000; ++i) {
        const Vec3 v = random_velocity(rng, cfg.gas.u1, 2.0 * width);
        const Vec3 w = random_velocity(rng, cfg.gas.u1, 2.0 * a1);
        const Vec3 n = random_unit(rng);
        const auto [vp, wp] = direct_collision_map(cfg.gas, ctx.consts, v, w, n);
        const double scale = v.norm() + w.norm() + vp.norm() + wp.norm();
        rest = std::max(rest, std::abs((vp - wp).dot(n) + cfg.gas.eps * (v - w).dot(n)) / scale);
        const Vec3 dp = cfg.gas.m * (vp - v) + cfg.gas.m1 * (wp - w);
        mom = std::max(mom, dp.norm() / (cfg.gas.m * (v.norm() + vp.norm()) + cfg.gas.m1 * (w.norm() + wp.norm())));
        const double e0 = 0.5 * (cfg.gas.m * v.squaredNorm() + cfg.gas.m1 * w.squaredNorm());
        const double e1 = 0.5 * (cfg.gas.m * vp.squaredNorm() + cfg.gas.m1 * wp.squaredNorm());
        energy_gain = std::max(energy_gain, (e1 - e0) / e0);
        const auto pre = inverse_collision_map(ctx.consts, v, w, n);
        const double sc2 = v.norm() + w.norm() + pre.vstar.norm() + pre.wstar.norm();
        inv_rest = std::max(inv_rest, std::abs((pre.vstar - pre.wstar).dot(n) + (v - w).dot(n) / cfg.gas.eps) / sc2);
    }
    s.check("restitution", rest < 1e-14 && inv_rest < 1e-14,
            "direct " + fmt(rest) + ", inverse " + fmt(inv_rest) + " relative over 1e5 collisions");
    s.check("momentum", mom < 1e-14, "max relative momentum defect " + fmt(mom));
    const bool dissipative = cfg.gas.eps < 1.0;
    s.check("energy", dissipative ? energy_gain <= 1e-14 : std::abs(energy_gain) <= 1e-13,
            "max relative energy change " + fmt(energy_gain));

    json j = s.artifact("validate");
    j["detailed_balance_max"] = db;
    j["symmetry_max"] = sym;
    j["restitution_max"] = std::max(rest, inv_rest);
    j["momentum_max"] = mom;
    j["energy_gain_max"] = energy_gain;
    j["mu"] = ctx.consts.mu;
    j["mu_negative"] = ctx.consts.mu_negative;
    j["theta_sharp"] = ctx.consts.theta_sharp;
    s.emit_json("validate.json", j);
}

// ---------------------------------------------------------------- calibrate

void cmd_calibrate(Session& s)
{
    const auto& cfg = s.cfg;
    const CalibrationRecord rec = calibrate(cfg.gas, cfg.seed, cfg.calibration.mc_samples);
    double worst_z = 0;
    json pts = json::array();
    for (const auto& p : rec.points) {
        const double z = std::abs(p.sigma_mc - p.sigma_quadrature) / p.sigma_mc_stderr;
        worst_z = std::max(worst_z, z);
        pts.push_back({{"r", p.r},
                       {"sigma_quadrature", p.sigma_quadrature},
                       {"sigma_mc", p.sigma_mc},
                       {"sigma_mc_stderr", p.sigma_mc_stderr},
                       {"braces_term", p.braces_term},
                       {"kernel_route", p.kernel_route}});
    }
    s.check("norm_C_consistent", rec.norm_C_spread < 1e-6, "spread " + fmt(rec.norm_C_spread));
    s.check("c_sigma_consistent", rec.c_sigma_spread < 1e-6, "spread " + fmt(rec.c_sigma_spread));
    s.check("mc_agrees_with_quadrature", worst_z < 4.0, "worst deviation " + fmt(worst_z) + " standard errors");

    json j = s.artifact("calibrate");
    j["norm_C"] = rec.constants.norm_C;
    j["c_sigma"] = rec.constants.c_sigma;
    j["norm_C_spread"] = rec.norm_C_spread;
    j["c_sigma_spread"] = rec.c_sigma_spread;
    j["mc_samples"] = rec.mc_samples;
    j["seed"] = rec.seed;
    j["convention"] = rec.convention;
    j["points"] = pts;
    s.emit_json("calibration.json", j);
    s.log << "  norm_C = " << std::setprecision(12) << rec.constants.norm_C << ", c_sigma = " << rec.constants.c_sigma
          << '\n';
}

// ---------------------------------------------------------------- sigma

void cmd_sigma(Session& s)
{
    const auto& cfg = s.cfg;
    const KernelContext ctx = calibrated_context(cfg);
    const double a1 = std::sqrt(cfg.gas.theta1 / cfg.gas.m1);

    std::ostringstream csv;
    csv << "# " << s.csv_comment() << "\nr,sigma,sigma_over_1_plus_r\n" << std::setprecision(17);
    double lo = 1e300, hi = 0;
    for (int k = 0; k <= 400; ++k) {
        const double r = 0.05 * k;
        const double sg = sigma_closed_form_radius(ctx, r * a1);
        const double ratio = sg / (1.0 + r);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        csv << r << ',' << sg << ',' << ratio << '\n';
    }
    s.emit("sigma.csv", csv.str());

    CounterRng rng(cfg.seed, 202);
    double worst = 0, worst_mc = 0;
    for (int i = 0; i < 20; ++i) {
        const Vec3 v = random_velocity(rng, cfg.gas.u1, 1.5 * a1);
        const double closed = sigma_closed_form(ctx, v);
        worst = std::max(worst, std::abs(sigma_oracle_quadrature(ctx, v) / closed - 1.0));
        const McEstimate mc = sigma_oracle(ctx, v, 1000000, cfg.seed + static_cast<std::uint64_t>(i));
        worst_mc = std::max(worst_mc, std::abs(mc.estimate / closed - 1.0));
    }
    s.check("closed_form_vs_oracle", worst < 5e-3 && worst_mc < 5e-3,
            "quadrature " + fmt(worst) + ", Monte Carlo " + fmt(worst_mc) + " relative (< 0.5%)");

    double eps_dev = 0;
    for (double e : {0.3, 0.7, 1.0}) {
        GasParameters q = cfg.gas;
        q.eps = e;
        const KernelContext c2 = make_kernel_context(q, {ctx.norm_C, ctx.c_sigma});
        for (double r : {0.0, 0.5, 2.0, 7.0})
            eps_dev = std::max(eps_dev, std::abs(sigma_closed_form_radius(c2, r * a1)
                                                 / sigma_closed_form_radius(ctx, r * a1) - 1.0));
    }
    s.check("eps_independent", eps_dev <= 1e-12, "max relative change " + fmt(eps_dev));
    s.check("linear_growth", lo > 0 && std::isfinite(hi) && hi / lo < 1e3,
            "sigma/(1+r) in [" + fmt(lo) + ", " + fmt(hi) + "] for r in [0, 20]");

    json j = s.artifact("sigma");
    j["nu0"] = sigma_closed_form_radius(ctx, 0.0);
    j["ratio_min"] = lo;
    j["ratio_max"] = hi;
    j["oracle_rel_max"] = worst;
    j["mc_rel_max"] = worst_mc;
    j["eps_rel_max"] = eps_dev;
    s.emit_json("sigma.json", j);
}

// ---------------------------------------------------------------- kernel

void cmd_kernel(Session& s)
{
    const auto& cfg = s.cfg;
    const KernelContext ctx = calibrated_context(cfg);
    const double a1 = std::sqrt(cfg.gas.theta1 / cfg.gas.m1);

    std::ostringstream csv;
    csv << "# " << s.csv_comment() << "\nkind,p,q,r,integral,product\n" << std::setprecision(17);
    json j = s.artifact("kernel");
    json scans = json::array();
    for (auto [p, q] : {std::pair{2.0, 0.0}, std::pair{1.0, 2.0}}) {
        const BoundScan b = carleman_bound_scan(ctx, p, q);
        for (const auto& row : b.rows)
            csv << "carleman," << p << ',' << q << ',' << row.r << ',' << row.integral << ',' << row.product << '\n';
        s.check("carleman_p" + fmt(p) + "_q" + fmt(q),
                !b.growth_flag && b.sup_integral <= b.uniform_bound * (1 + 1e-9),
                "sup I = " + fmt(b.sup_integral) + " <= " + fmt(b.uniform_bound) + ", end growth ratio "
                    + fmt(b.growth_ratio));
        scans.push_back({{"p", p},
                         {"q", q},
                         {"sup_integral", b.sup_integral},
                         {"uniform_bound", b.uniform_bound},
                         {"growth_ratio", b.growth_ratio}});
    }
    json tails = json::array();
    bool tails_ok = true;
    std::string detail;
    for (double rho : {0.5, 1.0, 2.0, 5.0, 10.0}) {
        const TailScan t = tail_mass_scan(ctx, rho * a1);
        const double cap = sigma_closed_form_radius(ctx, rho * a1);
        tails_ok = tails_ok && std::isfinite(t.sup) && t.sup <= cap;
        csv << "tail,," << ',' << rho << ',' << t.sup << ',' << t.argmax_r / a1 << '\n';
        tails.push_back({{"rho", rho}, {"sup", t.sup}, {"argmax_r", t.argmax_r / a1}, {"sigma_rho", cap}});
        detail += fmt(t.sup) + " ";
    }
    s.check("tail_mass_bounded", tails_ok, "sup over |v|<=rho: " + detail);
    s.emit("kernel_bounds.csv", csv.str());
    j["carleman"] = scans;
    j["tail"] = tails;
    s.emit_json("kernel.json", j);
}

} // namespace

NormalizationConstants load_calibration(const fs::path& dir)
{
    const auto path = dir / "calibration.json";
    std::ifstream is(path);
    if (!is)
        throw MissingCalibration("no calibration record at " + path.string() + "; run `ilbk calibrate` first");
    json j;
    try {
        is >> j;
        return {j.at("norm_C").get<double>(), j.at("c_sigma").get<double>()};
    } catch (const json::exception& e) {
        throw MissingCalibration("calibration record " + path.string() + " is unreadable: " + e.what());
    }
}

namespace {

// ---------------------------------------------------------------- operators

bool is_radial(const RunConfig& cfg) { return cfg.grid.sector == "radial-isotropic"; }

/// Dense operator for the configured sector, through the on-disk cache.
OperatorMatrix cached_operator(Session& s, const KernelContext& ctx, bool radial, std::size_t n_axis,
                               LossMode mode = LossMode::Conservative)
{
    const auto& cfg = s.cfg;
    json key = {{"sector", radial ? "radial-isotropic" : "full-3d"},
                {"n", n_axis},
                {"L", cfg.grid.L},
                {"s_order", radial ? cfg.grid.s_order : 0},
                {"gas", {cfg.gas.m, cfg.gas.m1, cfg.gas.eps, cfg.gas.theta1, cfg.gas.u1.x(), cfg.gas.u1.y(),
                         cfg.gas.u1.z()}},
                {"norm", {ctx.norm_C, ctx.c_sigma}},
                {"mode", mode == LossMode::Conservative ? "conservative" : "closed-form"}};
    const std::string text = key.dump();
    const auto dir = cfg.out / "cache";
    fs::create_directories(dir);
    const auto path = dir / ("operator_" + hex64(fnv1a(text.data(), text.size())) + ".bin");
    if (fs::exists(path)) {
        OperatorMatrix op = load_operator(path);
        const bool same = op.meta.n_axis == n_axis && op.meta.L == cfg.grid.L && op.meta.params.eps == cfg.gas.eps
            && op.meta.params.m == cfg.gas.m && op.meta.params.m1 == cfg.gas.m1
            && op.meta.params.theta1 == cfg.gas.theta1 && op.meta.params.u1 == cfg.gas.u1
            && op.meta.constants.norm_C == ctx.norm_C && op.meta.constants.c_sigma == ctx.c_sigma
            && op.meta.loss_mode == mode;
        if (!same)
            throw CacheMismatch("operator cache " + path.string() + " does not match the requested operator");
        s.log << "  operator loaded from " << path.string() << '\n';
        return op;
    }
    OperatorMatrix op;
    if (radial) {
        RadialGridSpec spec{n_axis, cfg.grid.L, cfg.grid.s_order};
        op = assemble_radial_operator(ctx, reduce_isotropic(ctx, spec), mode);
    } else {
        const VelocityGrid g = build_grid(cfg.grid.L, n_axis, cfg.gas);
        op = assemble_operator(ctx, g, mode, cfg.grid.memory_mb << 20);
    }
    save_operator(path, op);
    write_atomic(fs::path(path).replace_extension(".json"), key.dump(2) + "\n");
    s.log << "  operator assembled (" << op.size() << " nodes), cached at " << path.string() << '\n';
    return op;
}

bool fits_dense(const RunConfig& cfg, std::size_t n_axis)
{
    const std::size_t n = n_axis * n_axis * n_axis;
    return n * n * sizeof(double) <= (cfg.grid.memory_mb << 20);
}

SpectrumResult sector_spectrum(Session& s, const KernelContext& ctx, std::size_t n_axis, double nu0,
                               std::unique_ptr<SymmetricOperator>& keep)
{
    const auto& cfg = s.cfg;
    EigenOptions opt;
    opt.k = cfg.spectrum.k;
    opt.tol = cfg.spectrum.tol;
    opt.seed = cfg.seed;
    opt.max_iter = cfg.spectrum.max_iter;
    if (is_radial(cfg) || fits_dense(cfg, n_axis)) {
        auto op = std::make_unique<OperatorMatrix>(cached_operator(s, ctx, is_radial(cfg), n_axis));
        if (!is_radial(cfg) && opt.k == 0)
            opt.k = 20;
        SpectrumResult r = eigendecompose(*op, nu0, opt);
        keep = std::move(op);
        return r;
    }
    s.log << "  " << n_axis << "^3 nodes exceed the dense budget; using matrix-free Lanczos\n";
    auto op = std::make_unique<MatrixFreeOperator>(ctx, build_grid(cfg.grid.L, n_axis, cfg.gas));
    if (opt.k == 0)
        opt.k = 20;
    SpectrumResult r = eigendecompose_lanczos(*op, nu0, opt, "full-3d");
    keep = std::move(op);
    return r;
}

// ---------------------------------------------------------------- spectrum

void cmd_spectrum(Session& s)
{
    const auto& cfg = s.cfg;
    const KernelContext ctx = calibrated_context(cfg);
    const double nu0 = sigma_closed_form_radius(ctx, 0.0);
    const bool radial = is_radial(cfg);
    const std::size_t n_axis = radial ? cfg.grid.Nr : cfg.grid.N;
    // TODO: N+8 on the 3D path once the matrix-free product is fast enough for N=32
    const std::size_t n_refined = radial ? cfg.grid.Nr + 32 : cfg.grid.N + 2;

    std::unique_ptr<SymmetricOperator> op, op_fine;
    const SpectrumResult spec = sector_spectrum(s, ctx, n_axis, nu0, op);
    const SpectrumResult fine = sector_spectrum(s, ctx, n_refined, nu0, op_fine);
    const SpectrumReport rep = spectrum_report(spec, *op, cfg.seed);

    write_spectrum_csv(cfg.out / "spectrum.csv", spec, s.csv_comment());
    s.result.artifacts.push_back(cfg.out / "spectrum.csv");

    const double tol_abs = 1e-10 * spec.norm;
    const double worst_res = spec.residuals.maxCoeff() / spec.norm;
    const double gap_change = std::abs(fine.gap / spec.gap - 1.0);
    double cosine = 0;
    if (auto* dense = dynamic_cast<OperatorMatrix*>(op.get()))
        cosine = std::abs(dense->equilibrium_vector().normalized().dot(spec.eigvec0().normalized()));
    else if (auto* mf = dynamic_cast<MatrixFreeOperator*>(op.get()))
        cosine = std::abs(mf->equilibrium_vector().normalized().dot(spec.eigvec0().normalized()));

    s.check("nonpositive", spec.eigenvalues.maxCoeff() <= tol_abs,
            "max eigenvalue / ||T|| = " + fmt(rep.max_eigenvalue_rel));
    s.check("lambda0_zero", std::abs(spec.lambda0()) <= tol_abs && cosine > 1 - 1e-6,
            "lambda0 = " + fmt(spec.lambda0()) + ", cosine with equilibrium 1 - " + fmt(1 - cosine));
    s.check("residuals", worst_res <= cfg.spectrum.tol, "max ||Tx - lx|| / ||T|| = " + fmt(worst_res));
    s.check("gap_stable", spec.gap > 0 && gap_change <= 0.02,
            "gap " + fmt(spec.gap) + " vs " + fmt(fine.gap) + " at " + std::to_string(n_refined) + " ("
                + fmt(100 * gap_change) + "%)");
    s.check("coercive", rep.coercive,
            "max Rayleigh quotient " + fmt(rep.max_rayleigh) + " vs lambda1 " + fmt(rep.lambda1));
    if (rep.cluster_count > 0) {
        // isolated eigenvalues must persist under refinement and stand clear of the cluster
        const SpectrumReport rep_fine = spectrum_report(fine, *op_fine, cfg.seed, 0);
        double drift = rep.isolated.size() == rep_fine.isolated.size() ? 0.0 : 1.0;
        for (Eigen::Index i = 0; drift < 1.0 && i < rep.isolated.size(); ++i)
            drift = std::max(drift, std::abs(rep.isolated[i] - rep_fine.isolated[i]) / nu0);
        s.check("separated", rep.separation_margin >= rep.band_rel && drift <= 1e-4,
                std::to_string(rep.isolated.size()) + " isolated eigenvalues, margin " + fmt(rep.separation_margin)
                    + " nu0 to the rest, refinement drift " + fmt(drift) + " nu0");
    }

    json j = s.artifact("spectrum");
    j["sector"] = spec.sector;
    j["grid"] = {{"n_axis", n_axis}, {"L", cfg.grid.L}, {"size", op->size()}};
    j["nu0"] = nu0;
    j["lambda0"] = spec.lambda0();
    j["lambda1"] = spec.lambda1();
    j["gap"] = spec.gap;
    j["gap_refined"] = fine.gap;
    j["norm"] = spec.norm;
    j["isolated"] = std::vector<double>(rep.isolated.begin(), rep.isolated.end());
    j["band_count"] = rep.band_count;
    j["cluster_count"] = rep.cluster_count;
    j["cluster_top"] = rep.cluster_top;
    j["separation_margin"] = rep.separation_margin;
    j["max_rayleigh"] = rep.max_rayleigh;
    j["equilibrium_cosine"] = cosine;
    s.emit_json("spectrum.json", j);
}

// ---------------------------------------------------------------- evolve

Eigen::VectorXd initial_datum(const RunConfig& cfg, const KernelContext& ctx, const OperatorMatrix& op,
                              const VelocityGrid* grid)
{
    const Vec3 shift(cfg.solver.initial_shift[0], cfg.solver.initial_shift[1], cfg.solver.initial_shift[2]);
    if (!grid && shift.norm() > 0)
        throw ConfigError("solver.initial_shift must be zero on the radial-isotropic sector");
    const Maxwellian f{cfg.gas.m, cfg.solver.initial_theta * ctx.consts.theta_sharp,
                       cfg.gas.u1 + shift * reference_thermal_width(cfg.gas, ctx.consts)};
    Eigen::VectorXd f0(op.T.rows());
    for (Eigen::Index i = 0; i < f0.size(); ++i)
        f0[i] = grid ? f(grid->nodes[static_cast<std::size_t>(i)]) : f(cfg.gas.u1 + Vec3(op.radius[i], 0, 0));
    return f0 / (op.weights.array() * f0.array()).sum();
}

bool non_increasing(const std::vector<double>& x, double tol)
{
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] > x[i - 1] + tol)
            return false;
    return true;
}

void cmd_evolve(Session& s)
{
    const auto& cfg = s.cfg;
    const KernelContext ctx = calibrated_context(cfg);
    const double nu0 = sigma_closed_form_radius(ctx, 0.0);
    const bool radial = is_radial(cfg);
    const OperatorMatrix op = cached_operator(s, ctx, radial, radial ? cfg.grid.Nr : cfg.grid.N);
    std::optional<VelocityGrid> grid;
    if (!radial)
        grid = build_grid(cfg.grid.L, cfg.grid.N, cfg.gas);
    const Eigen::VectorXd f0 = initial_datum(cfg, ctx, op, grid ? &*grid : nullptr);

    EigenOptions all;
    const SpectrumResult spec = eigendecompose(op, nu0, all);
    EvolveOptions eo;
    eo.method = parse_integrator(cfg.solver.method);
    eo.t_end = cfg.solver.t_end > 0 ? cfg.solver.t_end : 30.0 / nu0;
    eo.dt = cfg.solver.dt > 0 ? cfg.solver.dt : 1e-3 / nu0;
    eo.samples = cfg.solver.samples;
    EvolutionTrace tr = evolve_homogeneous(op, f0, eo, &spec);
    tr.fitted_rate = fit_decay_rate(tr, cfg.solver.fit_from * eo.t_end, cfg.solver.fit_to * eo.t_end);

    write_trace_csv(cfg.out / "trace.csv", tr, s.csv_comment());
    s.result.artifacts.push_back(cfg.out / "trace.csv");
    OperatorMeta meta = op.meta;
    save_state(cfg.out / "final_state.bin", meta, tr.final_state);
    s.result.artifacts.push_back(cfg.out / "final_state.bin");

    double drift = 0;
    for (double m : tr.mass)
        drift = std::max(drift, std::abs(m - tr.mass[0]) / tr.mass[0]);
    const bool spectral = eo.method == Integrator::SpectralExponential;
    const double drift_tol = spectral ? 1e-12 : 1e-9;
    s.check("mass", drift <= drift_tol, "max relative drift " + fmt(drift) + " (<= " + fmt(drift_tol) + ")");
    const bool mono = non_increasing(tr.dist_H, 1e-13 * tr.dist_H[0])
        && non_increasing(tr.H_quadratic, 1e-13 * tr.H_quadratic[0])
        && non_increasing(tr.H_xlogx, 1e-13 * std::abs(tr.H_xlogx[0]) + 1e-15);
    s.check("monotone", mono, "distance and both entropies non-increasing at every sample");
    const double min_ratio = *std::min_element(tr.min_ratio.begin(), tr.min_ratio.end());
    if (spectral)
        s.check("positivity", min_ratio >= -1e-12, "min f / max f = " + fmt(min_ratio));
    const double ratio = tr.fitted_rate / spec.gap;
    s.check("rate_matches_gap", std::abs(ratio - 1.0) <= 0.1,
            "fitted " + fmt(tr.fitted_rate) + " vs gap " + fmt(spec.gap) + " of the same operator");

    json j = s.artifact("evolve");
    j["sector"] = op.meta.sector;
    j["method"] = to_string(eo.method);
    j["t_end"] = eo.t_end;
    j["nu0"] = nu0;
    j["fitted_rate"] = tr.fitted_rate;
    j["gap"] = spec.gap;
    j["mass_drift"] = drift;
    j["min_ratio"] = min_ratio;
    j["negative_samples"] = tr.negative_samples;
    s.emit_json("evolve.json", j);
}

// ---------------------------------------------------------------- transport

void cmd_transport(Session& s)
{
    const auto& cfg = s.cfg;
    const KernelContext ctx = calibrated_context(cfg);
    RunConfig sub = cfg;
    sub.grid.N = cfg.transport.N;
    Session inner{sub, s.log, {}};
    const OperatorMatrix op = cached_operator(inner, ctx, false, cfg.transport.N);
    const VelocityGrid grid = build_grid(cfg.grid.L, cfg.transport.N, cfg.gas);
    const Maxwellian hot{cfg.gas.m, 1.5 * ctx.consts.theta_sharp, cfg.gas.u1};
    const auto f0 = [&](double x, const Vec3& v) {
        return (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * x)) * hot(v);
    };

    TransportOptions to;
    to.nx = cfg.transport.nx;
    to.steps = cfg.transport.steps;
    to.dt = cfg.transport.dt;
    to.collisions = cfg.transport.collisions;
    const TransportResult res = transport_demo(op, grid, f0, to);

    // streaming only: after the run the state must be the initial one shifted cell by cell
    TransportOptions so = to;
    so.collisions = false;
    so.steps = std::min<std::size_t>(to.steps, 25);
    const TransportResult st = transport_demo(op, grid, f0, so);
    const double dt = to.dt > 0 ? to.dt : 2.0 / (static_cast<double>(to.nx) * grid.h);
    const auto nx = static_cast<long long>(to.nx);
    double shift_err = 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double cells = grid.nodes[j].x() * dt * static_cast<double>(so.steps) * static_cast<double>(nx);
        const long long k = std::llround(cells);
        for (long long x = 0; x < nx; ++x) {
            const auto src = static_cast<Eigen::Index>((((x - k) % nx) + nx) % nx);
            shift_err = std::max(shift_err, std::abs(st.final_state.f(x, static_cast<Eigen::Index>(j))
                                                     - st.initial.f(src, static_cast<Eigen::Index>(j))));
        }
    }

    std::ostringstream csv;
    csv << "# " << s.csv_comment() << "\nstep,t,mass\n" << std::setprecision(17);
    for (std::size_t k = 0; k < res.times.size(); ++k)
        csv << k << ',' << res.times[k] << ',' << res.mass[k] << '\n';
    s.emit("transport.csv", csv.str());

    s.check("mass", res.max_relative_drift <= 1e-10,
            "max relative drift " + fmt(res.max_relative_drift) + " over " + std::to_string(to.steps) + " steps");
    s.check("exact_shift", st.exact_shift && shift_err == 0.0,
            st.exact_shift ? "streaming-only state equals the shifted initial state (max diff " + fmt(shift_err) + ")"
                           : "step not commensurate with the grid; streaming interpolates");

    json j = s.artifact("transport-demo");
    j["nx"] = to.nx;
    j["steps"] = to.steps;
    j["dt"] = dt;
    j["velocity_N"] = cfg.transport.N;
    j["mass_drift"] = res.max_relative_drift;
    j["exact_shift"] = st.exact_shift;
    s.emit_json("transport.json", j);
}

// ---------------------------------------------------------------- report

void cmd_report(Session& s)
{
    const auto& cfg = s.cfg;
    const std::string expected = cfg.hash_hex();
    std::map<std::string, json> docs;
    for (const auto& entry : fs::directory_iterator(cfg.out)) {
        const auto& p = entry.path();
        const auto name = p.filename().string();
        if (p.extension() != ".json" || name == "effective_config.json" || name == "report.json")
            continue;
        std::ifstream is(p);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw Error("cannot parse " + p.string() + ": " + e.what());
        }
        const std::string h = j.value("config_hash", "");
        if (h != expected)
            throw ConfigError("refusing to aggregate " + name + ": config hash " + (h.empty() ? "missing" : h)
                              + " differs from " + expected);
        docs[name] = std::move(j);
    }
    if (docs.empty())
        throw Error("nothing to report in " + cfg.out.string());

    std::ostringstream csv;
    csv << "# " << s.csv_comment() << "\nartifact,key,value\n" << std::setprecision(17);
    json summary = s.artifact("report");
    for (const auto& [name, j] : docs) {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (it.value().is_number() || it.value().is_boolean())
                csv << name << ',' << it.key() << ',' << it.value().dump() << '\n';
        bool all = true;
        for (const auto& c : j.value("checks", json::array()))
            all = all && c.value("passed", false);
        s.check(name, all, all ? "all recorded checks passed" : "contains failed checks");
        summary["artifacts"][name] = all;
    }
    if (docs.count("evolve.json") && docs.count("spectrum.json")) {
        const auto& ev = docs["evolve.json"];
        const auto& sp = docs["spectrum.json"];
        const double rate = ev["fitted_rate"].get<double>();
        const double gap = sp["gap"].get<double>();
        const bool same_sector = ev["sector"] == sp["sector"];
        csv << "comparison,fitted_rate_over_gap," << rate / gap << '\n';
        s.check("rate_vs_gap", same_sector && std::abs(rate / gap - 1.0) <= 0.1,
                "fitted rate " + fmt(rate) + " vs spectral gap " + fmt(gap)
                    + (same_sector ? "" : " (different sectors)"));
        summary["rate_over_gap"] = rate / gap;
    }
    s.emit("report.csv", csv.str());
    s.emit_json("report.json", summary);
}

} // namespace

CommandResult run_command(const std::string& name, const RunConfig& cfg, std::ostream& log)
{
    validate_config(cfg);
    fs::create_directories(cfg.out);
    Session s{cfg, log, {}};
    s.emit("effective_config.json", cfg.to_json() + "\n");
    log << "ilbk " << name << " (config " << cfg.hash_hex() << ")\n";
    if (name == "validate")
        cmd_validate(s);
    else if (name == "calibrate")
        cmd_calibrate(s);
    else if (name == "sigma")
        cmd_sigma(s);
    else if (name == "kernel")
        cmd_kernel(s);
    else if (name == "spectrum")
        cmd_spectrum(s);
    else if (name == "evolve")
        cmd_evolve(s);
    else if (name == "transport-demo")
        cmd_transport(s);
    else if (name == "report")
        cmd_report(s);
    else
        throw ConfigError("unknown command '" + name + "'");
    return s.result;
}

} // namespace ilb
