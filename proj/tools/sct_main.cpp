// Command line front end: phantom synthesis, measurement simulation,
// FBP/MBIR reconstruction, metrics, and parameter sweeps.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "run_config.hpp"
#include "sct/core.hpp"
#include "sct/geometry.hpp"
#include "sct/metrics.hpp"
#include "sct/models.hpp"
#include "sct/optimizer.hpp"
#include "sct/projector.hpp"
#include "sct/simulator.hpp"

namespace fs = std::filesystem;
using namespace sct;
using cli::ConfigError;
using cli::RunConfig;

namespace {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config -> domain objects

std::vector<double> split_nums(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::istringstream in(s);
    double v;
    while (in >> v) out.push_back(v);
    if (!in.eof()) throw ConfigError(what + ": malformed number list '" + s + "'");
    return out;
}

PhantomSpec build_phantom_spec(const RunConfig& cfg) {
    PhantomSpec spec;
    std::string kind = cfg.require("phantom.kind");
    if (kind == "shepp_logan")
        spec.kind = PhantomKind::shepp_logan;
    else if (kind == "ellipses")
        spec.kind = PhantomKind::ellipses;
    else if (kind == "growing_ellipses")
        spec.kind = PhantomKind::growing_ellipses;
    else
        throw ConfigError("phantom.kind: unknown value '" + kind + "'");
    spec.nx = cfg.get_int("phantom.nx", 128);
    spec.ny = cfg.get_int("phantom.ny", spec.nx);
    spec.nz = cfg.get_int("phantom.nz", 1);
    spec.n_frames = cfg.get_int("phantom.n_frames", 1);
    spec.voxel_size = cfg.get_num("phantom.voxel_size", 1.0);
    for (const std::string& line : cfg.all("phantom.ellipse")) {
        std::vector<double> f = split_nums(line, "phantom.ellipse");
        if (f.size() != 6 && f.size() != 7)
            throw ConfigError(
                "phantom.ellipse: expected 'cx cy ax ay angle_deg value "
                "[growth_rate]', got '" + line + "'");
        Ellipse e{f[0], f[1], f[2], f[3], f[4], f[5],
                  f.size() == 7 ? f[6] : 0.0};
        spec.ellipses.push_back(e);
    }
    return spec;
}

AngleSchedule build_schedule(const RunConfig& cfg) {
    std::string kind = cfg.get("geometry.schedule", "uniform");
    if (kind == "uniform")
        return uniform_angles(cfg.get_int("geometry.n_views", 180),
                              cfg.get_num("geometry.angle_lo", 0.0),
                              cfg.get_num("geometry.angle_hi", 180.0));
    if (kind == "limited")
        return limited_angles(cfg.get_int("geometry.n_views", 90),
                              cfg.get_num("geometry.angle_lo", 0.0),
                              cfg.get_num("geometry.angle_hi", 120.0));
    if (kind == "interlaced")
        return interlaced_angles(cfg.get_int("geometry.views_per_frame", 16),
                                 cfg.get_int("geometry.n_frames", 4));
    throw ConfigError("geometry.schedule: unknown value '" + kind + "'");
}

Geometry build_geometry(const RunConfig& cfg) {
    Geometry g;
    std::string kind = cfg.get("geometry.kind", "parallel2d");
    if (kind == "parallel2d")
        g.kind = GeometryKind::parallel2d;
    else if (kind == "parallel3d")
        g.kind = GeometryKind::parallel3d;
    else if (kind == "laminography")
        g.kind = GeometryKind::laminography;
    else
        throw ConfigError("geometry.kind: unknown value '" + kind + "'");
    g.tilt_deg = cfg.get_num("geometry.tilt_deg", 0.0);
    g.detector_channels = cfg.get_int("geometry.detector_channels", 128);
    g.detector_rows = cfg.get_int("geometry.detector_rows", 1);
    g.channel_pitch = cfg.get_num("geometry.channel_pitch", 1.0);
    return g;
}

ProjectorSpec build_projector_spec(const RunConfig& cfg,
                                   const AngleSchedule& sched, int nz, int ny,
                                   int nx, double voxel) {
    ProjectorSpec spec;
    spec.geometry = build_geometry(cfg);
    spec.schedule = sched;
    spec.nz = nz;
    spec.ny = ny;
    spec.nx = nx;
    spec.voxel_size = voxel;
    spec.step_scale = cfg.get_num("geometry.step_scale", 0.5);
    return spec;
}

std::optional<MeasurementMask> build_mask(const RunConfig& cfg,
                                          const AngleSchedule& sched, int nr,
                                          int nc) {
    const auto& blocked = cfg.all("geometry.blocked");
    if (blocked.empty()) return std::nullopt;
    std::vector<std::pair<double, double>> ranges;
    for (const std::string& b : blocked) {
        std::vector<double> f = split_nums(b, "geometry.blocked");
        if (f.size() != 2)
            throw ConfigError("geometry.blocked: expected 'lo_deg hi_deg'");
        ranges.emplace_back(f[0], f[1]);
    }
    return beam_block_mask(sched, ranges, nr, nc);
}

FidelityModel build_fidelity(const RunConfig& cfg) {
    FidelityModel fid;
    std::string kind = cfg.get("fidelity.kind", "wls");
    if (kind == "wls")
        fid.kind = FidelityKind::wls;
    else if (kind == "wls_gain_offset")
        fid.kind = FidelityKind::wls_gain_offset;
    else if (kind == "robust_genhuber")
        fid.kind = FidelityKind::robust_genhuber;
    else if (kind == "robust_student_t")
        fid.kind = FidelityKind::robust_student_t;
    else if (kind == "poisson_approx")
        fid.kind = FidelityKind::poisson_approx;
    else
        throw ConfigError("fidelity.kind: unknown value '" + kind + "'");
    fid.T = cfg.get_num("fidelity.T", fid.T);
    fid.delta = cfg.get_num("fidelity.delta", fid.delta);
    fid.nu = cfg.get_num("fidelity.nu", fid.nu);
    std::string mode = cfg.get("calibration.mode", "none");
    if (mode == "none")
        fid.gain_offset_mode = GainOffsetMode::none;
    else if (mode == "per_view")
        fid.gain_offset_mode = GainOffsetMode::per_view;
    else if (mode == "per_channel")
        fid.gain_offset_mode = GainOffsetMode::per_channel;
    else
        throw ConfigError("calibration.mode: unknown value '" + mode + "'");
    return fid;
}

PriorModel build_prior(const RunConfig& cfg) {
    PriorModel prior;
    std::string kind = cfg.get("prior.kind", "qggmrf");
    if (kind == "quadratic")
        prior.rho_kind = PriorKind::quadratic;
    else if (kind == "qggmrf")
        prior.rho_kind = PriorKind::qggmrf;
    else
        throw ConfigError("prior.kind: unknown value '" + kind + "'");
    prior.p = cfg.get_num("prior.p", prior.p);
    prior.q = cfg.get_num("prior.q", prior.q);
    prior.T = cfg.get_num("prior.T", prior.T);
    prior.sigma_x = cfg.get_num("prior.sigma_x", prior.sigma_x);
    prior.beta_s = cfg.get_num("prior.beta_s", prior.beta_s);
    prior.beta_t = cfg.get_num("prior.beta_t", prior.beta_t);
    return prior;
}

ReconOptions build_recon_opts(const RunConfig& cfg) {
    ReconOptions o;
    o.max_outer_iters = cfg.get_int("recon.max_outer_iters", o.max_outer_iters);
    o.stop_rel_cost = cfg.get_num("recon.stop_rel_cost", o.stop_rel_cost);
    o.stop_rel_x = cfg.get_num("recon.stop_rel_x", o.stop_rel_x);
    o.nonneg = cfg.get_int("recon.nonneg", 1) != 0;
    o.multires_levels = cfg.get_int("recon.multires_levels", 1);
    std::string init = cfg.get("recon.init", "zero");
    if (init == "zero")
        o.init = InitKind::zero;
    else if (init == "fbp")
        o.init = InitKind::fbp;
    else
        throw ConfigError("recon.init: unknown value '" + init + "'");
    o.calib_every = cfg.get_int("recon.calib_every", 1);
    o.seed = static_cast<uint64_t>(cfg.get_num("recon.seed", 0));
    return o;
}

// ---------------------------------------------------------------------------
// Output helpers

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

void write_resolved(const RunConfig& cfg, const std::string& path) {
    write_text(path, cfg.resolved_text());
}

void write_previews(const Volume& x, const RunConfig& cfg,
                    const std::string& prefix) {
    if (cfg.get_int("output.pgm", 0) == 0) return;
    int zc = x.nz / 2;
    for (int t = 0; t < x.nt; ++t)
        render_pgm(&x.data[(static_cast<size_t>(t) * x.nz + zc) * x.ny * x.nx],
                   x.ny, x.nx, prefix + "_f" + std::to_string(t) + ".pgm");
}

void check_finite(const Volume& x, const std::string& what) {
    if (!x.finite()) throw NumericError(what + ": non-finite values produced");
}

void write_truth_csv(const TruthParams& t, const std::string& path) {
    std::ostringstream out;
    out << "kind,a,b,c,value\n";
    for (size_t v = 0; v < t.view_gains.size(); ++v)
        out << "view_gain," << v << ",,," << t.view_gains[v] << "\n";
    for (size_t v = 0; v < t.view_offsets.size(); ++v)
        out << "view_offset," << v << ",,," << t.view_offsets[v] << "\n";
    for (size_t c = 0; c < t.channel_gains.size(); ++c)
        out << "channel_gain," << c << ",,," << t.channel_gains[c] << "\n";
    for (const ZingerHit& z : t.zingers)
        out << "zinger," << z.view << "," << z.row << "," << z.channel << ",1\n";
    write_text(path, out.str());
}

void write_calib_csv(const CalibrationState& c, const std::string& path) {
    std::ostringstream out;
    out << "kind,index,value\n";
    for (size_t v = 0; v < c.view_gains.size(); ++v)
        out << "view_gain," << v << "," << c.view_gains[v] << "\n";
    for (size_t v = 0; v < c.view_offsets.size(); ++v)
        out << "view_offset," << v << "," << c.view_offsets[v] << "\n";
    for (size_t ch = 0; ch < c.channel_offsets.size(); ++ch)
        out << "channel_offset," << ch << "," << c.channel_offsets[ch] << "\n";
    write_text(path, out.str());
}

void write_trace_csv(const CostTrace& trace, const std::string& path) {
    std::ostringstream out;
    out.precision(17);
    out << "iter,total_cost,fidelity_cost,prior_cost\n";
    for (const auto& e : trace.values)
        out << e.outer_iteration << "," << e.total_cost << ","
            << e.fidelity_cost << "," << e.prior_cost << "\n";
    write_text(path, out.str());
}

std::string metrics_csv(const MetricReport& rep) {
    std::ostringstream out;
    out.precision(12);
    out << "scope,frame,rmse,nrmse,psnr,ring\n";
    out << "overall,," << rep.rmse << "," << rep.nrmse << "," << rep.psnr << ","
        << rep.ring << "\n";
    for (const auto& row : rep.per_frame)
        out << "frame," << row.frame << "," << row.rmse << "," << row.nrmse
            << "," << row.psnr << ",\n";
    return out.str();
}

std::string metrics_text(const MetricReport& rep) {
    std::ostringstream out;
    out.precision(6);
    out << "rmse   " << rep.rmse << "\n"
        << "nrmse  " << rep.nrmse << "\n"
        << "psnr   " << rep.psnr << " dB\n"
        << "ring   " << rep.ring << "\n";
    for (const auto& row : rep.per_frame)
        out << "frame " << row.frame << ": rmse " << row.rmse << "  nrmse "
            << row.nrmse << "  psnr " << row.psnr << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_phantom(const std::string& config, const std::string& out) {
    RunConfig cfg = cli::parse_config(config);
    Volume x = make_phantom(build_phantom_spec(cfg));
    check_finite(x, "phantom");
    write_container(out, x);
    write_previews(x, cfg, out);
    write_resolved(cfg, out + ".resolved.cfg");
    return 0;
}

int cmd_simulate(const std::string& config, const std::string& phantom_path,
                 const std::string& prefix, std::optional<uint64_t> seed) {
    RunConfig cfg = cli::parse_config(config);
    if (seed) cfg.set("corruption.seed", std::to_string(*seed));
    if (!fs::exists(phantom_path))
        throw IoError("phantom container not found: " + phantom_path);
    Volume x = read_volume(phantom_path);

    AngleSchedule sched = build_schedule(cfg);
    ProjectorSpec spec =
        build_projector_spec(cfg, sched, x.nz, x.ny, x.nx, x.voxel_size);
    spec.validate();

    CorruptionSpec corr;
    corr.dose_I0 = cfg.get_num("corruption.dose_I0", corr.dose_I0);
    corr.view_gain_sigma =
        cfg.get_num("corruption.view_gain_sigma", corr.view_gain_sigma);
    corr.view_offset = cfg.get_num("corruption.view_offset", corr.view_offset);
    corr.channel_gain_sigma =
        cfg.get_num("corruption.channel_gain_sigma", corr.channel_gain_sigma);
    corr.zinger_rate = cfg.get_num("corruption.zinger_rate", corr.zinger_rate);
    corr.zinger_amplitude =
        cfg.get_num("corruption.zinger_amplitude", corr.zinger_amplitude);
    corr.seed = static_cast<uint64_t>(cfg.get_num("corruption.seed", 0));

    SynthesisResult res = synthesize(x, spec, corr);
    auto mask = build_mask(cfg, sched, spec.geometry.detector_rows,
                           spec.geometry.detector_channels);
    WeightMap W = compute_weights(res.counts, mask ? &*mask : nullptr);

    write_container(prefix + "_counts.sct", res.counts);
    write_container(prefix + "_log.sct", res.log_norm);
    write_container(prefix + "_weights.sct", W);
    write_truth_csv(res.truth, prefix + "_truth.csv");
    write_text(prefix + "_schedule.csv", sched.to_csv());
    write_resolved(cfg, prefix + "_resolved.cfg");
    return 0;
}

int cmd_reconstruct(const std::string& config, const std::string& data_prefix,
                    const std::string& algo, const std::string& prefix,
                    std::optional<uint64_t> seed) {
    RunConfig cfg = cli::parse_config(config);
    if (seed) cfg.set("recon.seed", std::to_string(*seed));

    std::string sino_path = data_prefix + "_log.sct";
    if (!fs::exists(sino_path))
        throw IoError("sinogram not found: " + sino_path);
    Sinogram y = read_sinogram(sino_path);

    AngleSchedule sched;
    std::string sched_path = data_prefix + "_schedule.csv";
    if (fs::exists(sched_path)) {
        std::ifstream in(sched_path);
        std::stringstream ss;
        ss << in.rdbuf();
        sched = AngleSchedule::from_csv(ss.str());
    } else {
        sched = build_schedule(cfg);
    }

    Geometry geo = build_geometry(cfg);
    int nx = cfg.get_int("recon.nx", geo.detector_channels);
    int ny = cfg.get_int("recon.ny", nx);
    int nz = cfg.get_int("recon.nz", geo.detector_rows);
    double voxel = cfg.get_num("recon.voxel_size",
                               cfg.get_num("phantom.voxel_size", 1.0));
    ProjectorSpec spec = build_projector_spec(cfg, sched, nz, ny, nx, voxel);
    spec.validate();

    if (algo == "fbp") {
        Volume x = fbp(y, spec,
                       cfg.get("recon.fbp_filter", "ramlak") == "hamming"
                           ? FbpFilter::hamming
                           : FbpFilter::ramlak);
        check_finite(x, "fbp");
        write_container(prefix + "_recon.sct", x);
        write_previews(x, cfg, prefix);
        write_resolved(cfg, prefix + "_resolved.cfg");
        return 0;
    }
    if (algo != "mbir" && algo != "mbir4d")
        throw ConfigError("unknown algorithm '" + algo + "'");

    std::string w_path = data_prefix + "_weights.sct";
    if (!fs::exists(w_path)) throw IoError("weight map not found: " + w_path);
    WeightMap W = read_weights(w_path);

    FidelityModel fid = build_fidelity(cfg);
    PriorModel prior = build_prior(cfg);
    ReconOptions opts = build_recon_opts(cfg);

    ReconResult res = algo == "mbir4d"
                          ? mbir4d_reconstruct(y, W, spec, fid, prior, opts)
                          : mbir_reconstruct(y, W, spec, fid, prior, opts);
    check_finite(res.x_hat, "reconstruction");

    double kkt = kkt_residual(res.x_hat, res.calib_hat, y, W, fid, prior, spec);

    write_container(prefix + "_recon.sct", res.x_hat);
    write_trace_csv(res.trace, prefix + "_trace.csv");
    write_calib_csv(res.calib_hat, prefix + "_calib.csv");
    {
        std::ostringstream out;
        out.precision(12);
        out << kkt << "\n";
        write_text(prefix + "_kkt.txt", out.str());
    }
    write_previews(res.x_hat, cfg, prefix);
    write_resolved(cfg, prefix + "_resolved.cfg");
    std::cerr << "reconstruct: " << res.iterations_run << " iterations, stop="
              << res.stop_reason << ", kkt=" << kkt << "\n";
    return 0;
}

int cmd_metrics(const std::string& recon_path, const std::string& truth_path,
                const std::string& out) {
    if (!fs::exists(recon_path)) throw IoError("not found: " + recon_path);
    if (!fs::exists(truth_path)) throw IoError("not found: " + truth_path);
    Volume test = read_volume(recon_path);
    Volume ref = read_volume(truth_path);
    MetricReport rep = evaluate(test, ref);
    write_text(out, metrics_csv(rep));
    write_text(out + ".txt", metrics_text(rep));
    std::cout << metrics_text(rep);
    return 0;
}

int cmd_sweep(const std::string& config, const std::string& param,
              const std::string& values_csv, const std::string& out_dir,
              const std::string& data_prefix, const std::string& truth_path,
              const std::string& algo, std::optional<uint64_t> seed) {
    RunConfig cfg = cli::parse_config(config);
    // The swept key must be a real config key; catch typos up front.
    {
        RunConfig probe;
        probe.set(param, "0");
        std::string tmp = out_dir + "/.probe.cfg";
        fs::create_directories(out_dir);
        write_text(tmp, param + " = 0\n");
        cli::parse_config(tmp);  // throws on unknown key
        fs::remove(tmp);
    }

    std::vector<std::string> values;
    {
        std::istringstream in(values_csv);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            if (tok.empty()) continue;
            if (std::find(values.begin(), values.end(), tok) != values.end()) {
                std::cerr << "sweep: duplicate value '" << tok
                          << "' ignored\n";
                continue;
            }
            values.push_back(tok);
        }
    }
    if (values.empty()) throw ConfigError("sweep: no values given");

    struct Row {
        double value;
        MetricReport rep;
    };
    std::vector<Row> rows;
    for (const std::string& v : values) {
        RunConfig run = cfg;
        run.set(param, v);
        std::string sub = out_dir + "/" + param + "=" + v;
        fs::create_directories(sub);
        std::string run_cfg = sub + "/run.cfg";
        write_text(run_cfg, run.resolved_text());
        int rc = cmd_reconstruct(run_cfg, data_prefix, algo, sub + "/out", seed);
        if (rc != 0) return rc;
        Volume test = read_volume(sub + "/out_recon.sct");
        Volume ref = read_volume(truth_path);
        MetricReport rep = evaluate(test, ref);
        write_text(sub + "/metrics.csv", metrics_csv(rep));
        rows.push_back({std::stod(v), rep});
    }
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.value < b.value; });

    std::ostringstream out;
    out.precision(12);
    out << "value,rmse,nrmse,psnr,ring\n";
    for (const Row& r : rows)
        out << r.value << "," << r.rep.rmse << "," << r.rep.nrmse << ","
            << r.rep.psnr << "," << r.rep.ring << "\n";
    write_text(out_dir + "/summary.csv", out.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation and model-based reconstruction toolkit for "
                 "parallel-beam and laminographic CT"};
    app.require_subcommand(1);

    int threads = 0;
    std::optional<uint64_t> seed;
    app.add_option("--threads", threads,
                   "worker threads (default: all logical cores; 1 for "
                   "bit-deterministic runs)");
    app.add_option("--seed", seed, "override the config RNG seed");

    std::string config, out, phantom_path, prefix, data_prefix, algo = "mbir";
    std::string recon_path, truth_path, param, values, out_dir;

    auto* ph = app.add_subcommand("phantom", "generate a phantom volume");
    ph->add_option("--config", config)->required();
    ph->add_option("--out", out)->required();

    auto* sim = app.add_subcommand("simulate", "synthesize noisy measurements");
    sim->add_option("--config", config)->required();
    sim->add_option("--phantom", phantom_path)->required();
    sim->add_option("--out-prefix", prefix)->required();

    auto* rec = app.add_subcommand("reconstruct", "run fbp / mbir / mbir4d");
    rec->add_option("--config", config)->required();
    rec->add_option("--data-prefix", data_prefix)->required();
    rec->add_option("--algo", algo)
        ->check(CLI::IsMember({"fbp", "mbir", "mbir4d"}));
    rec->add_option("--out-prefix", prefix)->required();

    auto* met = app.add_subcommand("metrics", "compare against ground truth");
    met->add_option("--recon", recon_path)->required();
    met->add_option("--truth", truth_path)->required();
    met->add_option("--out", out)->required();

    auto* sw = app.add_subcommand("sweep", "reconstruct over a parameter grid");
    sw->add_option("--config", config)->required();
    sw->add_option("--param", param)->required();
    sw->add_option("--values", values)->required();
    sw->add_option("--out-dir", out_dir)->required();
    sw->add_option("--data-prefix", data_prefix)->required();
    sw->add_option("--truth", truth_path)->required();
    sw->add_option("--algo", algo)->check(CLI::IsMember({"mbir", "mbir4d"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (app.got_subcommand(ph)) return cmd_phantom(config, out);
        if (app.got_subcommand(sim))
            return cmd_simulate(config, phantom_path, prefix, seed);
        if (app.got_subcommand(rec))
            return cmd_reconstruct(config, data_prefix, algo, prefix, seed);
        if (app.got_subcommand(met))
            return cmd_metrics(recon_path, truth_path, out);
        if (app.got_subcommand(sw))
            return cmd_sweep(config, param, values, out_dir, data_prefix,
                             truth_path, algo, seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ContainerParseError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
