#include "sct/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sct {

namespace {

uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct IcdState {
    std::vector<SparseProjection> mats;  // one per frame
    std::vector<double> p;               // A x, global measurement order
    std::vector<double> e;               // y - g*p - d, same order
    std::vector<double> kappa;           // surrogate curvature scale per row
};

double view_gain(const CalibrationState& c, int v) {
    return c.view_gains.empty() ? 1.0 : c.view_gains[v];
}

// p = A x for every frame, exact against the stored sparse matrices.
void project_all(const std::vector<SparseProjection>& mats, const Volume& x,
                 std::vector<double>& p) {
    p.assign(p.size(), 0.0);
    for (int f = 0; f < static_cast<int>(mats.size()); ++f) {
        const SparseProjection& m = mats[f];
        int frame = x.nt == 1 ? 0 : f;
        std::vector<float> xf(x.data.begin() + frame * x.frame_size(),
                              x.data.begin() + (frame + 1) * x.frame_size());
        std::vector<double> pf = m.apply(xf);
        for (size_t i = 0; i < m.n_rows; ++i) p[m.meas_of_row[i]] = pf[i];
    }
}

void refresh_projections(IcdState& st, const Volume& x) {
    project_all(st.mats, x, st.p);
}

void refresh_residual(IcdState& st, const CalibrationState& calib,
                      const Sinogram& y) {
    const size_t per_view =
        static_cast<size_t>(y.n_rows) * y.n_channels;
    for (int v = 0; v < y.n_views; ++v) {
        double g = view_gain(calib, v);
        double off = calib.view_offsets.empty() ? 0.0 : calib.view_offsets[v];
        for (size_t i = v * per_view; i < (v + 1) * per_view; ++i) {
            double doff = calib.channel_offsets.empty()
                              ? 0.0
                              : calib.channel_offsets[i % y.n_channels];
            st.e[i] = double(y.data[i]) - g * st.p[i] - off - doff;
        }
    }
}

void refresh_kappa(IcdState& st, const WeightMap& W, const FidelityModel& fid) {
    bool robust = fid.kind == FidelityKind::robust_genhuber ||
                  fid.kind == FidelityKind::robust_student_t;
    if (!robust) {
        std::fill(st.kappa.begin(), st.kappa.end(), 1.0);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(st.e.size()); ++i)
        st.kappa[i] = gamma_surrogate_coeff(
            st.e[i] * std::sqrt(double(W.data[i])), fid);
}

// One full voxel sweep. Returns (sum of squared applied deltas, sum x^2).
std::pair<double, double> icd_sweep(IcdState& st, Volume& x,
                                    const CalibrationState& calib,
                                    const WeightMap& W, const PriorModel& prior,
                                    bool nonneg, uint64_t sweep_seed) {
    const size_t n3d = x.frame_size();
    const int n_frames = x.nt;
    const NeighborStencil& stencil = NeighborStencil::get(x.nz > 1);

    std::vector<uint32_t> order(n3d);
    std::iota(order.begin(), order.end(), 0u);
    std::mt19937_64 rng(mix64(sweep_seed));
    std::shuffle(order.begin(), order.end(), rng);

    double dx2 = 0.0;
    for (uint32_t pos : order) {
        int iz = static_cast<int>(pos / (static_cast<size_t>(x.ny) * x.nx));
        int rem = static_cast<int>(pos % (static_cast<size_t>(x.ny) * x.nx));
        int iy = rem / x.nx, ix = rem % x.nx;

        for (int f = 0; f < n_frames; ++f) {
            const SparseProjection& m = st.mats[std::min<size_t>(
                f, st.mats.size() - 1)];
            size_t base = static_cast<size_t>(f) * n3d;
            double xc = x.data[base + pos];

            double theta1 = 0.0, theta2 = 0.0;
            for (size_t k = m.col_ptr[pos]; k < m.col_ptr[pos + 1]; ++k) {
                size_t row = m.csc_row[k];
                double a = m.csc_val[k];
                size_t meas = m.meas_of_row[row];
                double g = view_gain(calib, m.view_of_row[row]);
                double cw = st.kappa[meas] * double(W.data[meas]);
                theta1 -= cw * g * a * st.e[meas];
                theta2 += cw * g * g * a * a;
            }
            if (prior.beta_s > 0.0) {
                for (const auto& o : stencil.all) {
                    int z2 = iz + o.dz, y2 = iy + o.dy, x2 = ix + o.dx;
                    if (z2 < 0 || z2 >= x.nz || y2 < 0 || y2 >= x.ny || x2 < 0 ||
                        x2 >= x.nx)
                        continue;
                    double d = xc - x.at(f, z2, y2, x2);
                    double a = rho_surrogate_coeff(d, prior);
                    theta1 += prior.beta_s * o.w * a * d;
                    theta2 += prior.beta_s * o.w * a;
                }
            }
            if (prior.beta_t > 0.0) {
                for (int dt : {-1, 1}) {
                    int f2 = f + dt;
                    if (f2 < 0 || f2 >= n_frames) continue;
                    double d = xc - double(x.data[f2 * n3d + pos]);
                    double a = rho_surrogate_coeff(d, prior);
                    theta1 += prior.beta_t * a * d;
                    theta2 += prior.beta_t * a;
                }
            }
            if (theta2 <= 0.0) continue;

            double xn = xc - theta1 / theta2;
            if (nonneg && xn < 0.0) xn = 0.0;
            float stored = static_cast<float>(xn);
            double delta = double(stored) - xc;
            if (delta == 0.0) continue;
            x.data[base + pos] = stored;
            dx2 += delta * delta;

            for (size_t k = m.col_ptr[pos]; k < m.col_ptr[pos + 1]; ++k) {
                size_t row = m.csc_row[k];
                double a = m.csc_val[k];
                size_t meas = m.meas_of_row[row];
                double g = view_gain(calib, m.view_of_row[row]);
                st.p[meas] += a * delta;
                st.e[meas] -= g * a * delta;
            }
        }
    }
    double x2 = 0.0;
    for (float v : x.data) x2 += double(v) * double(v);
    return {dx2, x2};
}

Volume make_init(const Sinogram& y, const ProjectorSpec& spec,
                 const ReconOptions& opts, int n_frames) {
    if (opts.init == InitKind::given) {
        const Volume& v = opts.init_volume;
        if (v.nz != spec.nz || v.ny != spec.ny || v.nx != spec.nx ||
            (v.nt != n_frames && v.nt != 1))
            throw DimensionError("reconstruct: init volume shape mismatch");
        if (v.nt == n_frames) return v;
        Volume out(n_frames, spec.nz, spec.ny, spec.nx, spec.voxel_size);
        for (int f = 0; f < n_frames; ++f)
            std::copy(v.data.begin(), v.data.end(),
                      out.data.begin() + f * out.frame_size());
        return out;
    }
    Volume out(n_frames, spec.nz, spec.ny, spec.nx, spec.voxel_size);
    if (opts.init == InitKind::fbp) {
        Volume f = fbp(y, spec);
        for (int t = 0; t < n_frames; ++t)
            std::copy(f.data.begin(), f.data.end(),
                      out.data.begin() + t * out.frame_size());
        if (opts.nonneg)
            for (float& v : out.data)
                if (v < 0.0f) v = 0.0f;
    }
    return out;
}

ReconResult run_icd(const Sinogram& y, const WeightMap& W,
                    const ProjectorSpec& spec, const FidelityModel& fid,
                    const PriorModel& prior, const ReconOptions& opts,
                    int n_frames) {
    spec.validate();
    fid.validate();
    prior.validate();
    opts.validate();
    if (y.size() != spec.n_measurements() || W.size() != y.size())
        throw DimensionError("reconstruct: data shape mismatch");

    const bool calibrate = fid.kind == FidelityKind::wls_gain_offset &&
                           fid.gain_offset_mode != GainOffsetMode::none;

    ReconResult res;
    res.x_hat = make_init(y, spec, opts, n_frames);
    res.calib_hat =
        CalibrationState::identity(y.n_views, y.n_channels);

    IcdState st;
    auto frames = spec.schedule.views_by_frame();
    if (n_frames == 1) {
        std::vector<int> all(y.n_views);
        std::iota(all.begin(), all.end(), 0);
        st.mats.push_back(build_sparse_projection(spec, all));
    } else {
        for (auto& fv : frames)
            st.mats.push_back(build_sparse_projection(spec, fv));
    }
    st.p.assign(y.size(), 0.0);
    st.e.assign(y.size(), 0.0);
    st.kappa.assign(y.size(), 1.0);

    refresh_projections(st, res.x_hat);
    refresh_residual(st, res.calib_hat, y);

    double prev_cost = 0.0;
    bool have_prev = false;
    for (int iter = 0; iter < opts.max_outer_iters; ++iter) {
        if (iter > 0 && iter % 10 == 0) {
            // Periodic re-sync against float drift from incremental updates.
            refresh_projections(st, res.x_hat);
            refresh_residual(st, res.calib_hat, y);
        }
        refresh_kappa(st, W, fid);

        auto [dx2, x2] = icd_sweep(st, res.x_hat, res.calib_hat, W, prior,
                                   opts.nonneg,
                                   mix64(opts.seed) ^ (uint64_t(iter) + 1));

        if (calibrate && (iter + 1) % opts.calib_every == 0) {
            CalibrationState cand = solve_calibration_from_projections(
                st.p, y, W, fid.gain_offset_mode);
            // Accept only if the full objective does not increase; the gauge
            // rescales x, which moves the prior term as well.
            double cur = fidelity_cost(st.p, res.calib_hat, y, W, fid) +
                         prior_cost(res.x_hat, prior);
            Volume x_cand = res.x_hat;
            double gauge = apply_gauge(cand, x_cand);
            std::vector<double> p_cand = st.p;
            if (gauge != 1.0) project_all(st.mats, x_cand, p_cand);
            double next = fidelity_cost(p_cand, cand, y, W, fid) +
                          prior_cost(x_cand, prior);
            if (next <= cur) {
                res.calib_hat = cand;
                res.x_hat = std::move(x_cand);
                st.p = std::move(p_cand);
                refresh_residual(st, res.calib_hat, y);
            }
        }

        double fcost = fidelity_cost(st.p, res.calib_hat, y, W, fid);
        double pcost = prior_cost(res.x_hat, prior);
        res.trace.append(iter, fcost, pcost);
        res.iterations_run = iter + 1;
        double cost = fcost + pcost;

        double rel_x = std::sqrt(dx2) / std::max(std::sqrt(x2), 1e-30);
        if (rel_x < opts.stop_rel_x) {
            res.converged = true;
            res.stop_reason = "rel_x";
            break;
        }
        if (have_prev) {
            double rel_c = std::fabs(prev_cost - cost) /
                           std::max(std::fabs(prev_cost), 1e-30);
            if (rel_c < opts.stop_rel_cost) {
                res.converged = true;
                res.stop_reason = "rel_cost";
                break;
            }
        }
        prev_cost = cost;
        have_prev = true;
    }
    if (!res.converged) res.stop_reason = "max_iters";
    return res;
}

// Bin channel pairs weighted by W; the weight of a merged bin is the sum.
void coarsen_data(const Sinogram& y, const WeightMap& W, bool bin_rows,
                  Sinogram& yc, WeightMap& Wc) {
    int nr = bin_rows ? (y.n_rows + 1) / 2 : y.n_rows;
    int nc = (y.n_channels + 1) / 2;
    yc = Sinogram(y.n_views, nr, nc, y.kind);
    Wc = WeightMap(y.n_views, nr, nc, 0.0f);
    for (int v = 0; v < y.n_views; ++v)
        for (int r = 0; r < nr; ++r)
            for (int c = 0; c < nc; ++c) {
                double sw = 0.0, swy = 0.0, sy = 0.0;
                int n = 0;
                for (int dr = 0; dr < (bin_rows ? 2 : 1); ++dr)
                    for (int dc = 0; dc < 2; ++dc) {
                        int r0 = bin_rows ? 2 * r + dr : r;
                        int c0 = 2 * c + dc;
                        if (r0 >= y.n_rows || c0 >= y.n_channels) continue;
                        double w = W.at(v, r0, c0);
                        sw += w;
                        swy += w * y.at(v, r0, c0);
                        sy += y.at(v, r0, c0);
                        ++n;
                    }
                yc.at(v, r, c) = static_cast<float>(
                    sw > 0.0 ? swy / sw : (n > 0 ? sy / n : 0.0));
                Wc.at(v, r, c) = static_cast<float>(sw);
            }
}

ProjectorSpec coarsen_spec(const ProjectorSpec& spec, bool bin_rows) {
    ProjectorSpec c = spec;
    c.nx = std::max(1, spec.nx / 2);
    c.ny = std::max(1, spec.ny / 2);
    c.nz = bin_rows ? std::max(1, spec.nz / 2) : spec.nz;
    c.voxel_size = spec.voxel_size * 2.0;
    c.geometry.detector_channels = (spec.geometry.detector_channels + 1) / 2;
    c.geometry.detector_rows =
        bin_rows ? (spec.geometry.detector_rows + 1) / 2 : spec.geometry.detector_rows;
    c.geometry.channel_pitch = spec.geometry.channel_pitch * 2.0;
    return c;
}

// Position-based trilinear interpolation between grids of the same extent.
Volume upsample_to(const Volume& src, int nz, int ny, int nx, double voxel) {
    Volume out(src.nt, nz, ny, nx, voxel);
    auto map = [](int i, int n_to, int n_from) {
        double r = double(n_from) / n_to;
        double c = (i + 0.5) * r - 0.5;
        return std::clamp(c, 0.0, double(n_from - 1));
    };
    for (int t = 0; t < src.nt; ++t)
        for (int z = 0; z < nz; ++z) {
            double cz = map(z, nz, src.nz);
            int z0 = static_cast<int>(cz);
            int z1 = std::min(z0 + 1, src.nz - 1);
            double fz = cz - z0;
            for (int y = 0; y < ny; ++y) {
                double cy = map(y, ny, src.ny);
                int y0 = static_cast<int>(cy);
                int y1 = std::min(y0 + 1, src.ny - 1);
                double fy = cy - y0;
                for (int x = 0; x < nx; ++x) {
                    double cx = map(x, nx, src.nx);
                    int x0 = static_cast<int>(cx);
                    int x1 = std::min(x0 + 1, src.nx - 1);
                    double fx = cx - x0;
                    double v =
                        (1 - fz) * ((1 - fy) * ((1 - fx) * src.at(t, z0, y0, x0) +
                                                fx * src.at(t, z0, y0, x1)) +
                                    fy * ((1 - fx) * src.at(t, z0, y1, x0) +
                                          fx * src.at(t, z0, y1, x1))) +
                        fz * ((1 - fy) * ((1 - fx) * src.at(t, z1, y0, x0) +
                                          fx * src.at(t, z1, y0, x1)) +
                              fy * ((1 - fx) * src.at(t, z1, y1, x0) +
                                    fx * src.at(t, z1, y1, x1)));
                    out.at(t, z, y, x) = static_cast<float>(v);
                }
            }
        }
    return out;
}

}  // namespace

void ReconOptions::validate() const {
    if (max_outer_iters < 1)
        throw std::invalid_argument("options: max_outer_iters < 1");
    if (stop_rel_cost < 0.0 || stop_rel_x < 0.0)
        throw std::invalid_argument("options: negative stopping tolerance");
    if (multires_levels < 1)
        throw std::invalid_argument("options: multires_levels < 1");
    if (calib_every < 1)
        throw std::invalid_argument("options: calib_every < 1");
}

ReconResult mbir_reconstruct(const Sinogram& y, const WeightMap& W,
                             const ProjectorSpec& spec, const FidelityModel& fid,
                             const PriorModel& prior, const ReconOptions& opts) {
    if (opts.multires_levels > 1 && opts.init != InitKind::given) {
        ReconOptions inner = opts;
        inner.init = InitKind::given;
        inner.init_volume = multires_init(y, W, spec, fid, prior, opts);
        inner.multires_levels = 1;
        return run_icd(y, W, spec, fid, prior, inner, 1);
    }
    return run_icd(y, W, spec, fid, prior, opts, 1);
}

ReconResult mbir4d_reconstruct(const Sinogram& y, const WeightMap& W,
                               const ProjectorSpec& spec,
                               const FidelityModel& fid, const PriorModel& prior,
                               const ReconOptions& opts) {
    return run_icd(y, W, spec, fid, prior, opts, spec.schedule.n_frames);
}

Volume multires_init(const Sinogram& y, const WeightMap& W,
                     const ProjectorSpec& spec, const FidelityModel& fid,
                     const PriorModel& prior, const ReconOptions& opts) {
    if (opts.multires_levels < 2) return make_init(y, spec, opts, 1);
    const bool bin_rows = spec.nz > 1;

    // Build the pyramid from fine to coarse.
    std::vector<ProjectorSpec> specs{spec};
    std::vector<Sinogram> ys{y};
    std::vector<WeightMap> Ws{W};
    for (int l = 1; l < opts.multires_levels; ++l) {
        const ProjectorSpec& prev = specs.back();
        if (prev.nx < 4 || prev.ny < 4 || prev.geometry.detector_channels < 4)
            break;
        specs.push_back(coarsen_spec(prev, bin_rows));
        Sinogram yc;
        WeightMap Wc;
        coarsen_data(ys.back(), Ws.back(), bin_rows, yc, Wc);
        ys.push_back(std::move(yc));
        Ws.push_back(std::move(Wc));
    }

    ReconOptions level_opts = opts;
    level_opts.multires_levels = 1;
    level_opts.init = InitKind::zero;

    Volume x;
    for (int l = static_cast<int>(specs.size()) - 1; l >= 1; --l) {
        if (!x.data.empty()) {
            level_opts.init = InitKind::given;
            level_opts.init_volume = upsample_to(x, specs[l].nz, specs[l].ny,
                                                 specs[l].nx, specs[l].voxel_size);
        }
        x = run_icd(ys[l], Ws[l], specs[l], fid, prior, level_opts, 1).x_hat;
    }
    if (x.data.empty())
        return Volume(1, spec.nz, spec.ny, spec.nx, spec.voxel_size);
    return upsample_to(x, spec.nz, spec.ny, spec.nx, spec.voxel_size);
}

double kkt_residual(const Volume& x, const CalibrationState& calib,
                    const Sinogram& y, const WeightMap& W,
                    const FidelityModel& fid, const PriorModel& prior,
                    const ProjectorSpec& spec) {
    std::vector<double> g = eval_gradient(x, calib, y, W, fid, prior, spec);
    double worst = 0.0;
    for (size_t j = 0; j < g.size(); ++j) {
        double r = x.data[j] > 0.0f ? std::fabs(g[j]) : std::max(0.0, -g[j]);
        worst = std::max(worst, r);
    }
    return worst;
}

}  // namespace sct
