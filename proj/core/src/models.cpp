#include "sct/models.hpp"

#include <cmath>
#include <stdexcept>

namespace sct {

void FidelityModel::validate() const {
    if (!(T > 0.0)) throw std::invalid_argument("fidelity: T must be > 0");
    if (!(delta > 0.0 && delta <= 1.0))
        throw std::invalid_argument("fidelity: delta must be in (0, 1]");
    if (!(nu > 0.0)) throw std::invalid_argument("fidelity: nu must be > 0");
    if (kind == FidelityKind::wls_gain_offset &&
        gain_offset_mode == GainOffsetMode::none)
        throw std::invalid_argument(
            "fidelity: wls_gain_offset requires a calibration mode");
}

void PriorModel::validate() const {
    if (!(p >= 1.0 && p <= q && q <= 2.0))
        throw std::invalid_argument("prior: require 1 <= p <= q <= 2");
    if (!(T > 0.0)) throw std::invalid_argument("prior: T must be > 0");
    if (!(sigma_x > 0.0)) throw std::invalid_argument("prior: sigma_x must be > 0");
    if (beta_s < 0.0 || beta_t < 0.0)
        throw std::invalid_argument("prior: beta must be >= 0");
}

CalibrationState CalibrationState::identity(int n_views, int n_channels) {
    CalibrationState s;
    s.view_gains.assign(n_views, 1.0);
    s.view_offsets.assign(n_views, 0.0);
    s.channel_offsets.assign(n_channels, 0.0);
    return s;
}

bool CalibrationState::is_identity() const {
    for (double g : view_gains)
        if (g != 1.0) return false;
    for (double d : view_offsets)
        if (d != 0.0) return false;
    for (double d : channel_offsets)
        if (d != 0.0) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Prior potential

double rho(double delta, const PriorModel& prior) {
    double s = prior.sigma_x;
    if (prior.rho_kind == PriorKind::quadratic)
        return delta * delta / (2.0 * s * s);
    double u = std::fabs(delta);
    if (u == 0.0) return 0.0;
    double r = std::pow(u / (prior.T * s), prior.q - prior.p);
    return std::pow(u, prior.p) / (prior.p * std::pow(s, prior.p)) * r / (1.0 + r);
}

double rho_deriv(double delta, const PriorModel& prior) {
    double s = prior.sigma_x;
    if (prior.rho_kind == PriorKind::quadratic) return delta / (s * s);
    double u = std::fabs(delta);
    if (u == 0.0) return 0.0;
    double r = std::pow(u / (prior.T * s), prior.q - prior.p);
    double core = std::pow(u, prior.p - 1.0) / std::pow(s, prior.p);
    double g = r / (1.0 + r);
    double v = core * g * (1.0 + (prior.q - prior.p) / (prior.p * (1.0 + r)));
    return delta > 0.0 ? v : -v;
}

double rho_surrogate_coeff(double delta_prime, const PriorModel& prior) {
    double s = prior.sigma_x;
    if (prior.rho_kind == PriorKind::quadratic) return 1.0 / (s * s);
    double u = std::fabs(delta_prime);
    if (u > 0.0) return rho_deriv(u, prior) / u;
    // rho''(0): finite for q = 2 only.
    if (prior.q == 2.0) {
        double r0 = prior.p == prior.q ? 1.0 : 0.0;
        return 2.0 /
               (prior.p * std::pow(s, prior.p) *
                std::pow(prior.T * s, 2.0 - prior.p) * (1.0 + r0));
    }
    double eps = 1e-8 * s;
    return rho_deriv(eps, prior) / eps;
}

// ---------------------------------------------------------------------------
// Robust penalty

double gamma_fn(double e, const FidelityModel& fid) {
    if (fid.kind == FidelityKind::robust_student_t)
        return std::log(1.0 + e * e / fid.nu);
    double a = std::fabs(e);
    if (a < fid.T) return e * e;
    return 2.0 * fid.delta * fid.T * a + fid.T * fid.T * (1.0 - 2.0 * fid.delta);
}

double gamma_deriv(double e, const FidelityModel& fid) {
    if (fid.kind == FidelityKind::robust_student_t)
        return 2.0 * e / (fid.nu + e * e);
    double a = std::fabs(e);
    if (a < fid.T) return 2.0 * e;
    return e > 0.0 ? 2.0 * fid.delta * fid.T : -2.0 * fid.delta * fid.T;
}

double gamma_surrogate_coeff(double e_prime, const FidelityModel& fid) {
    if (fid.kind == FidelityKind::robust_student_t)
        return 2.0 / (fid.nu + e_prime * e_prime);
    double a = std::fabs(e_prime);
    if (a < fid.T) return 2.0;
    return 2.0 * fid.delta * fid.T / a;
}

ComposedSurrogate compose_surrogate(ScalarFn target, ScalarFn coeff, AffineMap h) {
    return ComposedSurrogate{std::move(target), std::move(coeff), h};
}

// ---------------------------------------------------------------------------
// Neighborhood stencil

const NeighborStencil& NeighborStencil::get(bool three_d) {
    static NeighborStencil s2 = [] {
        NeighborStencil s;
        double sum = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dy == 0 && dx == 0) continue;
                sum += 1.0 / std::sqrt(double(dy * dy + dx * dx));
            }
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dy == 0 && dx == 0) continue;
                double w = 1.0 / std::sqrt(double(dy * dy + dx * dx)) / sum;
                s.all.push_back({0, dy, dx, w});
                if (dy > 0 || (dy == 0 && dx > 0)) s.half.push_back({0, dy, dx, w});
            }
        return s;
    }();
    static NeighborStencil s3 = [] {
        NeighborStencil s;
        double sum = 0.0;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dz == 0 && dy == 0 && dx == 0) continue;
                    sum += 1.0 / std::sqrt(double(dz * dz + dy * dy + dx * dx));
                }
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dz == 0 && dy == 0 && dx == 0) continue;
                    double w =
                        1.0 / std::sqrt(double(dz * dz + dy * dy + dx * dx)) / sum;
                    s.all.push_back({dz, dy, dx, w});
                    if (dz > 0 || (dz == 0 && (dy > 0 || (dy == 0 && dx > 0))))
                        s.half.push_back({dz, dy, dx, w});
                }
        return s;
    }();
    return three_d ? s3 : s2;
}

// ---------------------------------------------------------------------------
// Cost evaluation

namespace {

// Projections for every view in schedule order, frame aware.
std::vector<double> project_all(const Volume& x, const ProjectorSpec& spec) {
    const AngleSchedule& sched = spec.schedule;
    const size_t per_view = static_cast<size_t>(spec.geometry.detector_rows) *
                            spec.geometry.detector_channels;
    std::vector<double> p(static_cast<size_t>(sched.n_views()) * per_view);
#pragma omp parallel for schedule(dynamic)
    for (int v = 0; v < sched.n_views(); ++v) {
        int frame = x.nt == 1 ? 0 : sched.frame_of_view[v];
        std::vector<float> xf(x.data.begin() + frame * x.frame_size(),
                              x.data.begin() + (frame + 1) * x.frame_size());
        std::vector<double> pv = forward_project_double(xf, spec, {v});
        std::copy(pv.begin(), pv.end(), p.begin() + v * per_view);
    }
    return p;
}

}  // namespace

double prior_cost(const Volume& x, const PriorModel& prior) {
    if (prior.beta_s == 0.0 && prior.beta_t == 0.0) return 0.0;
    const NeighborStencil& st = NeighborStencil::get(x.nz > 1);
    double acc = 0.0;
    for (int t = 0; t < x.nt; ++t) {
        if (prior.beta_s > 0.0) {
            for (int z = 0; z < x.nz; ++z)
                for (int y = 0; y < x.ny; ++y)
                    for (int xx = 0; xx < x.nx; ++xx) {
                        double xc = x.at(t, z, y, xx);
                        for (const auto& o : st.half) {
                            int z2 = z + o.dz, y2 = y + o.dy, x2 = xx + o.dx;
                            if (z2 < 0 || z2 >= x.nz || y2 < 0 || y2 >= x.ny ||
                                x2 < 0 || x2 >= x.nx)
                                continue;
                            acc += prior.beta_s * o.w *
                                   rho(xc - x.at(t, z2, y2, x2), prior);
                        }
                    }
        }
        if (prior.beta_t > 0.0 && t + 1 < x.nt) {
            size_t fs = x.frame_size();
            const float* a = &x.data[t * fs];
            const float* b = &x.data[(t + 1) * fs];
            for (size_t i = 0; i < fs; ++i)
                acc += prior.beta_t * rho(double(a[i]) - double(b[i]), prior);
        }
    }
    return acc;
}

double fidelity_cost(const std::vector<double>& p, const CalibrationState& calib,
                     const Sinogram& y, const WeightMap& W,
                     const FidelityModel& fid) {
    const int nr = y.n_rows, nc = y.n_channels;
    double acc = 0.0;
    size_t i = 0;
    for (int v = 0; v < y.n_views; ++v) {
        double gain = calib.view_gains.empty() ? 1.0 : calib.view_gains[v];
        double off = calib.view_offsets.empty() ? 0.0 : calib.view_offsets[v];
        for (int r = 0; r < nr; ++r)
            for (int c = 0; c < nc; ++c, ++i) {
                double doff = calib.channel_offsets.empty()
                                  ? 0.0
                                  : calib.channel_offsets[c];
                double e = double(y.data[i]) - gain * p[i] - off - doff;
                double w = W.data[i];
                switch (fid.kind) {
                    case FidelityKind::wls:
                    case FidelityKind::wls_gain_offset:
                    case FidelityKind::poisson_approx:
                        acc += 0.5 * w * e * e;
                        break;
                    case FidelityKind::robust_genhuber:
                    case FidelityKind::robust_student_t:
                        acc += gamma_fn(e * std::sqrt(w), fid);
                        break;
                }
            }
    }
    return acc;
}

CostParts eval_cost(const Volume& x, const CalibrationState& calib,
                    const Sinogram& y, const WeightMap& W,
                    const FidelityModel& fid, const PriorModel& prior,
                    const ProjectorSpec& spec) {
    fid.validate();
    prior.validate();
    if (y.size() != W.size())
        throw DimensionError("eval_cost: weight map shape mismatch");
    std::vector<double> p = project_all(x, spec);

    CostParts parts;
    parts.fidelity = fidelity_cost(p, calib, y, W, fid);
    parts.prior = prior_cost(x, prior);
    parts.total = parts.fidelity + parts.prior;

    if (fid.kind == FidelityKind::poisson_approx) {
        double nll = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            double m = p[i];
            if (m <= 0.0) {
                m = 1e-12;
                parts.poisson_clamped = true;
            }
            nll += m - double(y.data[i]) * std::log(m);
        }
        parts.poisson_nll = nll;
    }
    return parts;
}

std::vector<double> eval_gradient(const Volume& x, const CalibrationState& calib,
                                  const Sinogram& y, const WeightMap& W,
                                  const FidelityModel& fid,
                                  const PriorModel& prior,
                                  const ProjectorSpec& spec) {
    std::vector<double> p = project_all(x, spec);
    const int nr = y.n_rows, nc = y.n_channels;

    // dF/dp_i, then A^t per frame.
    std::vector<double> dp(p.size());
    size_t i = 0;
    for (int v = 0; v < y.n_views; ++v) {
        double gain = calib.view_gains.empty() ? 1.0 : calib.view_gains[v];
        double off = calib.view_offsets.empty() ? 0.0 : calib.view_offsets[v];
        for (int r = 0; r < nr; ++r)
            for (int c = 0; c < nc; ++c, ++i) {
                double doff = calib.channel_offsets.empty()
                                  ? 0.0
                                  : calib.channel_offsets[c];
                double e = double(y.data[i]) - gain * p[i] - off - doff;
                double w = W.data[i];
                switch (fid.kind) {
                    case FidelityKind::wls:
                    case FidelityKind::wls_gain_offset:
                    case FidelityKind::poisson_approx:
                        dp[i] = -w * e * gain;
                        break;
                    case FidelityKind::robust_genhuber:
                    case FidelityKind::robust_student_t:
                        dp[i] = -gamma_deriv(e * std::sqrt(w), fid) *
                                std::sqrt(w) * gain;
                        break;
                }
            }
    }

    std::vector<double> grad(x.size(), 0.0);
    const size_t per_view = static_cast<size_t>(nr) * nc;
    auto frames = spec.schedule.views_by_frame();
    for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
        int frame = x.nt == 1 ? 0 : f;
        std::vector<double> dpf;
        dpf.reserve(frames[f].size() * per_view);
        for (int v : frames[f])
            dpf.insert(dpf.end(), dp.begin() + v * per_view,
                       dp.begin() + (v + 1) * per_view);
        std::vector<double> g = back_project_double(dpf, spec, frames[f]);
        size_t base = frame * x.frame_size();
        for (size_t j = 0; j < g.size(); ++j) grad[base + j] += g[j];
    }

    // Prior gradient.
    const NeighborStencil& st = NeighborStencil::get(x.nz > 1);
    for (int t = 0; t < x.nt; ++t) {
        size_t base = t * x.frame_size();
        if (prior.beta_s > 0.0) {
            for (int z = 0; z < x.nz; ++z)
                for (int yy = 0; yy < x.ny; ++yy)
                    for (int xx = 0; xx < x.nx; ++xx) {
                        double xc = x.at(t, z, yy, xx);
                        double g = 0.0;
                        for (const auto& o : st.all) {
                            int z2 = z + o.dz, y2 = yy + o.dy, x2 = xx + o.dx;
                            if (z2 < 0 || z2 >= x.nz || y2 < 0 || y2 >= x.ny ||
                                x2 < 0 || x2 >= x.nx)
                                continue;
                            g += o.w * rho_deriv(xc - x.at(t, z2, y2, x2), prior);
                        }
                        grad[base + (static_cast<size_t>(z) * x.ny + yy) * x.nx +
                             xx] += prior.beta_s * g;
                    }
        }
        if (prior.beta_t > 0.0) {
            size_t fs = x.frame_size();
            for (int dt : {-1, 1}) {
                int t2 = t + dt;
                if (t2 < 0 || t2 >= x.nt) continue;
                const float* a = &x.data[base];
                const float* b = &x.data[t2 * fs];
                for (size_t j = 0; j < fs; ++j)
                    grad[base + j] +=
                        prior.beta_t * rho_deriv(double(a[j]) - double(b[j]), prior);
            }
        }
    }
    return grad;
}

CalibrationState solve_calibration(const Volume& x, const Sinogram& y,
                                   const WeightMap& W, GainOffsetMode mode,
                                   const ProjectorSpec& spec) {
    return solve_calibration_from_projections(project_all(x, spec), y, W, mode);
}

CalibrationState solve_calibration_from_projections(const std::vector<double>& p,
                                                    const Sinogram& y,
                                                    const WeightMap& W,
                                                    GainOffsetMode mode) {
    if (mode == GainOffsetMode::none)
        throw std::invalid_argument("solve_calibration: mode must not be none");
    const int nr = y.n_rows, nc = y.n_channels;
    const size_t per_view = static_cast<size_t>(nr) * nc;
    CalibrationState out = CalibrationState::identity(y.n_views, nc);

    if (mode == GainOffsetMode::per_view) {
        for (int v = 0; v < y.n_views; ++v) {
            double swpp = 0.0, swp = 0.0, sw = 0.0, swpy = 0.0, swy = 0.0;
            for (size_t i = v * per_view; i < (v + 1) * per_view; ++i) {
                double w = W.data[i], pi = p[i], yi = y.data[i];
                swpp += w * pi * pi;
                swp += w * pi;
                sw += w;
                swpy += w * pi * yi;
                swy += w * yi;
            }
            double det = swpp * sw - swp * swp;
            if (sw <= 0.0) continue;
            if (det > 1e-12 * std::max(1.0, swpp * sw)) {
                out.view_gains[v] = (swpy * sw - swp * swy) / det;
                out.view_offsets[v] = (swpp * swy - swp * swpy) / det;
                if (!(out.view_gains[v] > 0.0)) {
                    // Nonpositive gain is outside the model; keep gain fixed.
                    out.view_gains[v] = 1.0;
                    out.view_offsets[v] = (swy - swp) / sw;
                }
            } else {
                // All projections in this view are (numerically) equal.
                out.view_gains[v] = 1.0;
                out.view_offsets[v] = (swy - swp) / sw;
            }
        }
    } else {  // per_channel
        std::vector<double> num(nc, 0.0), den(nc, 0.0);
        for (int v = 0; v < y.n_views; ++v)
            for (int r = 0; r < nr; ++r)
                for (int c = 0; c < nc; ++c) {
                    size_t i = (static_cast<size_t>(v) * nr + r) * nc + c;
                    num[c] += double(W.data[i]) * (double(y.data[i]) - p[i]);
                    den[c] += W.data[i];
                }
        double mean = 0.0;
        for (int c = 0; c < nc; ++c) {
            out.channel_offsets[c] = den[c] > 0.0 ? num[c] / den[c] : 0.0;
            mean += out.channel_offsets[c];
        }
        mean /= nc;
        for (int c = 0; c < nc; ++c) out.channel_offsets[c] -= mean;
    }
    return out;
}

double apply_gauge(CalibrationState& calib, Volume& x) {
    if (calib.view_gains.empty()) return 1.0;
    double mean_ln = 0.0;
    for (double g : calib.view_gains) mean_ln += std::log(g);
    mean_ln /= static_cast<double>(calib.view_gains.size());
    double gauge = std::exp(mean_ln);
    for (double& g : calib.view_gains) g /= gauge;
    for (float& v : x.data) v = static_cast<float>(v * gauge);
    return gauge;
}

}  // namespace sct
