#pragma once

#include <functional>
#include <vector>

#include "sct/core.hpp"
#include "sct/projector.hpp"

namespace sct {

enum class FidelityKind {
    wls,
    wls_gain_offset,
    robust_genhuber,
    robust_student_t,
    poisson_approx
};

enum class GainOffsetMode { none, per_view, per_channel };

struct FidelityModel {
    FidelityKind kind = FidelityKind::wls;
    double T = 3.0;      // generalized-Huber threshold, in noise-sigma units
    double delta = 0.5;  // generalized-Huber tail slope fraction, (0, 1]
    double nu = 5.0;     // student-T degrees of freedom
    GainOffsetMode gain_offset_mode = GainOffsetMode::none;

    void validate() const;
};

enum class PriorKind { quadratic, qggmrf };

struct PriorModel {
    PriorKind rho_kind = PriorKind::qggmrf;
    double p = 1.2, q = 2.0;  // shape exponents, 1 <= p <= q <= 2
    double T = 1.0;           // qGGMRF transition threshold
    double sigma_x = 1.0;
    double beta_s = 0.0;
    double beta_t = 0.0;      // temporal strength; 0 for 3D

    void validate() const;
};

/// Calibration parameters psi: per-view gains/offsets and per-channel
/// offsets (ring mode). Gains carry the gauge constraint mean(ln I) = 0
/// once apply_gauge has been called.
struct CalibrationState {
    std::vector<double> view_gains;
    std::vector<double> view_offsets;
    std::vector<double> channel_offsets;

    static CalibrationState identity(int n_views, int n_channels);
    bool is_identity() const;
};

// ---------------------------------------------------------------------------
// Prior potential rho and its half-quadratic majorizer

double rho(double delta, const PriorModel& prior);
double rho_deriv(double delta, const PriorModel& prior);

/// Coefficient a of the majorizer q(d; d') = (a/2) d^2 + b with tangency at
/// d': a = rho'(d')/d' for d' != 0, a = rho''(0) at d' = 0.
double rho_surrogate_coeff(double delta_prime, const PriorModel& prior);

// ---------------------------------------------------------------------------
// Robust penalty gamma and its majorizer

double gamma_fn(double e, const FidelityModel& fid);
double gamma_deriv(double e, const FidelityModel& fid);
double gamma_surrogate_coeff(double e_prime, const FidelityModel& fid);

// ---------------------------------------------------------------------------
// Surrogate composition with an affine map h(z) = alpha*z + c

using ScalarFn = std::function<double(double)>;

struct AffineMap {
    double alpha = 1.0;
    double c = 0.0;
    double operator()(double z) const { return alpha * z + c; }
};

/// Surrogate q~(z; z') = q(h(z); h(z')) for t(h(z)), where q is the
/// half-quadratic majorizer of t defined by coeff(z') and tangency.
struct ComposedSurrogate {
    ScalarFn target;  // t
    ScalarFn coeff;   // z' -> curvature of q(.; z')
    AffineMap h;

    double value(double z, double z_prime) const {
        double hz = h(z), hzp = h(z_prime);
        double a = coeff(hzp);
        double b = target(hzp) - 0.5 * a * hzp * hzp;
        return 0.5 * a * hz * hz + b;
    }
    /// Curvature of the composed surrogate as a quadratic in z.
    double curvature(double z_prime) const {
        return coeff(h(z_prime)) * h.alpha * h.alpha;
    }
};

ComposedSurrogate compose_surrogate(ScalarFn target, ScalarFn coeff, AffineMap h);

// ---------------------------------------------------------------------------
// Neighborhoods: 8 in-plane / 26 in 3D, w ~ 1/distance, normalized by the
// full-stencil weight sum (so interior voxels sum to 1 and w_ij = w_ji).

struct NeighborStencil {
    struct Offset {
        int dz, dy, dx;
        double w;
    };
    std::vector<Offset> all;   // every neighbor, symmetric
    std::vector<Offset> half;  // lexicographically positive half (unique pairs)

    static const NeighborStencil& get(bool three_d);
};

// ---------------------------------------------------------------------------
// Cost evaluation

struct CostParts {
    double total = 0.0;
    double fidelity = 0.0;
    double prior = 0.0;
    double poisson_nll = 0.0;  // diagnostic, poisson_approx only
    bool poisson_clamped = false;
};

/// Objective of the MBIR master problem at (x, calib). x.nt must equal the
/// schedule's n_frames (or 1). Deterministic for any thread count.
CostParts eval_cost(const Volume& x, const CalibrationState& calib,
                    const Sinogram& y, const WeightMap& W,
                    const FidelityModel& fid, const PriorModel& prior,
                    const ProjectorSpec& spec);

/// Analytic gradient of the smooth objective with respect to x (all frames).
std::vector<double> eval_gradient(const Volume& x, const CalibrationState& calib,
                                  const Sinogram& y, const WeightMap& W,
                                  const FidelityModel& fid,
                                  const PriorModel& prior,
                                  const ProjectorSpec& spec);

// ---------------------------------------------------------------------------
// Closed-form calibration update

/// Weighted least-squares fit of the calibration parameters at fixed x.
/// per_view: (I_k, d_k) per view via the 2x2 closed form; degenerate systems
/// fall back to an offset-only update. per_channel: offsets recentered so
/// they sum to zero. Gains are returned before gauge fixing.
CalibrationState solve_calibration(const Volume& x, const Sinogram& y,
                                   const WeightMap& W, GainOffsetMode mode,
                                   const ProjectorSpec& spec);

/// Same update given precomputed projections p = A x (row order
/// view, row, channel over all views).
CalibrationState solve_calibration_from_projections(const std::vector<double>& p,
                                                    const Sinogram& y,
                                                    const WeightMap& W,
                                                    GainOffsetMode mode);

/// Enforce mean(ln I) = 0 by rescaling gains and absorbing the scale into x.
/// Returns the gauge factor applied to x.
double apply_gauge(CalibrationState& calib, Volume& x);

/// Fidelity part only, given precomputed projections p = A x in the row
/// order (view, row, channel) over all views.
double fidelity_cost(const std::vector<double>& p, const CalibrationState& calib,
                     const Sinogram& y, const WeightMap& W,
                     const FidelityModel& fid);

/// Regularizer part only (spatial + temporal terms).
double prior_cost(const Volume& x, const PriorModel& prior);

}  // namespace sct
