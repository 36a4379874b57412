#pragma once

#include <cstdint>
#include <vector>

#include "sct/core.hpp"
#include "sct/geometry.hpp"
#include "sct/projector.hpp"

namespace sct {

struct Ellipse {
    double cx = 0.0, cy = 0.0;   // center, unit-square coordinates [-1, 1]
    double ax = 0.5, ay = 0.5;   // semi-axes
    double angle_deg = 0.0;
    double value = 1.0;
    double growth_rate = 0.0;    // per-frame radial growth for growing_ellipses
};

enum class PhantomKind { shepp_logan, ellipses, growing_ellipses };

struct PhantomSpec {
    PhantomKind kind = PhantomKind::shepp_logan;
    int nx = 128, ny = 128, nz = 1;
    int n_frames = 1;
    double voxel_size = 1.0;
    std::vector<Ellipse> ellipses;  // ignored for shepp_logan

    void validate() const;
};

/// The scaled Shepp-Logan parameter set (values in [0, 1], overwrite
/// semantics from outermost to innermost).
const std::vector<Ellipse>& shepp_logan_ellipses();

Volume make_phantom(const PhantomSpec& spec);

struct CorruptionSpec {
    double dose_I0 = 1e5;
    double view_gain_sigma = 0.0;    // log-normal sigma for per-view gains
    double view_offset = 0.0;        // scale of additive per-view offsets
    double channel_gain_sigma = 0.0; // per-channel multiplicative error (rings)
    double zinger_rate = 0.0;        // probability per measurement
    double zinger_amplitude = 0.0;   // additive counts
    uint64_t seed = 0;

    void validate() const;
};

struct ZingerHit {
    int view, row, channel;
};

struct TruthParams {
    std::vector<double> view_gains;
    std::vector<double> view_offsets;
    std::vector<double> channel_gains;
    std::vector<ZingerHit> zingers;
};

struct SynthesisResult {
    Sinogram counts;
    Sinogram log_norm;
    TruthParams truth;
};

/// Beer-Lambert measurement synthesis with Poisson counting noise:
///   lambda = I0 * g_chan[c] * g_view[k] * exp(-p) + d_view[k]
///   counts ~ Poisson(lambda), plus zingers
///   log_norm = -ln(max(counts, 1) / I0)
/// Per-view RNG streams derived from (seed, view) make the result independent
/// of thread count.
SynthesisResult synthesize(const Volume& x, const ProjectorSpec& spec,
                           const CorruptionSpec& corruption);

/// W_i = counts_i (inverse-variance weights for log-normalized transmission
/// data), zeroed where mask says so, then normalized so the mean of the
/// nonzero weights is 1.
WeightMap compute_weights(const Sinogram& counts,
                          const MeasurementMask* mask = nullptr);

}  // namespace sct
