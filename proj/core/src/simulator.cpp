#include "sct/simulator.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sct {

namespace {

// Fixed-point mix (splitmix64) so per-view streams are decorrelated and
// independent of thread scheduling.
uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::mt19937_64 stream(uint64_t seed, uint64_t salt) {
    return std::mt19937_64(mix64(mix64(seed) ^ salt));
}

}  // namespace

void PhantomSpec::validate() const {
    if (nx < 1 || ny < 1 || nz < 1 || n_frames < 1)
        throw std::invalid_argument("phantom: dims must be >= 1");
    for (const Ellipse& e : ellipses) {
        if (!(e.ax > 0.0 && e.ay > 0.0))
            throw std::invalid_argument("phantom: ellipse semi-axes must be > 0");
        if (!std::isfinite(e.value))
            throw std::invalid_argument("phantom: ellipse value must be finite");
    }
}

void CorruptionSpec::validate() const {
    if (!(dose_I0 > 0.0)) throw std::invalid_argument("corruption: dose_I0 <= 0");
    if (zinger_rate < 0.0 || zinger_rate > 1.0)
        throw std::invalid_argument("corruption: zinger_rate outside [0,1]");
    if (view_gain_sigma < 0.0 || channel_gain_sigma < 0.0)
        throw std::invalid_argument("corruption: sigma < 0");
}

const std::vector<Ellipse>& shepp_logan_ellipses() {
    // Standard head phantom geometry with absolute grey levels in [0, 1];
    // rasterized with overwrite semantics from outermost to innermost.
    static const std::vector<Ellipse> e = {
        {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
        {0.0, -0.0184, 0.6624, 0.874, 0.0, 0.2},
        {0.22, 0.0, 0.11, 0.31, -18.0, 0.0},
        {-0.22, 0.0, 0.16, 0.41, 18.0, 0.0},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.3},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.3},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.3},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.3},
        {0.0, -0.606, 0.023, 0.023, 0.0, 0.3},
        {0.06, -0.605, 0.023, 0.046, 0.0, 0.3},
    };
    return e;
}

Volume make_phantom(const PhantomSpec& spec) {
    spec.validate();
    const bool overwrite = spec.kind == PhantomKind::shepp_logan;
    const std::vector<Ellipse>& ellipses =
        overwrite ? shepp_logan_ellipses() : spec.ellipses;
    const int nt = spec.n_frames;

    Volume out(nt, spec.nz, spec.ny, spec.nx, spec.voxel_size);
    const double sx = 2.0 / spec.nx, sy = 2.0 / spec.ny;
    const double cx = 0.5 * (spec.nx - 1), cy = 0.5 * (spec.ny - 1);

    for (int t = 0; t < nt; ++t) {
        double growth_t = spec.kind == PhantomKind::growing_ellipses ? t : 0.0;
        for (const Ellipse& e : ellipses) {
            double ax = e.ax * (1.0 + e.growth_rate * growth_t);
            double ay = e.ay * (1.0 + e.growth_rate * growth_t);
            double phi = e.angle_deg * std::numbers::pi / 180.0;
            double cp = std::cos(phi), sp = std::sin(phi);
#pragma omp parallel for collapse(2) schedule(static)
            for (int iz = 0; iz < spec.nz; ++iz)
                for (int iy = 0; iy < spec.ny; ++iy)
                    for (int ix = 0; ix < spec.nx; ++ix) {
                        double u = (ix - cx) * sx - e.cx;
                        double v = (iy - cy) * sy - e.cy;
                        double xr = cp * u + sp * v;
                        double yr = -sp * u + cp * v;
                        if ((xr / ax) * (xr / ax) + (yr / ay) * (yr / ay) > 1.0)
                            continue;
                        float& p = out.at(t, iz, iy, ix);
                        if (overwrite)
                            p = static_cast<float>(e.value);
                        else
                            p += static_cast<float>(e.value);
                    }
        }
    }
    return out;
}

SynthesisResult synthesize(const Volume& x, const ProjectorSpec& spec,
                           const CorruptionSpec& corruption) {
    spec.validate();
    corruption.validate();
    for (float v : x.data)
        if (v < 0.0f)
            throw std::invalid_argument("synthesize: phantom must be nonnegative");
    const AngleSchedule& sched = spec.schedule;
    if (x.nt != 1 && x.nt != sched.n_frames)
        throw DimensionError("synthesize: volume frames do not match schedule");

    const Geometry& geo = spec.geometry;
    const int nv = sched.n_views(), nr = geo.detector_rows,
              nch = geo.detector_channels;

    SynthesisResult res;
    res.counts = Sinogram(nv, nr, nch, SinoKind::counts);
    res.log_norm = Sinogram(nv, nr, nch, SinoKind::log_normalized);
    res.truth.view_gains.resize(nv);
    res.truth.view_offsets.resize(nv);
    res.truth.channel_gains.resize(nch);

    {
        auto rng = stream(corruption.seed, 0xC0FFEEull);
        std::normal_distribution<double> n01(0.0, 1.0);
        for (int c = 0; c < nch; ++c)
            res.truth.channel_gains[c] =
                corruption.channel_gain_sigma > 0.0
                    ? std::exp(corruption.channel_gain_sigma * n01(rng))
                    : 1.0;
    }

    std::vector<std::vector<ZingerHit>> hits(nv);

#pragma omp parallel for schedule(dynamic)
    for (int v = 0; v < nv; ++v) {
        int frame = x.nt == 1 ? 0 : sched.frame_of_view[v];
        std::vector<float> xf(x.data.begin() + frame * x.frame_size(),
                              x.data.begin() + (frame + 1) * x.frame_size());
        std::vector<double> p = forward_project_double(xf, spec, {v});

        auto rng = stream(corruption.seed, static_cast<uint64_t>(v) + 1);
        std::normal_distribution<double> n01(0.0, 1.0);
        double gain = corruption.view_gain_sigma > 0.0
                          ? std::exp(corruption.view_gain_sigma * n01(rng))
                          : 1.0;
        double offset = 0.0;
        if (corruption.view_offset > 0.0) {
            std::uniform_real_distribution<double> u(0.5, 1.5);
            offset = corruption.view_offset * u(rng);
        }
        res.truth.view_gains[v] = gain;
        res.truth.view_offsets[v] = offset;

        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (int r = 0; r < nr; ++r)
            for (int c = 0; c < nch; ++c) {
                double lambda = corruption.dose_I0 * res.truth.channel_gains[c] *
                                    gain *
                                    std::exp(-p[static_cast<size_t>(r) * nch + c]) +
                                offset;
                std::poisson_distribution<long long> pois(lambda);
                double counts = static_cast<double>(pois(rng));
                if (corruption.zinger_rate > 0.0 &&
                    u01(rng) < corruption.zinger_rate) {
                    counts += corruption.zinger_amplitude;
                    hits[v].push_back({v, r, c});
                }
                res.counts.at(v, r, c) = static_cast<float>(counts);
                res.log_norm.at(v, r, c) = static_cast<float>(
                    std::log(corruption.dose_I0) - std::log(std::max(counts, 1.0)));
            }
    }
    for (int v = 0; v < nv; ++v)
        res.truth.zingers.insert(res.truth.zingers.end(), hits[v].begin(),
                                 hits[v].end());
    return res;
}

WeightMap compute_weights(const Sinogram& counts, const MeasurementMask* mask) {
    if (counts.kind != SinoKind::counts)
        throw std::invalid_argument("compute_weights: sinogram must hold counts");
    WeightMap w(counts.n_views, counts.n_rows, counts.n_channels, 0.0f);
    double sum = 0.0;
    size_t nonzero = 0;
    for (size_t i = 0; i < counts.size(); ++i) {
        double wi = counts.data[i];
        if (mask && !mask->keep[i]) wi = 0.0;
        w.data[i] = static_cast<float>(wi);
        if (wi > 0.0) {
            sum += wi;
            ++nonzero;
        }
    }
    if (nonzero > 0 && sum > 0.0) {
        double scale = static_cast<double>(nonzero) / sum;
        for (float& wi : w.data) wi = static_cast<float>(wi * scale);
    }
    return w;
}

}  // namespace sct
