#include "sct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sct {

namespace {

void check_shapes(const Volume& a, const Volume& b) {
    if (a.nt != b.nt || a.nz != b.nz || a.ny != b.ny || a.nx != b.nx)
        throw DimensionError("metrics: volume shape mismatch");
}

double rmse_range(const float* a, const float* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

double value_range(const float* ref, size_t n) {
    float lo = ref[0], hi = ref[0];
    for (size_t i = 1; i < n; ++i) {
        lo = std::min(lo, ref[i]);
        hi = std::max(hi, ref[i]);
    }
    return double(hi) - double(lo);
}

double median5(const std::vector<double>& v, int i) {
    std::vector<double> win(v.begin() + i - 2, v.begin() + i + 3);
    std::sort(win.begin(), win.end());
    return win[2];
}

double ring_score_slice(const float* slice, int ny, int nx) {
    int rmax = static_cast<int>(0.45 * std::min(ny, nx));
    if (rmax < 5) return 0.0;
    double cy = 0.5 * (ny - 1), cx = 0.5 * (nx - 1);
    std::vector<double> sum(rmax + 1, 0.0);
    std::vector<int> cnt(rmax + 1, 0);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            double r = std::hypot(y - cy, x - cx);
            int ri = static_cast<int>(std::lround(r));
            if (ri > rmax) continue;
            sum[ri] += slice[static_cast<size_t>(y) * nx + x];
            ++cnt[ri];
        }
    std::vector<double> prof;
    for (int r = 5; r <= rmax; ++r)
        if (cnt[r] > 0) prof.push_back(sum[r] / cnt[r]);
    // Radii without a full median window are excluded; edge windows would
    // penalize smooth monotone profiles.
    int n = static_cast<int>(prof.size());
    if (n < 5) return 0.0;
    double acc = 0.0;
    for (int i = 2; i < n - 2; ++i) {
        double d = prof[i] - median5(prof, i);
        acc += d * d;
    }
    return std::sqrt(acc / (n - 4));
}

}  // namespace

double rmse(const Volume& a, const Volume& b) {
    check_shapes(a, b);
    return rmse_range(a.data.data(), b.data.data(), a.size());
}

double nrmse(const Volume& test, const Volume& ref) {
    check_shapes(test, ref);
    double r = rmse(test, ref);
    double range = value_range(ref.data.data(), ref.size());
    if (range == 0.0) return r == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return r / range;
}

double psnr(const Volume& test, const Volume& ref) {
    check_shapes(test, ref);
    double r = rmse(test, ref);
    if (r == 0.0) return std::numeric_limits<double>::infinity();
    double range = value_range(ref.data.data(), ref.size());
    return 20.0 * std::log10(range / r);
}

double ring_score(const Volume& x) {
    double acc = 0.0;
    int zc = x.nz / 2;
    for (int t = 0; t < x.nt; ++t)
        acc += ring_score_slice(
            &x.data[(static_cast<size_t>(t) * x.nz + zc) * x.ny * x.nx], x.ny,
            x.nx);
    return acc / x.nt;
}

MetricReport evaluate(const Volume& test, const Volume& ref) {
    check_shapes(test, ref);
    MetricReport rep;
    rep.rmse = rmse(test, ref);
    rep.nrmse = nrmse(test, ref);
    rep.psnr = psnr(test, ref);
    rep.ring = ring_score(test);
    if (test.nt > 1) {
        size_t fs = test.frame_size();
        for (int t = 0; t < test.nt; ++t) {
            Volume a(1, test.nz, test.ny, test.nx), b(1, ref.nz, ref.ny, ref.nx);
            std::copy_n(test.data.begin() + t * fs, fs, a.data.begin());
            std::copy_n(ref.data.begin() + t * fs, fs, b.data.begin());
            rep.per_frame.push_back({t, rmse(a, b), nrmse(a, b), psnr(a, b)});
        }
    }
    return rep;
}

}  // namespace sct
