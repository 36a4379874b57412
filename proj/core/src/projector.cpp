#include "sct/projector.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sct {

namespace {

struct ViewBasis {
    double d[3];  // ray direction
    double u[3];  // channel axis
    double v[3];  // row axis
};

ViewBasis view_basis(const Geometry& geo, double angle_deg) {
    double theta = angle_deg * std::numbers::pi / 180.0;
    double tilt = geo.tilt_deg * std::numbers::pi / 180.0;
    double ct = std::cos(theta), st = std::sin(theta);
    double cp = std::cos(tilt), sp = std::sin(tilt);
    ViewBasis b;
    b.d[0] = cp * ct;
    b.d[1] = cp * st;
    b.d[2] = sp;
    b.u[0] = -st;
    b.u[1] = ct;
    b.u[2] = 0.0;
    // v = d x u
    b.v[0] = -sp * ct;
    b.v[1] = -sp * st;
    b.v[2] = cp;
    return b;
}

// Marches one ray and reports (voxel, weight) pairs; weight already includes
// the step length. Sample points use tri/bilinear interpolation weights so the
// scatter form is the exact transpose of the gather form.
template <class Visit>
inline void trace_ray_impl(const ProjectorSpec& spec, const ViewBasis& b,
                           int row, int channel, Visit&& visit) {
    const Geometry& geo = spec.geometry;
    const int nx = spec.nx, ny = spec.ny, nz = spec.nz;
    const double vox = spec.voxel_size;

    double tc = (channel - 0.5 * (geo.detector_channels - 1)) * geo.channel_pitch;
    double tr = (row - 0.5 * (geo.detector_rows - 1)) * geo.channel_pitch;

    double ox = tc * b.u[0] + tr * b.v[0];
    double oy = tc * b.u[1] + tr * b.v[1];
    double oz = tc * b.u[2] + tr * b.v[2];

    double half = 0.5 * vox * std::sqrt(double(nx) * nx + double(ny) * ny +
                                        double(nz) * nz) + vox;
    double step = spec.step_scale * vox;
    int n_samples = static_cast<int>(std::ceil(2.0 * half / step));

    const double cx = 0.5 * (nx - 1), cy = 0.5 * (ny - 1), cz = 0.5 * (nz - 1);
    const size_t plane = static_cast<size_t>(ny) * nx;

    for (int m = 0; m < n_samples; ++m) {
        double s = -half + (m + 0.5) * step;
        double fx = (ox + s * b.d[0]) / vox + cx;
        double fy = (oy + s * b.d[1]) / vox + cy;
        double fz = (oz + s * b.d[2]) / vox + cz;
        if (fx <= -1.0 || fx >= nx || fy <= -1.0 || fy >= ny || fz <= -1.0 ||
            fz >= nz)
            continue;
        int ix = static_cast<int>(std::floor(fx));
        int iy = static_cast<int>(std::floor(fy));
        int iz = static_cast<int>(std::floor(fz));
        double wx = fx - ix, wy = fy - iy, wz = fz - iz;
        for (int dz = 0; dz < 2; ++dz) {
            int z = iz + dz;
            if (z < 0 || z >= nz) continue;
            double wwz = dz ? wz : 1.0 - wz;
            if (wwz == 0.0) continue;
            for (int dy = 0; dy < 2; ++dy) {
                int y = iy + dy;
                if (y < 0 || y >= ny) continue;
                double wwy = wwz * (dy ? wy : 1.0 - wy);
                if (wwy == 0.0) continue;
                for (int dx = 0; dx < 2; ++dx) {
                    int x = ix + dx;
                    if (x < 0 || x >= nx) continue;
                    double w = wwy * (dx ? wx : 1.0 - wx);
                    if (w == 0.0) continue;
                    visit(static_cast<size_t>(z) * plane +
                              static_cast<size_t>(y) * nx + x,
                          w * step);
                }
            }
        }
    }
}

}  // namespace

void ProjectorSpec::validate() const {
    geometry.validate();
    schedule.validate();
    if (nz < 1 || ny < 1 || nx < 1)
        throw std::invalid_argument("projector: image dims must be >= 1");
    if (voxel_size <= 0.0 || step_scale <= 0.0)
        throw std::invalid_argument("projector: voxel_size/step_scale must be > 0");
}

bool ProjectorSpec::detector_covers_image() const {
    double diag = std::sqrt(double(nx) * nx + double(ny) * ny) * voxel_size;
    return geometry.detector_channels * geometry.channel_pitch >= diag;
}

void trace_ray(const ProjectorSpec& spec, int view, int row, int channel,
               const std::function<void(size_t, double)>& visit) {
    ViewBasis b = view_basis(spec.geometry, spec.schedule.angles_deg[view]);
    trace_ray_impl(spec, b, row, channel, visit);
}

Sinogram forward_project(const Volume& x, const ProjectorSpec& spec) {
    spec.validate();
    if (x.nt != 1 || x.nz != spec.nz || x.ny != spec.ny || x.nx != spec.nx)
        throw DimensionError("forward_project: volume dims do not match spec");
    const Geometry& geo = spec.geometry;
    Sinogram y(spec.schedule.n_views(), geo.detector_rows, geo.detector_channels);
    const float* xd = x.data.data();

#pragma omp parallel for schedule(dynamic)
    for (int v = 0; v < y.n_views; ++v) {
        ViewBasis b = view_basis(geo, spec.schedule.angles_deg[v]);
        for (int r = 0; r < y.n_rows; ++r)
            for (int c = 0; c < y.n_channels; ++c) {
                double acc = 0.0;
                trace_ray_impl(spec, b, r, c, [&](size_t j, double w) {
                    acc += w * xd[j];
                });
                y.at(v, r, c) = static_cast<float>(acc);
            }
    }
    return y;
}

Volume back_project(const Sinogram& y, const ProjectorSpec& spec) {
    spec.validate();
    const Geometry& geo = spec.geometry;
    if (y.n_views != spec.schedule.n_views() || y.n_rows != geo.detector_rows ||
        y.n_channels != geo.detector_channels)
        throw DimensionError("back_project: sinogram dims do not match spec");

    Volume x(1, spec.nz, spec.ny, spec.nx, spec.voxel_size);
    std::vector<double> acc(x.size(), 0.0);
    // Sequential scatter in view order: results are independent of thread
    // count by construction.
    for (int v = 0; v < y.n_views; ++v) {
        ViewBasis b = view_basis(geo, spec.schedule.angles_deg[v]);
        for (int r = 0; r < y.n_rows; ++r)
            for (int c = 0; c < y.n_channels; ++c) {
                double val = y.at(v, r, c);
                if (val == 0.0) continue;
                trace_ray_impl(spec, b, r, c, [&](size_t j, double w) {
                    acc[j] += w * val;
                });
            }
    }
    for (size_t i = 0; i < acc.size(); ++i) x.data[i] = static_cast<float>(acc[i]);
    return x;
}

std::vector<double> forward_project_double(const std::vector<float>& x,
                                           const ProjectorSpec& spec,
                                           const std::vector<int>& views) {
    const Geometry& geo = spec.geometry;
    const size_t per_view =
        static_cast<size_t>(geo.detector_rows) * geo.detector_channels;
    std::vector<double> out(views.size() * per_view, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int vi = 0; vi < static_cast<int>(views.size()); ++vi) {
        ViewBasis b = view_basis(geo, spec.schedule.angles_deg[views[vi]]);
        size_t base = vi * per_view;
        for (int r = 0; r < geo.detector_rows; ++r)
            for (int c = 0; c < geo.detector_channels; ++c) {
                double acc = 0.0;
                trace_ray_impl(spec, b, r, c, [&](size_t j, double w) {
                    acc += w * x[j];
                });
                out[base + static_cast<size_t>(r) * geo.detector_channels + c] = acc;
            }
    }
    return out;
}

std::vector<double> back_project_double(const std::vector<double>& y,
                                        const ProjectorSpec& spec,
                                        const std::vector<int>& views) {
    const Geometry& geo = spec.geometry;
    std::vector<double> acc(spec.n_voxels(), 0.0);
    size_t i = 0;
    for (int view : views) {
        ViewBasis b = view_basis(geo, spec.schedule.angles_deg[view]);
        for (int r = 0; r < geo.detector_rows; ++r)
            for (int c = 0; c < geo.detector_channels; ++c) {
                double val = y[i++];
                if (val == 0.0) continue;
                trace_ray_impl(spec, b, r, c, [&](size_t j, double w) {
                    acc[j] += w * val;
                });
            }
    }
    return acc;
}

std::vector<double> SparseProjection::apply(const std::vector<float>& x) const {
    std::vector<double> out(n_rows, 0.0);
#pragma omp parallel for schedule(static)
    for (long long r = 0; r < static_cast<long long>(n_rows); ++r) {
        double acc = 0.0;
        for (size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            acc += static_cast<double>(val[k]) * x[col_idx[k]];
        out[r] = acc;
    }
    return out;
}

SparseProjection build_sparse_projection(const ProjectorSpec& spec,
                                         const std::vector<int>& views) {
    spec.validate();
    const Geometry& geo = spec.geometry;
    const int nr = geo.detector_rows, nc = geo.detector_channels;
    SparseProjection A;
    A.n_cols = spec.n_voxels();
    A.n_rows = views.size() * static_cast<size_t>(nr) * nc;
    A.view_of_row.resize(A.n_rows);
    A.meas_of_row.resize(A.n_rows);
    A.row_ptr.assign(A.n_rows + 1, 0);

    std::vector<std::vector<std::pair<int, float>>> rows(A.n_rows);

#pragma omp parallel
    {
        // Per-ray accumulation buffer; dense over voxels touched by one ray.
        std::vector<double> accum(A.n_cols, 0.0);
        std::vector<int> touched;
#pragma omp for schedule(dynamic)
        for (long long row = 0; row < static_cast<long long>(A.n_rows); ++row) {
            int vi = static_cast<int>(row / (static_cast<size_t>(nr) * nc));
            int rem = static_cast<int>(row % (static_cast<size_t>(nr) * nc));
            int r = rem / nc, c = rem % nc;
            int view = views[vi];
            ViewBasis b = view_basis(geo, spec.schedule.angles_deg[view]);
            touched.clear();
            trace_ray_impl(spec, b, r, c, [&](size_t j, double w) {
                if (accum[j] == 0.0) touched.push_back(static_cast<int>(j));
                accum[j] += w;
            });
            std::sort(touched.begin(), touched.end());
            auto& out = rows[row];
            out.reserve(touched.size());
            for (int j : touched) {
                out.emplace_back(j, static_cast<float>(accum[j]));
                accum[j] = 0.0;
            }
            A.view_of_row[row] = view;
            A.meas_of_row[row] =
                (static_cast<size_t>(view) * nr + r) * nc + c;
        }
    }

    size_t nnz = 0;
    for (size_t r = 0; r < A.n_rows; ++r) {
        A.row_ptr[r] = nnz;
        nnz += rows[r].size();
    }
    A.row_ptr[A.n_rows] = nnz;
    A.col_idx.resize(nnz);
    A.val.resize(nnz);
    for (size_t r = 0; r < A.n_rows; ++r) {
        size_t base = A.row_ptr[r];
        for (size_t k = 0; k < rows[r].size(); ++k) {
            A.col_idx[base + k] = rows[r][k].first;
            A.val[base + k] = rows[r][k].second;
        }
    }

    // CSC transpose (rows visited in order, so each column's row list is sorted).
    std::vector<size_t> count(A.n_cols, 0);
    for (size_t k = 0; k < nnz; ++k) ++count[A.col_idx[k]];
    A.col_ptr.assign(A.n_cols + 1, 0);
    for (size_t j = 0; j < A.n_cols; ++j) A.col_ptr[j + 1] = A.col_ptr[j] + count[j];
    A.csc_row.resize(nnz);
    A.csc_val.resize(nnz);
    std::vector<size_t> cursor(A.col_ptr.begin(), A.col_ptr.end() - 1);
    for (size_t r = 0; r < A.n_rows; ++r)
        for (size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) {
            size_t j = A.col_idx[k];
            A.csc_row[cursor[j]] = static_cast<int>(r);
            A.csc_val[cursor[j]] = A.val[k];
            ++cursor[j];
        }
    return A;
}

// ---------------------------------------------------------------------------
// FBP

namespace {

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * std::numbers::pi / static_cast<double>(len) *
                     (inverse ? 1.0 : -1.0);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t k = 0; k < len / 2; ++k) {
                auto even = a[i + k];
                auto odd = a[i + k + len / 2] * w;
                a[i + k] = even + odd;
                a[i + k + len / 2] = even - odd;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& z : a) z /= static_cast<double>(n);
}

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

Volume fbp(const Sinogram& y, const ProjectorSpec& spec, FbpFilter filter) {
    spec.validate();
    const Geometry& geo = spec.geometry;
    if (geo.kind == GeometryKind::laminography)
        throw std::invalid_argument("fbp: laminography geometry is unsupported");
    if (y.n_views != spec.schedule.n_views() || y.n_rows != geo.detector_rows ||
        y.n_channels != geo.detector_channels)
        throw DimensionError("fbp: sinogram dims do not match spec");

    const int nc = y.n_channels, nr = y.n_rows, nv = y.n_views;
    const size_t P = next_pow2(static_cast<size_t>(2) * nc);

    // Frequency response: Ram-Lak |f| in cycles/sample, optionally windowed.
    std::vector<double> H(P);
    for (size_t k = 0; k < P; ++k) {
        double f = static_cast<double>(k <= P / 2 ? k : P - k) / static_cast<double>(P);
        H[k] = f;
        if (filter == FbpFilter::hamming)
            H[k] *= 0.54 + 0.46 * std::cos(2.0 * std::numbers::pi * f);
    }

    // Filtered projections, (view, row, channel).
    std::vector<double> q(static_cast<size_t>(nv) * nr * nc);
#pragma omp parallel for schedule(dynamic)
    for (int v = 0; v < nv; ++v) {
        std::vector<std::complex<double>> buf(P);
        for (int r = 0; r < nr; ++r) {
            for (size_t k = 0; k < P; ++k) buf[k] = 0.0;
            for (int c = 0; c < nc; ++c) buf[c] = y.at(v, r, c);
            fft_radix2(buf, false);
            for (size_t k = 0; k < P; ++k) buf[k] *= H[k];
            fft_radix2(buf, true);
            for (int c = 0; c < nc; ++c)
                q[(static_cast<size_t>(v) * nr + r) * nc + c] = buf[c].real();
        }
    }

    Volume out(1, spec.nz, spec.ny, spec.nx, spec.voxel_size);
    const double pitch = geo.channel_pitch;
    const double scale = std::numbers::pi / (nv * pitch);
    const double ccx = 0.5 * (nc - 1), ccr = 0.5 * (nr - 1);
    const double cx = 0.5 * (spec.nx - 1), cy = 0.5 * (spec.ny - 1),
                 cz = 0.5 * (spec.nz - 1);

    std::vector<double> sin_t(nv), cos_t(nv);
    for (int v = 0; v < nv; ++v) {
        double th = spec.schedule.angles_deg[v] * std::numbers::pi / 180.0;
        sin_t[v] = std::sin(th);
        cos_t[v] = std::cos(th);
    }

#pragma omp parallel for collapse(2) schedule(static)
    for (int iz = 0; iz < spec.nz; ++iz)
        for (int iy = 0; iy < spec.ny; ++iy) {
            double z = (iz - cz) * spec.voxel_size;
            double fr = z / pitch + ccr;
            int r0 = static_cast<int>(std::floor(fr));
            double wr = fr - r0;
            // Row interpolation collapses to row 0 in the 2D case.
            if (nr == 1) { r0 = 0; wr = 0.0; }
            if (r0 < -1 || r0 >= nr) continue;
            double py = (iy - cy) * spec.voxel_size;
            for (int ix = 0; ix < spec.nx; ++ix) {
                double px = (ix - cx) * spec.voxel_size;
                double acc = 0.0;
                for (int v = 0; v < nv; ++v) {
                    double t = (-px * sin_t[v] + py * cos_t[v]) / pitch + ccx;
                    int c0 = static_cast<int>(std::floor(t));
                    double wc = t - c0;
                    auto sample_row = [&](int r) -> double {
                        if (r < 0 || r >= nr) return 0.0;
                        const double* qr = &q[(static_cast<size_t>(v) * nr + r) * nc];
                        double s = 0.0;
                        if (c0 >= 0 && c0 < nc) s += (1.0 - wc) * qr[c0];
                        if (c0 + 1 >= 0 && c0 + 1 < nc) s += wc * qr[c0 + 1];
                        return s;
                    };
                    if (wr == 0.0)
                        acc += sample_row(r0);
                    else
                        acc += (1.0 - wr) * sample_row(r0) + wr * sample_row(r0 + 1);
                }
                out.at(0, iz, iy, ix) = static_cast<float>(acc * scale);
            }
        }
    return out;
}

}  // namespace sct
