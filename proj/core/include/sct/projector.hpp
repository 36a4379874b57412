#pragma once

#include <functional>
#include <vector>

#include "sct/core.hpp"
#include "sct/geometry.hpp"

namespace sct {

/// Discretization of the linear projection operator A for one 3D grid.
struct ProjectorSpec {
    Geometry geometry;
    AngleSchedule schedule;
    int nz = 1, ny = 0, nx = 0;
    double voxel_size = 1.0;
    double step_scale = 0.5;  // ray-march step = step_scale * voxel_size

    size_t n_voxels() const { return static_cast<size_t>(nz) * ny * nx; }
    size_t n_measurements() const {
        return static_cast<size_t>(schedule.n_views()) * geometry.detector_rows *
               geometry.detector_channels;
    }
    void validate() const;
    /// True when the detector covers the in-plane image diagonal.
    bool detector_covers_image() const;
};

/// A x for a single 3D frame (x.nt must be 1).
Sinogram forward_project(const Volume& x, const ProjectorSpec& spec);

/// Exact algebraic adjoint of forward_project: same sample positions and
/// interpolation weights, scattered instead of gathered.
Volume back_project(const Sinogram& y, const ProjectorSpec& spec);

/// Double-precision A x restricted to a view subset; row order is
/// views[0..], then detector row, then channel.
std::vector<double> forward_project_double(const std::vector<float>& x,
                                           const ProjectorSpec& spec,
                                           const std::vector<int>& views);

/// A^t y in double precision for the same row ordering as
/// forward_project_double. y has one entry per (view in views, row, channel).
std::vector<double> back_project_double(const std::vector<double>& y,
                                        const ProjectorSpec& spec,
                                        const std::vector<int>& views);

enum class FbpFilter { ramlak, hamming };

/// Filtered back projection for parallel geometries. Channels are zero-padded
/// to the next power of two >= 2*n_channels, ramp-filtered in the frequency
/// domain, then back-projected pixel-driven with linear interpolation and
/// scaled by pi/n_views.
Volume fbp(const Sinogram& y, const ProjectorSpec& spec,
           FbpFilter filter = FbpFilter::ramlak);

/// Explicit sparse A over a subset of views. Rows follow the order of
/// `views` (then detector row, then channel); columns index the 3D grid.
struct SparseProjection {
    size_t n_rows = 0, n_cols = 0;
    std::vector<int> view_of_row;      // global view index per matrix row
    std::vector<size_t> meas_of_row;   // global measurement index per row
    // CSR
    std::vector<size_t> row_ptr;
    std::vector<int> col_idx;
    std::vector<float> val;
    // CSC (filled by build_sparse_projection)
    std::vector<size_t> col_ptr;
    std::vector<int> csc_row;
    std::vector<float> csc_val;

    std::vector<double> apply(const std::vector<float>& x) const;
};

SparseProjection build_sparse_projection(const ProjectorSpec& spec,
                                         const std::vector<int>& views);

/// Enumerate (voxel, weight) contributions of one ray; shared by the
/// gather/scatter/matrix paths so the adjoint is exact by construction.
void trace_ray(const ProjectorSpec& spec, int view, int row, int channel,
               const std::function<void(size_t voxel, double weight)>& visit);

}  // namespace sct
