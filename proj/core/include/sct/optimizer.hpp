#pragma once

#include <string>

#include "sct/core.hpp"
#include "sct/models.hpp"
#include "sct/projector.hpp"

namespace sct {

enum class InitKind { zero, fbp, given };

struct ReconOptions {
    int max_outer_iters = 200;
    double stop_rel_cost = 1e-6;
    double stop_rel_x = 1e-5;
    bool nonneg = true;
    int multires_levels = 1;
    InitKind init = InitKind::zero;
    int calib_every = 1;   // calibration update cadence in outer iterations
    uint64_t seed = 0;     // randomized voxel visitation order
    Volume init_volume;    // used when init == given

    void validate() const;
};

struct ReconResult {
    Volume x_hat;
    CalibrationState calib_hat;
    CostTrace trace;
    int iterations_run = 0;
    bool converged = false;
    std::string stop_reason;
};

/// Majorize-minimize ICD solve of the MBIR objective for a single 3D volume.
ReconResult mbir_reconstruct(const Sinogram& y, const WeightMap& W,
                             const ProjectorSpec& spec, const FidelityModel& fid,
                             const PriorModel& prior, const ReconOptions& opts);

/// Joint spatio-temporal solve: the schedule's frame assignment couples each
/// view to its frame's volume, and the temporal prior links adjacent frames.
ReconResult mbir4d_reconstruct(const Sinogram& y, const WeightMap& W,
                               const ProjectorSpec& spec,
                               const FidelityModel& fid, const PriorModel& prior,
                               const ReconOptions& opts);

/// Coarse-to-fine initialization: solve at 2^(levels-1)-downsampled grids
/// (detector box-binned, beta_s held fixed), upsampling bilinearly between
/// levels. Returns the full-resolution initialization volume.
Volume multires_init(const Sinogram& y, const WeightMap& W,
                     const ProjectorSpec& spec, const FidelityModel& fid,
                     const PriorModel& prior, const ReconOptions& opts);

/// Max projected-gradient magnitude: full |g| at interior voxels, negative
/// part of g where x = 0.
double kkt_residual(const Volume& x, const CalibrationState& calib,
                    const Sinogram& y, const WeightMap& W,
                    const FidelityModel& fid, const PriorModel& prior,
                    const ProjectorSpec& spec);

}  // namespace sct
