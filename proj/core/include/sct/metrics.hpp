#pragma once

#include <vector>

#include "sct/core.hpp"

namespace sct {

/// sqrt(mean((a - b)^2)) over all voxels. Shapes must match.
double rmse(const Volume& a, const Volume& b);

/// rmse / (max(ref) - min(ref)); 0/0 yields 0.
double nrmse(const Volume& test, const Volume& ref);

/// 20*log10(range(ref) / rmse); +inf when rmse is 0.
double psnr(const Volume& test, const Volume& ref);

/// Concentric-ring artifact score for the central slice of each frame:
/// RMS deviation of the annular mean profile from its median-filtered
/// (width 5) version, over integer radii in [5, 0.45*min(ny, nx)].
double ring_score(const Volume& x);

struct MetricReport {
    struct FrameRow {
        int frame;
        double rmse, nrmse, psnr;
    };
    double rmse = 0.0, nrmse = 0.0, psnr = 0.0;
    double ring = 0.0;
    std::vector<FrameRow> per_frame;  // filled when nt > 1
};

MetricReport evaluate(const Volume& test, const Volume& ref);

}  // namespace sct
