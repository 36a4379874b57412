#pragma once

#include <string>
#include <vector>

#include "sct/core.hpp"

namespace sct {

enum class GeometryKind { parallel2d, parallel3d, laminography };

/// Acquisition geometry. tilt_deg is the rotation-axis tilt from the
/// perpendicular axis; it is 0 for the parallel kinds and in (0, 90) for
/// laminography.
struct Geometry {
    GeometryKind kind = GeometryKind::parallel2d;
    double tilt_deg = 0.0;
    int detector_channels = 0;
    int detector_rows = 1;
    double channel_pitch = 1.0;

    void validate() const;
};

/// Ordered view angles with a frame index per view. n_frames = 1 and all
/// frame indices 0 for a 3D scan.
struct AngleSchedule {
    std::vector<double> angles_deg;
    std::vector<int> frame_of_view;
    int n_frames = 1;
    bool limited = false;

    int n_views() const { return static_cast<int>(angles_deg.size()); }
    std::vector<std::vector<int>> views_by_frame() const;
    void validate() const;

    std::string to_csv() const;
    static AngleSchedule from_csv(const std::string& text);
};

/// Per-measurement validity; false entries get their data weight zeroed.
struct MeasurementMask {
    std::vector<uint8_t> keep;
    int n_views = 0, n_rows = 0, n_channels = 0;

    bool at(int v, int r, int c) const {
        return keep[(static_cast<size_t>(v) * n_rows + r) * n_channels + c] != 0;
    }
};

/// Uniform half-open grid: lo + k*(hi-lo)/n for k = 0..n-1.
AngleSchedule uniform_angles(int n_views, double lo_deg, double hi_deg);

/// Same grid as uniform_angles but requires hi-lo < 180 and marks the
/// schedule as limited.
AngleSchedule limited_angles(int n_views, double lo_deg, double hi_deg);

/// Bit-reversed interlaced schedule: K = n_frames (power of two), N views
/// per frame, spacing D = 180/(N*K); frame k uses angles (j*K + bitrev(k))*D.
/// The union over frames is the uniform N*K grid on [0, 180).
AngleSchedule interlaced_angles(int views_per_frame, int n_frames);

/// Keep = false for measurements whose view angle (mod 180) lies in any of
/// the blocked ranges.
MeasurementMask beam_block_mask(const AngleSchedule& schedule,
                                const std::vector<std::pair<double, double>>& blocked_deg,
                                int n_rows, int n_channels);

unsigned bit_reverse(unsigned value, int bits);

}  // namespace sct
