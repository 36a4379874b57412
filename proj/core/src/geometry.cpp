#include "sct/geometry.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sct {

void Geometry::validate() const {
    if (kind == GeometryKind::laminography) {
        if (!(tilt_deg > 0.0 && tilt_deg < 90.0))
            throw std::invalid_argument("laminography requires 0 < tilt_deg < 90");
    } else if (tilt_deg != 0.0) {
        throw std::invalid_argument("parallel geometries require tilt_deg = 0");
    }
    if (detector_channels < 1 || detector_rows < 1)
        throw std::invalid_argument("detector dims must be >= 1");
    if (channel_pitch <= 0.0)
        throw std::invalid_argument("channel_pitch must be > 0");
}

std::vector<std::vector<int>> AngleSchedule::views_by_frame() const {
    std::vector<std::vector<int>> out(n_frames);
    for (int v = 0; v < n_views(); ++v) out[frame_of_view[v]].push_back(v);
    return out;
}

void AngleSchedule::validate() const {
    if (frame_of_view.size() != angles_deg.size())
        throw std::invalid_argument("schedule: frame/angle size mismatch");
    if (n_frames < 1) throw std::invalid_argument("schedule: n_frames < 1");
    std::vector<int> count(n_frames, 0);
    for (size_t i = 0; i < angles_deg.size(); ++i) {
        if (!std::isfinite(angles_deg[i]))
            throw std::invalid_argument("schedule: non-finite angle");
        int f = frame_of_view[i];
        if (f < 0 || f >= n_frames)
            throw std::invalid_argument("schedule: frame index out of range");
        ++count[f];
    }
    for (int f = 0; f < n_frames; ++f)
        if (count[f] == 0)
            throw std::invalid_argument("schedule: frame " + std::to_string(f) +
                                        " owns no views");
}

std::string AngleSchedule::to_csv() const {
    std::ostringstream out;
    out << "angle_deg,frame\n";
    out.precision(12);
    for (int v = 0; v < n_views(); ++v)
        out << angles_deg[v] << "," << frame_of_view[v] << "\n";
    return out.str();
}

AngleSchedule AngleSchedule::from_csv(const std::string& text) {
    AngleSchedule s;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("angle_deg,frame", 0) != 0)
        throw std::invalid_argument("schedule csv: bad header");
    int max_frame = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("schedule csv: missing comma");
        s.angles_deg.push_back(std::stod(line.substr(0, comma)));
        int f = std::stoi(line.substr(comma + 1));
        s.frame_of_view.push_back(f);
        max_frame = std::max(max_frame, f);
    }
    s.n_frames = max_frame + 1;
    s.validate();
    return s;
}

AngleSchedule uniform_angles(int n_views, double lo_deg, double hi_deg) {
    if (n_views < 1) throw std::invalid_argument("uniform_angles: n_views < 1");
    if (!(lo_deg < hi_deg)) throw std::invalid_argument("uniform_angles: lo >= hi");
    AngleSchedule s;
    double step = (hi_deg - lo_deg) / n_views;
    for (int k = 0; k < n_views; ++k) {
        s.angles_deg.push_back(lo_deg + k * step);
        s.frame_of_view.push_back(0);
    }
    s.n_frames = 1;
    return s;
}

AngleSchedule limited_angles(int n_views, double lo_deg, double hi_deg) {
    if (hi_deg - lo_deg >= 180.0)
        throw std::invalid_argument(
            "limited_angles: range >= 180, use uniform_angles");
    AngleSchedule s = uniform_angles(n_views, lo_deg, hi_deg);
    s.limited = true;
    return s;
}

unsigned bit_reverse(unsigned value, int bits) {
    unsigned out = 0;
    for (int b = 0; b < bits; ++b) {
        out = (out << 1) | (value & 1u);
        value >>= 1;
    }
    return out;
}

AngleSchedule interlaced_angles(int views_per_frame, int n_frames) {
    if (views_per_frame < 1)
        throw std::invalid_argument("interlaced_angles: views_per_frame < 1");
    if (n_frames < 1 || (n_frames & (n_frames - 1)) != 0)
        throw std::invalid_argument(
            "interlaced_angles: n_frames must be a power of two");
    int bits = 0;
    while ((1 << bits) < n_frames) ++bits;

    AngleSchedule s;
    s.n_frames = n_frames;
    double delta = 180.0 / (static_cast<double>(views_per_frame) * n_frames);
    for (int k = 0; k < n_frames; ++k) {
        unsigned offset = bit_reverse(static_cast<unsigned>(k), bits);
        for (int j = 0; j < views_per_frame; ++j) {
            s.angles_deg.push_back(
                (static_cast<double>(j) * n_frames + offset) * delta);
            s.frame_of_view.push_back(k);
        }
    }
    return s;
}

MeasurementMask beam_block_mask(
    const AngleSchedule& schedule,
    const std::vector<std::pair<double, double>>& blocked_deg, int n_rows,
    int n_channels) {
    MeasurementMask m;
    m.n_views = schedule.n_views();
    m.n_rows = n_rows;
    m.n_channels = n_channels;
    m.keep.assign(static_cast<size_t>(m.n_views) * n_rows * n_channels, 1);
    for (int v = 0; v < m.n_views; ++v) {
        double a = std::fmod(schedule.angles_deg[v], 180.0);
        if (a < 0) a += 180.0;
        bool blocked = false;
        for (const auto& [lo, hi] : blocked_deg)
            if (a >= lo && a <= hi) {
                blocked = true;
                break;
            }
        if (blocked) {
            size_t base = static_cast<size_t>(v) * n_rows * n_channels;
            std::fill(m.keep.begin() + base,
                      m.keep.begin() + base + static_cast<size_t>(n_rows) * n_channels,
                      uint8_t{0});
        }
    }
    return m;
}

}  // namespace sct
