#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sct {

/// Dense voxel grid with dims (nt, nz, ny, nx). nt and/or nz are 1 for the
/// lower-dimensional cases. Values are attenuation per unit length.
struct Volume {
    std::vector<float> data;
    int nt = 1, nz = 1, ny = 1, nx = 1;
    double voxel_size = 1.0;

    Volume() = default;
    Volume(int nt_, int nz_, int ny_, int nx_, double voxel = 1.0)
        : data(static_cast<size_t>(nt_) * nz_ * ny_ * nx_, 0.0f),
          nt(nt_), nz(nz_), ny(ny_), nx(nx_), voxel_size(voxel) {}

    size_t size() const { return data.size(); }
    size_t frame_size() const { return static_cast<size_t>(nz) * ny * nx; }
    float& at(int t, int z, int y, int x) {
        return data[((static_cast<size_t>(t) * nz + z) * ny + y) * nx + x];
    }
    float at(int t, int z, int y, int x) const {
        return data[((static_cast<size_t>(t) * nz + z) * ny + y) * nx + x];
    }
    bool finite() const;
};

enum class SinoKind { counts, log_normalized };

/// Projection data indexed (view, row, channel).
struct Sinogram {
    std::vector<float> data;
    int n_views = 0, n_rows = 0, n_channels = 0;
    SinoKind kind = SinoKind::log_normalized;

    Sinogram() = default;
    Sinogram(int v, int r, int c, SinoKind k = SinoKind::log_normalized)
        : data(static_cast<size_t>(v) * r * c, 0.0f),
          n_views(v), n_rows(r), n_channels(c), kind(k) {}

    size_t size() const { return data.size(); }
    size_t index(int v, int r, int c) const {
        return (static_cast<size_t>(v) * n_rows + r) * n_channels + c;
    }
    float& at(int v, int r, int c) { return data[index(v, r, c)]; }
    float at(int v, int r, int c) const { return data[index(v, r, c)]; }
};

/// Per-measurement nonnegative weights, shaped like its companion sinogram.
struct WeightMap {
    std::vector<float> data;
    int n_views = 0, n_rows = 0, n_channels = 0;

    WeightMap() = default;
    WeightMap(int v, int r, int c, float fill = 1.0f)
        : data(static_cast<size_t>(v) * r * c, fill),
          n_views(v), n_rows(r), n_channels(c) {}

    size_t size() const { return data.size(); }
    float& at(int v, int r, int c) {
        return data[(static_cast<size_t>(v) * n_rows + r) * n_channels + c];
    }
    float at(int v, int r, int c) const {
        return data[(static_cast<size_t>(v) * n_rows + r) * n_channels + c];
    }
};

/// Objective value per outer iteration. total = fidelity + prior.
struct CostTrace {
    struct Entry {
        int outer_iteration;
        double total_cost;
        double fidelity_cost;
        double prior_cost;
    };
    std::vector<Entry> values;

    void append(int iter, double fidelity, double prior) {
        values.push_back({iter, fidelity + prior, fidelity, prior});
    }
};

// ---------------------------------------------------------------------------
// Errors

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContainerParseError : std::runtime_error {
    enum class Code { bad_magic, malformed_header, length_mismatch, non_finite };
    Code code;
    ContainerParseError(Code c, const std::string& msg)
        : std::runtime_error(msg), code(c) {}
};

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// "SCT1" container format.
//
//   SCT1\n
//   key=value\n   (one per line; includes kind, dims, dtype=f32le)
//   ---\n
//   <raw little-endian float32 payload, row-major>

using ContainerPayload = std::variant<Volume, Sinogram, WeightMap>;
using MetaMap = std::map<std::string, std::string>;

void write_container(const std::string& path, const ContainerPayload& payload,
                     const MetaMap& meta = {});

std::pair<ContainerPayload, MetaMap> read_container(const std::string& path);

Volume read_volume(const std::string& path);
Sinogram read_sinogram(const std::string& path);
WeightMap read_weights(const std::string& path);

// ---------------------------------------------------------------------------
// Rendering

/// Write a binary PGM (P5, maxval 255). pixel = round(255*clamp((v-lo)/(hi-lo))).
/// Default window is (min, max) of the slice; a constant slice maps to 0.
void render_pgm(const float* slice, int ny, int nx, const std::string& path,
                std::optional<std::pair<double, double>> window = std::nullopt);

}  // namespace sct
