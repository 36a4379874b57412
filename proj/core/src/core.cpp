#include "sct/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sct {

namespace {

constexpr const char* kMagic = "SCT1\n";

bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string dims_string(const std::vector<int>& dims) {
    std::string s;
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(dims[i]);
    }
    return s;
}

std::vector<int> parse_dims(const std::string& s) {
    std::vector<int> dims;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(tok, &pos);
        } catch (...) {
            pos = 0;
        }
        if (pos != tok.size() || v < 1)
            throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                      "bad dims entry '" + tok + "'");
        dims.push_back(v);
    }
    if (dims.empty())
        throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                  "empty dims");
    return dims;
}

// Payload floats are written verbatim; files are little-endian by contract.
// All supported targets are little-endian.
static_assert(sizeof(float) == 4, "f32 payload requires 4-byte float");

}  // namespace

bool Volume::finite() const { return all_finite(data); }

void write_container(const std::string& path, const ContainerPayload& payload,
                     const MetaMap& meta) {
    const std::vector<float>* data = nullptr;
    std::vector<int> dims;
    std::string kind;
    MetaMap extra;

    if (const Volume* v = std::get_if<Volume>(&payload)) {
        data = &v->data;
        dims = {v->nt, v->nz, v->ny, v->nx};
        kind = "volume";
        extra["voxel_size"] = std::to_string(v->voxel_size);
    } else if (const Sinogram* s = std::get_if<Sinogram>(&payload)) {
        data = &s->data;
        dims = {s->n_views, s->n_rows, s->n_channels};
        kind = "sinogram";
        extra["sino_kind"] = s->kind == SinoKind::counts ? "counts" : "log_normalized";
    } else {
        const WeightMap& w = std::get<WeightMap>(payload);
        data = &w.data;
        dims = {w.n_views, w.n_rows, w.n_channels};
        kind = "weights";
    }

    size_t n = 1;
    for (int d : dims) n *= static_cast<size_t>(d);
    if (n != data->size())
        throw DimensionError("payload size does not match dims for " + path);
    if (!all_finite(*data))
        throw ContainerParseError(ContainerParseError::Code::non_finite,
                                  "refusing to write non-finite data to " + path);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);

    out << kMagic;
    out << "kind=" << kind << "\n";
    out << "dims=" << dims_string(dims) << "\n";
    out << "dtype=f32le\n";
    for (const auto& [k, v] : extra)
        if (!meta.count(k)) out << k << "=" << v << "\n";
    for (const auto& [k, v] : meta) out << k << "=" << v << "\n";
    out << "---\n";
    out.write(reinterpret_cast<const char*>(data->data()),
              static_cast<std::streamsize>(data->size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path);
}

std::pair<ContainerPayload, MetaMap> read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);

    char magic[5] = {};
    in.read(magic, 5);
    if (in.gcount() != 5 || std::memcmp(magic, kMagic, 5) != 0)
        throw ContainerParseError(ContainerParseError::Code::bad_magic,
                                  "bad magic in " + path);

    MetaMap meta;
    std::string line;
    bool saw_sep = false;
    while (std::getline(in, line)) {
        if (line == "---") {
            saw_sep = true;
            break;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                      "header line without '=' in " + path);
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!saw_sep)
        throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                  "missing header terminator in " + path);

    auto require = [&](const char* key) -> std::string {
        auto it = meta.find(key);
        if (it == meta.end())
            throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                      std::string("missing header key '") + key +
                                          "' in " + path);
        return it->second;
    };
    std::string kind = require("kind");
    std::vector<int> dims = parse_dims(require("dims"));
    if (require("dtype") != "f32le")
        throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                  "unsupported dtype in " + path);

    size_t n = 1;
    for (int d : dims) n *= static_cast<size_t>(d);
    std::vector<float> data(n);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != n * sizeof(float) || in.peek() != EOF)
        throw ContainerParseError(ContainerParseError::Code::length_mismatch,
                                  "payload length does not match dims in " + path);

    meta.erase("kind");
    meta.erase("dims");
    meta.erase("dtype");

    if (kind == "volume") {
        if (dims.size() != 4)
            throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                      "volume requires 4 dims in " + path);
        Volume v(dims[0], dims[1], dims[2], dims[3]);
        v.data = std::move(data);
        if (auto it = meta.find("voxel_size"); it != meta.end()) {
            v.voxel_size = std::stod(it->second);
            meta.erase(it);
        }
        return {std::move(v), std::move(meta)};
    }
    if (kind == "sinogram") {
        if (dims.size() != 3)
            throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                      "sinogram requires 3 dims in " + path);
        Sinogram s(dims[0], dims[1], dims[2]);
        s.data = std::move(data);
        if (auto it = meta.find("sino_kind"); it != meta.end()) {
            s.kind = it->second == "counts" ? SinoKind::counts
                                            : SinoKind::log_normalized;
            meta.erase(it);
        }
        return {std::move(s), std::move(meta)};
    }
    if (kind == "weights") {
        if (dims.size() != 3)
            throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                      "weights requires 3 dims in " + path);
        WeightMap w(dims[0], dims[1], dims[2]);
        w.data = std::move(data);
        return {std::move(w), std::move(meta)};
    }
    throw ContainerParseError(ContainerParseError::Code::malformed_header,
                              "unknown container kind '" + kind + "' in " + path);
}

Volume read_volume(const std::string& path) {
    auto [payload, meta] = read_container(path);
    if (!std::holds_alternative<Volume>(payload))
        throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                  "expected a volume container: " + path);
    return std::get<Volume>(std::move(payload));
}

Sinogram read_sinogram(const std::string& path) {
    auto [payload, meta] = read_container(path);
    if (!std::holds_alternative<Sinogram>(payload))
        throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                  "expected a sinogram container: " + path);
    return std::get<Sinogram>(std::move(payload));
}

WeightMap read_weights(const std::string& path) {
    auto [payload, meta] = read_container(path);
    if (!std::holds_alternative<WeightMap>(payload))
        throw ContainerParseError(ContainerParseError::Code::malformed_header,
                                  "expected a weights container: " + path);
    return std::get<WeightMap>(std::move(payload));
}

void render_pgm(const float* slice, int ny, int nx, const std::string& path,
                std::optional<std::pair<double, double>> window) {
    size_t n = static_cast<size_t>(ny) * nx;
    double lo, hi;
    if (window) {
        lo = window->first;
        hi = window->second;
    } else {
        lo = slice[0];
        hi = slice[0];
        for (size_t i = 1; i < n; ++i) {
            lo = std::min(lo, static_cast<double>(slice[i]));
            hi = std::max(hi, static_cast<double>(slice[i]));
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P5\n" << nx << " " << ny << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(nx));
    double span = hi - lo;
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            double v = slice[static_cast<size_t>(y) * nx + x];
            double u = span > 0 ? std::clamp((v - lo) / span, 0.0, 1.0) : 0.0;
            row[x] = static_cast<unsigned char>(std::lround(255.0 * u));
        }
        out.write(reinterpret_cast<const char*>(row.data()), nx);
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace sct
