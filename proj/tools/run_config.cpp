#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace sct::cli {

namespace {

const std::set<std::string> kKnownKeys = {
    "phantom.kind", "phantom.nx", "phantom.ny", "phantom.nz",
    "phantom.n_frames", "phantom.voxel_size", "phantom.ellipse",
    "geometry.kind", "geometry.tilt_deg", "geometry.detector_channels",
    "geometry.detector_rows", "geometry.channel_pitch", "geometry.step_scale",
    "geometry.schedule", "geometry.n_views", "geometry.angle_lo",
    "geometry.angle_hi", "geometry.views_per_frame", "geometry.n_frames",
    "geometry.blocked",
    "corruption.dose_I0", "corruption.view_gain_sigma",
    "corruption.view_offset", "corruption.channel_gain_sigma",
    "corruption.zinger_rate", "corruption.zinger_amplitude", "corruption.seed",
    "fidelity.kind", "fidelity.T", "fidelity.delta", "fidelity.nu",
    "calibration.mode",
    "prior.kind", "prior.p", "prior.q", "prior.T", "prior.sigma_x",
    "prior.beta_s", "prior.beta_t",
    "recon.max_outer_iters", "recon.stop_rel_cost", "recon.stop_rel_x",
    "recon.nonneg", "recon.multires_levels", "recon.init", "recon.calib_every",
    "recon.seed", "recon.fbp_filter", "recon.nx", "recon.ny", "recon.nz",
    "recon.voxel_size",
    "output.pgm",
};

const std::set<std::string> kRepeatable = {"phantom.ellipse",
                                           "geometry.blocked"};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

double RunConfig::get_num(const std::string& key, double fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    try {
        size_t used = 0;
        double v = std::stod(it->second.back(), &used);
        if (used != it->second.back().size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not a number: '" +
                          it->second.back() + "'");
    }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    double v = get_num(key, fallback);
    int i = static_cast<int>(v);
    if (double(i) != v)
        throw ConfigError("key '" + key + "': expected an integer");
    return i;
}

std::string RunConfig::resolved_text() const {
    std::ostringstream out;
    for (const auto& [key, values] : entries)
        for (const auto& v : values) out << key << " = " << v << "\n";
    return out.str();
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'section.key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.find('.') == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": key '" + key + "' has no section");
        if (!kKnownKeys.count(key))
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": unknown key '" + key + "'");
        if (kRepeatable.count(key))
            cfg.entries[key].push_back(value);
        else
            cfg.entries[key] = {value};
    }
    return cfg;
}

}  // namespace sct::cli
