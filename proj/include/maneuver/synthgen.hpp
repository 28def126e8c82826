#pragma once

// Deterministic synthetic telematics generator. Each driver's stream is a
// seeded chain of maneuver segments; every segment emits its class kernel
// plus Gaussian noise.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "maneuver/data_model.hpp"
#include "maneuver/error.hpp"
#include "maneuver/random.hpp"

namespace maneuver::synth {

inline constexpr std::size_t kChannels = 7;  // every feature except road_type

inline const std::array<std::string, 8>& maneuver_names() {
    static const std::array<std::string, 8> names = {
        "acceleration from standing", "turn left",  "turn right", "curve left",
        "curve right",                "continuous driving", "targeted braking", "stationary"};
    return names;
}

inline const std::vector<std::string>& road_type_names() {
    static const std::vector<std::string> names = {"urban", "rural", "highway"};
    return names;
}

// Mean signal of one channel over a segment, as a function of the relative
// position u in [0, 1].
struct Kernel {
    enum class Shape { flat, ramp, pulse };
    Shape shape = Shape::flat;
    double a = 0.0;
    double b = 0.0;

    double operator()(double u) const {
        switch (shape) {
            case Shape::flat: return a;
            case Shape::ramp: return a + (b - a) * u;
            case Shape::pulse: return a + b * std::sin(std::numbers::pi * u);
        }
        return a;
    }
};

inline Kernel flat(double a) { return {Kernel::Shape::flat, a, 0.0}; }
inline Kernel ramp(double a, double b) { return {Kernel::Shape::ramp, a, b}; }
inline Kernel pulse(double base, double amplitude) { return {Kernel::Shape::pulse, base, amplitude}; }

struct ManeuverTemplate {
    std::string label;
    std::size_t min_frames = 1;
    std::size_t max_frames = 1;
    // acc_x (lateral), acc_y (longitudinal), acc_z, gyro_x, gyro_y, gyro_z (yaw), gps_speed
    std::array<Kernel, kChannels> kernels{};
    std::array<double, kChannels> sigma{};
};

// Default class kernels. Turns and curves differ in gyro_z sign and
// magnitude plus speed level; braking is a negative longitudinal ramp;
// stationary is near-zero everywhere.
inline std::vector<ManeuverTemplate> default_templates() {
    const std::array<double, kChannels> moving = {0.3, 0.3, 0.3, 0.03, 0.03, 0.03, 0.4};
    const std::array<double, kChannels> still = {0.05, 0.05, 0.05, 0.01, 0.01, 0.01, 0.05};
    const auto& n = maneuver_names();
    return {
        {n[0], 16, 30, {flat(0), pulse(0.5, 2.0), flat(0), flat(0), flat(0), flat(0), ramp(0.5, 10.0)}, moving},
        {n[1], 16, 30, {pulse(0, 2.0), flat(0), flat(0), flat(0), flat(0), pulse(0, 0.5), flat(5.0)}, moving},
        {n[2], 16, 30, {pulse(0, -2.0), flat(0), flat(0), flat(0), flat(0), pulse(0, -0.5), flat(5.0)}, moving},
        {n[3], 20, 40, {pulse(0, 1.5), flat(0), flat(0), flat(0), flat(0), pulse(0, 0.15), flat(14.0)}, moving},
        {n[4], 20, 40, {pulse(0, -1.5), flat(0), flat(0), flat(0), flat(0), pulse(0, -0.15), flat(14.0)}, moving},
        {n[5], 20, 50, {flat(0), flat(0), flat(0), flat(0), flat(0), flat(0), flat(14.0)}, moving},
        {n[6], 14, 24, {flat(0), ramp(-1.0, -3.5), flat(0), flat(0), flat(0), flat(0), ramp(14.0, 3.0)}, moving},
        {n[7], 20, 50, {flat(0), flat(0), flat(0), flat(0), flat(0), flat(0), flat(0.0)}, still},
    };
}

struct ScenarioConfig {
    std::size_t n_drivers = 3;
    std::size_t frames_per_driver = 4000;
    std::map<std::string, double> weights;  // label -> mixture weight; empty = uniform
    std::uint64_t seed = 0;
    std::int64_t capture_period_ms = kDefaultCapturePeriodMs;
    double noise_scale = 1.0;     // multiplies every template sigma
    double amplitude_jitter = 0.2;  // per-segment kernel scale drawn from 1 +/- jitter

    void validate(const std::vector<ManeuverTemplate>& templates) const {
        if (n_drivers < 1) throw ConfigError("n_drivers must be >= 1");
        if (frames_per_driver < 1) throw ConfigError("frames_per_driver must be >= 1");
        if (capture_period_ms <= 0) throw ConfigError("capture_period_ms must be positive");
        if (!(noise_scale >= 0.0) || !(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0)) {
            throw ConfigError("noise_scale must be >= 0 and amplitude_jitter in [0, 1)");
        }
        std::size_t positive = 0;
        for (const auto& [label, w] : weights) {
            bool known = false;
            for (const auto& t : templates) known = known || t.label == label;
            if (!known) throw ConfigError("unknown maneuver '" + label + "' in class weights");
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("class weights must be finite and >= 0");
            if (w > 0.0) ++positive;
        }
        if (!weights.empty() && positive == 0) throw ConfigError("at least one class weight must be positive");
    }

    std::vector<double> weight_vector(const std::vector<ManeuverTemplate>& templates) const {
        std::vector<double> w;
        for (const auto& t : templates) {
            if (weights.empty()) {
                w.push_back(1.0);
            } else {
                auto it = weights.find(t.label);
                w.push_back(it == weights.end() ? 0.0 : it->second);
            }
        }
        return w;
    }
};

namespace detail {

// Draws a template index by weight, skipping `exclude` unless it is the
// only class with positive weight.
inline std::size_t draw_class(Rng& rng, const std::vector<double>& w, std::size_t exclude) {
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i != exclude) total += w[i];
    }
    if (total <= 0.0) return exclude;
    double u = rng.uniform() * total;
    std::size_t last = exclude;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i == exclude || w[i] <= 0.0) continue;
        last = i;
        if (u < w[i]) return i;
        u -= w[i];
    }
    return last;
}

}  // namespace detail

inline std::string driver_name(std::size_t index) {
    std::string n = std::to_string(index + 1);
    if (n.size() < 2) n.insert(0, "0");
    return "driver_" + n;
}

// One recording per driver. Road-type codes index road_type_names().
inline std::vector<Recording> generate(const ScenarioConfig& cfg,
                                       const std::vector<ManeuverTemplate>& templates = default_templates()) {
    cfg.validate(templates);
    const auto weights = cfg.weight_vector(templates);
    const std::size_t n_roads = road_type_names().size();

    std::vector<Recording> out;
    for (std::size_t d = 0; d < cfg.n_drivers; ++d) {
        Rng rng(derive_seed(cfg.seed, 0xd71e, d));
        Recording rec;
        rec.driver_id = driver_name(d);
        rec.capture_period_ms = cfg.capture_period_ms;
        rec.frames.reserve(cfg.frames_per_driver);
        rec.labels.reserve(cfg.frames_per_driver);
        std::size_t prev = templates.size();
        while (rec.frames.size() < cfg.frames_per_driver) {
            const std::size_t cls = detail::draw_class(rng, weights, prev);
            prev = cls;
            const auto& tpl = templates[cls];
            const std::size_t len = tpl.min_frames + static_cast<std::size_t>(rng.below(tpl.max_frames - tpl.min_frames + 1));
            const double amp = 1.0 + cfg.amplitude_jitter * (2.0 * rng.uniform() - 1.0);
            const int road = static_cast<int>(rng.below(n_roads));
            for (std::size_t i = 0; i < len && rec.frames.size() < cfg.frames_per_driver; ++i) {
                const double u = len == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(len - 1);
                std::array<double, kChannels> v{};
                for (std::size_t c = 0; c < kChannels; ++c) {
                    v[c] = amp * tpl.kernels[c](u) + rng.normal(0.0, cfg.noise_scale * tpl.sigma[c]);
                }
                SensorFrame f;
                f.timestamp_ms = static_cast<std::int64_t>(rec.frames.size()) * cfg.capture_period_ms;
                f.acc_x = v[0];
                f.acc_y = v[1];
                f.acc_z = v[2];
                f.gyro_x = v[3];
                f.gyro_y = v[4];
                f.gyro_z = v[5];
                f.gps_speed = std::max(0.0, v[6]);
                f.road_type = road;
                rec.frames.push_back(f);
                rec.labels.push_back(tpl.label);
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace maneuver::synth
