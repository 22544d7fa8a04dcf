#include "ventsim/breath/effort.hpp"

#include "ventsim/error.hpp"

#include <cmath>
#include <numbers>

namespace ventsim {

namespace {

// A ramp of length T reaching `height` at its end. The slope rises from zero
// over the first w seconds with a half-cosine, stays flat, and falls back to
// zero over the last w seconds. The ramp is point-symmetric about its
// midpoint, so it covers exactly half of the T x height rectangle.
double ramp_value(double height, double T, double w, double tau)
{
    const double peak = height / (T - w);
    auto blend_integral = [w](double s) {
        // integral over [0, s] of (1 - cos(pi x / w)) / 2
        return 0.5 * s - w / (2.0 * std::numbers::pi) * std::sin(std::numbers::pi * s / w);
    };
    if (tau <= 0) return 0.0;
    if (tau >= T) return height;
    if (tau < w) return peak * blend_integral(tau);
    if (tau <= T - w) return peak * (0.5 * w + (tau - w));
    return height - peak * blend_integral(T - tau);
}

double ramp_slope(double height, double T, double w, double tau)
{
    const double peak = height / (T - w);
    auto blend = [w](double s) { return 0.5 * (1.0 - std::cos(std::numbers::pi * s / w)); };
    if (tau <= 0 || tau >= T) return 0.0;
    if (tau < w) return peak * blend(tau);
    if (tau <= T - w) return peak;
    return peak * blend(T - tau);
}

} // namespace

void EffortShape::validate() const
{
    if (!(amplitude > 0)) throw ValidationError("effort amplitude must be positive");
    if (!(rise_time > 0) || !(plateau_time > 0) || !(fall_time > 0)) {
        throw ValidationError("effort rise, plateau and fall times must be positive");
    }
    if (!(corner_smoothing > 0) || 2 * corner_smoothing > rise_time ||
        2 * corner_smoothing > fall_time) {
        throw ValidationError("corner smoothing must be positive and at most half of each ramp");
    }
}

double pmus_waveform(const EffortShape& s, double t)
{
    if (!(t > 0) || t >= s.duration()) return 0.0;
    const double w = s.corner_smoothing;
    if (t <= s.rise_time) return -ramp_value(s.amplitude, s.rise_time, w, t);
    if (t <= s.rise_time + s.plateau_time) return -s.amplitude;
    const double tau = t - s.rise_time - s.plateau_time;
    return -(s.amplitude - ramp_value(s.amplitude, s.fall_time, w, tau));
}

double pmus_slope(const EffortShape& s, double t)
{
    if (!(t > 0) || t >= s.duration()) return 0.0;
    const double w = s.corner_smoothing;
    if (t <= s.rise_time) return -ramp_slope(s.amplitude, s.rise_time, w, t);
    if (t <= s.rise_time + s.plateau_time) return 0.0;
    return ramp_slope(s.amplitude, s.fall_time, w, t - s.rise_time - s.plateau_time);
}

double cardiac_oscillation(double amplitude, double heart_rate, double t)
{
    if (amplitude == 0.0) return 0.0;
    return amplitude * std::sin(2.0 * std::numbers::pi * heart_rate / 60.0 * t);
}

} // namespace ventsim
