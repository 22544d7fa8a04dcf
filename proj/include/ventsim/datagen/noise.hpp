#pragma once

#include "ventsim/json.hpp"
#include "ventsim/solver/simulation.hpp"

#include <cstdint>
#include <vector>

namespace ventsim {

struct NoiseParams {
    double pressure_std = 0.1; // cmH2O
    double flow_std = 0.01;    // L/s
    double cutoff = 15.0;      // Hz
    int order = 4;

    void validate(double sample_rate) const;
};

Json to_json(const NoiseParams& n);
NoiseParams merge_noise(const NoiseParams& base, const Json& j);

/// Second-order section, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

/// Digital Butterworth low-pass (bilinear transform with prewarping) as a
/// cascade of sections; an odd order adds one first-order section (b2 = a2 = 0).
std::vector<Biquad> butterworth_lowpass(int order, double cutoff, double sample_rate);

/// Single causal pass through the cascade, zero initial state.
std::vector<double> filter(const std::vector<Biquad>& sections, const std::vector<double>& x);

/// Forward then backward pass: zero phase, squared magnitude response.
std::vector<double> filtfilt(const std::vector<Biquad>& sections, const std::vector<double>& x);

/// |H(f)| of the cascade for one pass.
double magnitude_response(const std::vector<Biquad>& sections, double f, double sample_rate);

/// n samples of band-limited noise scaled to the given standard deviation:
/// white Gaussian noise passed through the zero-phase low-pass.
std::vector<double> filtered_noise(std::size_t n, double stddev, const NoiseParams& p,
                                   double sample_rate, std::uint64_t seed);

/// Adds filtered noise to paw and flow; vol and pmus stay untouched.
/// Zero standard deviations leave the samples unchanged.
void add_noise(std::vector<Sample>& samples, const NoiseParams& p, double sample_rate,
               std::uint64_t seed);

} // namespace ventsim
