#include "ventsim/datagen/noise.hpp"

#include "ventsim/error.hpp"
#include "ventsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace ventsim {

void NoiseParams::validate(double sample_rate) const
{
    if (!(pressure_std >= 0) || !(flow_std >= 0)) throw ValidationError("noise stds must be >= 0");
    if (!(cutoff > 0 && cutoff < sample_rate / 2)) {
        throw ValidationError("noise cutoff must lie in (0, Nyquist)");
    }
    if (order < 1 || order > 12) throw ValidationError("noise filter order must be in [1, 12]");
}

Json to_json(const NoiseParams& n)
{
    return Json{{"pressure_std", n.pressure_std},
                {"flow_std", n.flow_std},
                {"cutoff", n.cutoff},
                {"order", n.order}};
}

NoiseParams merge_noise(const NoiseParams& base, const Json& j)
{
    if (!j.is_object()) throw ConfigError("noise must be an object");
    NoiseParams n = base;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw ConfigError("noise." + key + " must be a number");
        if (key == "pressure_std") n.pressure_std = value.get<double>();
        else if (key == "flow_std") n.flow_std = value.get<double>();
        else if (key == "cutoff") n.cutoff = value.get<double>();
        else if (key == "order") n.order = value.get<int>();
        else throw ConfigError("unknown noise key '" + key + "'");
    }
    return n;
}

std::vector<Biquad> butterworth_lowpass(int order, double cutoff, double sample_rate)
{
    const double k = std::tan(std::numbers::pi * cutoff / sample_rate);
    std::vector<Biquad> out;
    for (int m = 1; m <= order / 2; ++m) {
        // analog section s^2 + a s + 1 for the m-th conjugate pole pair
        const double a = 2.0 * std::sin((2.0 * m - 1.0) * std::numbers::pi / (2.0 * order));
        const double norm = 1.0 + a * k + k * k;
        const double b0 = k * k / norm;
        out.push_back({b0, 2.0 * b0, b0, 2.0 * (k * k - 1.0) / norm, (1.0 - a * k + k * k) / norm});
    }
    if (order % 2 == 1) {
        const double b0 = k / (1.0 + k);
        out.push_back({b0, b0, 0.0, (k - 1.0) / (k + 1.0), 0.0});
    }
    return out;
}

std::vector<double> filter(const std::vector<Biquad>& sections, const std::vector<double>& x)
{
    std::vector<double> y = x;
    for (const auto& s : sections) {
        // transposed direct form II
        double z1 = 0.0, z2 = 0.0;
        for (double& v : y) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
    return y;
}

std::vector<double> filtfilt(const std::vector<Biquad>& sections, const std::vector<double>& x)
{
    std::vector<double> y = filter(sections, x);
    std::reverse(y.begin(), y.end());
    y = filter(sections, y);
    std::reverse(y.begin(), y.end());
    return y;
}

double magnitude_response(const std::vector<Biquad>& sections, double f, double sample_rate)
{
    const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / sample_rate);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : sections) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return std::abs(h);
}

std::vector<double> filtered_noise(std::size_t n, double stddev, const NoiseParams& p,
                                   double sample_rate, std::uint64_t seed)
{
    std::vector<double> out(n, 0.0);
    if (stddev == 0.0 || n == 0) return out;
    // Pad both ends so the kept part is free of filter start-up transients.
    const std::size_t pad = static_cast<std::size_t>(std::ceil(2.0 * sample_rate));
    Rng rng(seed);
    std::vector<double> white(n + 2 * pad);
    for (double& w : white) w = rng.normal();
    const std::vector<double> f = filtfilt(butterworth_lowpass(p.order, p.cutoff, sample_rate), white);

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += f[pad + i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (f[pad + i] - mean) * (f[pad + i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) out[i] = (f[pad + i] - mean) / sd * stddev;
    return out;
}

void add_noise(std::vector<Sample>& samples, const NoiseParams& p, double sample_rate,
               std::uint64_t seed)
{
    const auto np = filtered_noise(samples.size(), p.pressure_std, p, sample_rate, mix_seed(seed, 0));
    const auto nf = filtered_noise(samples.size(), p.flow_std, p, sample_rate, mix_seed(seed, 1));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].paw += np[i];
        samples[i].flow += nf[i];
    }
}

} // namespace ventsim
