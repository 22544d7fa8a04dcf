#include "ventsim/breath/plans.hpp"

#include "ventsim/error.hpp"
#include "ventsim/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace ventsim {

std::optional<AsynchronyClass> parse_asynchrony_class(std::string_view s)
{
    for (auto c : kAllClasses) {
        if (to_string(c) == s) return c;
    }
    if (s == "EarlyCycling") return AsynchronyClass::EarlyCycling;
    if (s == "LateCycling") return AsynchronyClass::LateCycling;
    if (s == "DelayedInspiration") return AsynchronyClass::DelayedInspiration;
    if (s == "IneffectiveEffort") return AsynchronyClass::IneffectiveEffort;
    if (s == "DI LC" || s == "DI_LC") return AsynchronyClass::DelayedLate;
    if (s == "DI EC" || s == "DI_EC") return AsynchronyClass::DelayedEarly;
    return std::nullopt;
}

double Rng::normal()
{
    // 1 - u keeps the log argument in (0, 1]
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

BreathPlan build_breath_plan(double rate, double record_length, double jitter, std::uint64_t seed,
                             const BreathPlanOptions& options)
{
    if (!(rate >= 5.0 && rate <= 40.0)) {
        throw ConfigError("respiratory rate must be in [5, 40] breaths/min, got " +
                          std::to_string(rate));
    }
    if (!(record_length > 0)) throw ConfigError("record length must be positive");
    if (!(jitter >= 0) || !(options.amplitude_jitter >= 0)) {
        throw ConfigError("jitter must be non-negative");
    }
    try {
        options.shape.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }

    const double period = 60.0 / rate;
    constexpr double kMinGap = 0.1; // s between one effort's end and the next onset
    if (period * (1.0 - 3.0 * jitter) < options.shape.duration() + kMinGap) {
        throw ConfigError("breath period " + std::to_string(period) +
                          " s with jitter cannot hold an effort of " +
                          std::to_string(options.shape.duration()) + " s without overlap");
    }

    Rng rng(seed);
    auto truncated_normal = [&rng] {
        for (;;) {
            const double z = rng.normal();
            if (std::abs(z) <= 3.0) return z;
        }
    };

    BreathPlan plan;
    plan.record_length = record_length;
    plan.respiratory_rate = rate;
    plan.jitter = jitter;
    double onset = 0.5 * period;
    for (;;) {
        EffortShape shape = options.shape;
        if (options.amplitude_jitter > 0) {
            shape.amplitude *= std::max(0.2, 1.0 + options.amplitude_jitter * truncated_normal());
        }
        if (onset + shape.duration() > record_length) break;
        plan.onsets.push_back(onset);
        plan.shapes.push_back(shape);
        const double z = jitter > 0 ? truncated_normal() : 0.0;
        onset += period * (1.0 + jitter * z);
    }
    return plan;
}

namespace {

AsynchronyDistribution healthy_distribution()
{
    AsynchronyDistribution d{};
    d[index_of(AsynchronyClass::Normal)] = 0.70;
    d[index_of(AsynchronyClass::EarlyCycling)] = 0.08;
    d[index_of(AsynchronyClass::LateCycling)] = 0.08;
    d[index_of(AsynchronyClass::DelayedInspiration)] = 0.08;
    d[index_of(AsynchronyClass::IneffectiveEffort)] = 0.06;
    return d;
}

// Pins one class to `p` and rescales the remaining healthy mass to 1 - p.
AsynchronyDistribution emphasize(AsynchronyClass c, double p)
{
    auto d = healthy_distribution();
    const double rest = 1.0 - d[index_of(c)];
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = (i == index_of(c)) ? p : d[i] * (1.0 - p) / rest;
    }
    return d;
}

void check_sum(const AsynchronyDistribution& d)
{
    double total = 0;
    for (double p : d) {
        if (!(p >= 0) || !std::isfinite(p)) throw ConfigError("probabilities must be finite and >= 0");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("asynchrony distribution sums to " + std::to_string(total) + ", not 1");
    }
}

} // namespace

AsynchronyDistribution default_distribution(ArchetypeId id)
{
    switch (id) {
    case ArchetypeId::COPD1:
    case ArchetypeId::COPD2: return emphasize(AsynchronyClass::LateCycling, 0.25);
    case ArchetypeId::Fibrosis: return emphasize(AsynchronyClass::EarlyCycling, 0.25);
    default: return healthy_distribution();
    }
}

AsynchronyDistribution normal_only_distribution()
{
    AsynchronyDistribution d{};
    d[index_of(AsynchronyClass::Normal)] = 1.0;
    return d;
}

AsynchronyDistribution parse_distribution(const Json& j)
{
    if (!j.is_object()) throw ConfigError("asynchrony distribution must be an object");
    AsynchronyDistribution d{};
    for (const auto& [key, value] : j.items()) {
        auto c = parse_asynchrony_class(key);
        if (!c) throw ConfigError("unknown asynchrony class '" + key + "'");
        if (!value.is_number()) throw ConfigError("probability for '" + key + "' must be a number");
        d[index_of(*c)] = value.get<double>();
    }
    check_sum(d);
    return d;
}

Json to_json(const AsynchronyDistribution& d)
{
    Json j = Json::object();
    for (auto c : kAllClasses) j[std::string(to_string(c))] = d[index_of(c)];
    return j;
}

BreathOverride override_for(AsynchronyClass intent, const OverrideRanges& r)
{
    auto mid = [](double a, double b) { return 0.5 * (a + b); };
    BreathOverride o;
    o.intent = intent;
    switch (intent) {
    case AsynchronyClass::Normal: break;
    case AsynchronyClass::EarlyCycling: o.cycle_offset = mid(r.ec_offset_min, r.ec_offset_max); break;
    case AsynchronyClass::LateCycling: o.cycle_offset = mid(r.lc_offset_min, r.lc_offset_max); break;
    case AsynchronyClass::DelayedInspiration:
        o.trigger_delay = mid(r.di_delay_min, r.di_delay_max);
        o.cycle_offset = mid(r.di_offset_min, r.di_offset_max);
        break;
    case AsynchronyClass::IneffectiveEffort: o.suppress_trigger = true; break;
    case AsynchronyClass::DelayedLate:
        o.trigger_delay = mid(r.compound_delay_min, r.compound_delay_max);
        o.cycle_offset = mid(r.lc_offset_min, r.lc_offset_max);
        break;
    case AsynchronyClass::DelayedEarly:
        o.trigger_delay = mid(r.compound_delay_min, r.compound_delay_max);
        o.cycle_offset = mid(r.compound_ec_offset_min, r.compound_ec_offset_max);
        break;
    }
    return o;
}

AsynchronyPlan build_asynchrony_plan(const BreathPlan& plan, ArchetypeId archetype,
                                     const std::optional<AsynchronyDistribution>& distribution,
                                     std::uint64_t seed, const OverrideRanges& r)
{
    const auto dist = distribution.value_or(default_distribution(archetype));
    check_sum(dist);

    Rng rng(seed);
    AsynchronyPlan out;
    out.breaths.reserve(plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) {
        // fixed number of draws per breath keeps later breaths stable when
        // one probability changes
        const double u = rng.uniform();
        const double a = rng.uniform();
        const double b = rng.uniform();

        auto intent = AsynchronyClass::Normal;
        double cumulative = 0;
        for (auto c : kAllClasses) {
            cumulative += dist[index_of(c)];
            if (u < cumulative) {
                intent = c;
                break;
            }
        }
        if (u >= cumulative) {
            // u landed in the rounding gap above the last nonzero class
            for (auto c : kAllClasses) {
                if (dist[index_of(c)] > 0) intent = c;
            }
        }

        BreathOverride o;
        o.intent = intent;
        auto lerp = [](double lo, double hi, double s) { return lo + (hi - lo) * s; };
        switch (intent) {
        case AsynchronyClass::Normal: break;
        case AsynchronyClass::EarlyCycling:
            o.cycle_offset = lerp(r.ec_offset_min, r.ec_offset_max, b);
            break;
        case AsynchronyClass::LateCycling:
            o.cycle_offset = lerp(r.lc_offset_min, r.lc_offset_max, b);
            break;
        case AsynchronyClass::DelayedInspiration:
            o.trigger_delay = lerp(r.di_delay_min, r.di_delay_max, a);
            o.cycle_offset = lerp(r.di_offset_min, r.di_offset_max, b);
            break;
        case AsynchronyClass::IneffectiveEffort: o.suppress_trigger = true; break;
        case AsynchronyClass::DelayedLate:
            o.trigger_delay = lerp(r.compound_delay_min, r.compound_delay_max, a);
            o.cycle_offset = lerp(r.lc_offset_min, r.lc_offset_max, b);
            break;
        case AsynchronyClass::DelayedEarly:
            o.trigger_delay = lerp(r.compound_delay_min, r.compound_delay_max, a);
            o.cycle_offset = lerp(r.compound_ec_offset_min, r.compound_ec_offset_max, b);
            break;
        }
        out.breaths.push_back(o);
    }
    return out;
}

} // namespace ventsim
