#include "ventsim/model/element_laws.hpp"

#include "ventsim/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace ventsim {

namespace {

void require_finite(double x, const char* what)
{
    if (!std::isfinite(x)) {
        throw DomainError(std::string(what) + ": non-finite input");
    }
}

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x)
{
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double chest_wall_span(const ArchetypeParams& p) { return p.TLC - p.RV; }

} // namespace

double chest_wall_volume(const ArchetypeParams& p, double P_cw)
{
    require_finite(P_cw, "chest_wall_volume");
    const double e = std::exp(-(P_cw - p.A_cw) / p.B_cw);
    return chest_wall_span(p) / (0.99 + e) + p.RV;
}

double lung_volume(const ArchetypeParams& p, double operand)
{
    require_finite(operand, "lung_volume");
    if (p.lung_curve_kind == LungCurveKind::Sigmoid) {
        return p.A_l * logistic(p.B_l * (operand - p.D_l));
    }
    const double arg = (operand - p.B_l) / p.A_l;
    if (!(arg > 0)) {
        std::ostringstream os;
        os << "lung_volume: log of non-positive argument at transpulmonary pressure " << operand
           << " cmH2O (requires P > " << p.B_l << ")";
        throw DomainError(os.str());
    }
    return std::log(arg) / p.K_l;
}

double collapsible_volume(const ArchetypeParams& p, double P_t)
{
    require_finite(P_t, "collapsible_volume");
    return p.V_cmax * std::exp(-p.D_c * softplus(-p.A_c * (P_t - p.B_c)));
}

double collapsible_resistance(const ArchetypeParams& p, double P_t)
{
    require_finite(P_t, "collapsible_resistance");
    return p.K_c * std::exp(2.0 * p.D_c * softplus(-p.A_c * (P_t - p.B_c)));
}

double small_airway_resistance(const ArchetypeParams& p, double V_l)
{
    require_finite(V_l, "small_airway_resistance");
    return p.A_s * std::exp(p.K_s * (V_l - p.RV) / (p.V_star - p.RV)) + p.B_s;
}

double upper_airway_resistance(const ArchetypeParams& p, double flow)
{
    require_finite(flow, "upper_airway_resistance");
    return p.A_u + p.K_u * std::abs(flow);
}

std::string_view to_string(Curve c)
{
    switch (c) {
    case Curve::ChestWall: return "chest_wall";
    case Curve::Lung: return "lung";
    case Curve::Collapsible: return "collapsible";
    }
    return "?";
}

VolumeRange volume_range(Curve curve, const ArchetypeParams& p)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (curve) {
    case Curve::ChestWall: return {p.RV, p.RV + chest_wall_span(p) / 0.99};
    case Curve::Lung:
        if (p.lung_curve_kind == LungCurveKind::Sigmoid) return {0.0, p.A_l};
        return {-inf, inf};
    case Curve::Collapsible: return {0.0, p.V_cmax};
    }
    return {0.0, 0.0};
}

double invert_compliance(Curve curve, const ArchetypeParams& p, double V)
{
    require_finite(V, "invert_compliance");
    const auto range = volume_range(curve, p);
    if (!range.contains(V)) {
        std::ostringstream os;
        os << "invert_compliance(" << to_string(curve) << "): volume " << V
           << " L outside open range (" << range.lo << ", " << range.hi << ")";
        throw RangeError(os.str());
    }
    switch (curve) {
    case Curve::ChestWall:
        return p.A_cw - p.B_cw * std::log(chest_wall_span(p) / (V - p.RV) - 0.99);
    case Curve::Lung:
        if (p.lung_curve_kind == LungCurveKind::Sigmoid) {
            return p.D_l - std::log(p.A_l / V - 1.0) / p.B_l;
        }
        return p.A_l * std::exp(p.K_l * V) + p.B_l;
    case Curve::Collapsible:
        // (V_cmax/V)^(1/D_c) - 1, written to keep precision near V_cmax
        return p.B_c - std::log(std::expm1(-std::log(V / p.V_cmax) / p.D_c)) / p.A_c;
    }
    return 0.0;
}

double compliance(Curve curve, const ArchetypeParams& p, double operand)
{
    require_finite(operand, "compliance");
    switch (curve) {
    case Curve::ChestWall: {
        const double e = std::exp(-(operand - p.A_cw) / p.B_cw);
        if (!std::isfinite(e)) return 0.0;
        const double d = 0.99 + e;
        return chest_wall_span(p) * e / (p.B_cw * d * d);
    }
    case Curve::Lung:
        if (p.lung_curve_kind == LungCurveKind::Sigmoid) {
            const double s = logistic(p.B_l * (operand - p.D_l));
            return p.A_l * p.B_l * s * (1.0 - s);
        }
        if (!(operand > p.B_l)) throw DomainError("compliance: lung operand outside log domain");
        return 1.0 / (p.K_l * (operand - p.B_l));
    case Curve::Collapsible: {
        const double z = -p.A_c * (operand - p.B_c);
        return collapsible_volume(p, operand) * p.D_c * p.A_c * logistic(z);
    }
    }
    return 0.0;
}

} // namespace ventsim
