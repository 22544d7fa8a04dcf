#pragma once

#include "ventsim/json.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace ventsim {

enum class ArchetypeId {
    Healthy,
    Obese1,
    Obese2,
    ARDS1,
    ARDS2,
    ARDS3,
    COPD1,
    COPD2,
    Fibrosis,
};

/// Healthy lungs use the logarithmic pressure-volume law, disease archetypes
/// the sigmoid one.
enum class LungCurveKind { Logarithmic, Sigmoid };

std::string_view to_string(ArchetypeId id);
std::optional<ArchetypeId> parse_archetype(std::string_view name);

std::string_view to_string(LungCurveKind kind);

/// Fitted constants of one patient archetype.
///
/// Units: volumes in L, pressures in cmH2O, resistances in cmH2O*s/L.
/// The two Kelvin-body constants (R_ve, C_ve) are the values the published
/// parameter table lists as "Rd"/"Cd"; see README for the reasoning.
struct ArchetypeParams {
    ArchetypeId id = ArchetypeId::Healthy;
    double RV = 0;     // residual volume
    double TLC = 0;    // total lung capacity
    double A_cw = 0;   // chest-wall curve offset
    double B_cw = 0;   // chest-wall curve width
    double A_l = 0;    // lung curve constants (meaning depends on lung_curve_kind)
    double B_l = 0;
    double D_l = 0;
    double K_l = 0;
    double A_s = 0;    // small airway resistance law
    double B_s = 0;
    double K_s = 0;
    double V_star = 0;
    double V_cmax = 0; // collapsible airway volume/resistance laws
    double A_c = 0;
    double B_c = 0;
    double D_c = 0;
    double K_c = 0;
    double A_u = 0;    // upper airway Rohrer law
    double K_u = 0;
    double R_ve = 0;   // Kelvin body
    double C_ve = 0;
    LungCurveKind lung_curve_kind = LungCurveKind::Logarithmic;

    std::string_view name() const { return to_string(id); }

    /// Throws ValidationError when an invariant is violated.
    void validate() const;
};

/// The nine built-in archetypes, in ArchetypeId order.
std::span<const ArchetypeParams> archetype_catalog();

const ArchetypeParams& archetype(ArchetypeId id);

/// Throws NotFoundError for unknown names.
const ArchetypeParams& archetype(std::string_view name);

Json to_json(const ArchetypeParams& p);
ArchetypeParams archetype_from_json(const Json& j);

/// Whole catalog as {"archetypes": [...]}; shared by the CLI and the service.
Json catalog_json();

} // namespace ventsim
