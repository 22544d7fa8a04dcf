#pragma once

#include "ventsim/model/archetype.hpp"

#include <string_view>

namespace ventsim {

// Nonlinear element laws of the lung circuit. All functions are pure and
// reject non-finite inputs with DomainError.

/// Chest-wall volume [L] as a function of the chest-wall operand
/// P_cw = P_F - P_pl (P_F is the node between the chest wall and the Kelvin
/// body; with an uncharged Kelvin body it equals the muscle pressure).
double chest_wall_volume(const ArchetypeParams& p, double P_cw);

/// Lung volume [L] as a function of transpulmonary pressure.
/// Logarithmic kind: (1/K_l) ln((P - B_l)/A_l). Sigmoid kind: A_l/(1 + e^{-B_l (P - D_l)}).
double lung_volume(const ArchetypeParams& p, double operand);

/// Collapsible-airway volume [L]; smooth in the transmural pressure P_t.
double collapsible_volume(const ArchetypeParams& p, double P_t);

/// Collapsible-airway resistance [cmH2O*s/L]. Equals K_c (V_cmax / V_c)^2.
double collapsible_resistance(const ArchetypeParams& p, double P_t);

/// Small-airway resistance [cmH2O*s/L] as a function of lung volume.
double small_airway_resistance(const ArchetypeParams& p, double V_l);

/// Upper-airway Rohrer resistance [cmH2O*s/L]; even in flow.
double upper_airway_resistance(const ArchetypeParams& p, double flow);

enum class Curve { ChestWall, Lung, Collapsible };

std::string_view to_string(Curve c);

/// Open volume interval on which a curve is invertible.
struct VolumeRange {
    double lo;
    double hi;
    bool contains(double v) const { return v > lo && v < hi; }
};

VolumeRange volume_range(Curve curve, const ArchetypeParams& p);

/// Operand pressure that produces volume V on the given curve. Closed form
/// for all three curves. Throws RangeError outside volume_range().
double invert_compliance(Curve curve, const ArchetypeParams& p, double V);

/// Derivative dV/dP of a curve at a given operand pressure (compliance).
double compliance(Curve curve, const ArchetypeParams& p, double operand);

} // namespace ventsim
