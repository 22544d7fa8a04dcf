#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace ventsim {

/// Breath class shared by plans (as intent) and labels (as outcome).
enum class AsynchronyClass {
    Normal,
    EarlyCycling,
    LateCycling,
    DelayedInspiration,
    IneffectiveEffort,
    DelayedLate,  // DI+LC
    DelayedEarly, // DI+EC
};

inline constexpr std::size_t kAsynchronyClassCount = 7;

inline constexpr std::array<AsynchronyClass, kAsynchronyClassCount> kAllClasses{
    AsynchronyClass::Normal,          AsynchronyClass::EarlyCycling,
    AsynchronyClass::LateCycling,     AsynchronyClass::DelayedInspiration,
    AsynchronyClass::IneffectiveEffort, AsynchronyClass::DelayedLate,
    AsynchronyClass::DelayedEarly,
};

constexpr std::size_t index_of(AsynchronyClass c) { return static_cast<std::size_t>(c); }

constexpr std::string_view to_string(AsynchronyClass c)
{
    switch (c) {
    case AsynchronyClass::Normal: return "Normal";
    case AsynchronyClass::EarlyCycling: return "EC";
    case AsynchronyClass::LateCycling: return "LC";
    case AsynchronyClass::DelayedInspiration: return "DI";
    case AsynchronyClass::IneffectiveEffort: return "IE";
    case AsynchronyClass::DelayedLate: return "DI+LC";
    case AsynchronyClass::DelayedEarly: return "DI+EC";
    }
    return "?";
}

/// Accepts the short codes above plus a few long spellings used in configs.
std::optional<AsynchronyClass> parse_asynchrony_class(std::string_view s);

} // namespace ventsim
