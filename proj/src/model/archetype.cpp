#include "ventsim/model/archetype.hpp"

#include "ventsim/error.hpp"

#include <array>
#include <cmath>
#include <string>

namespace ventsim {

namespace {

constexpr ArchetypeParams make(ArchetypeId id, double RV, double TLC, double A_cw, double B_cw,
                               double A_l, double B_l, double D_l, double K_l, double A_s,
                               double B_s, double K_s, double V_star, double V_cmax, double A_c,
                               double B_c, double D_c, double K_c, double A_u, double K_u,
                               double R_ve, double C_ve, LungCurveKind kind)
{
    ArchetypeParams p;
    p.id = id;
    p.RV = RV;
    p.TLC = TLC;
    p.A_cw = A_cw;
    p.B_cw = B_cw;
    p.A_l = A_l;
    p.B_l = B_l;
    p.D_l = D_l;
    p.K_l = K_l;
    p.A_s = A_s;
    p.B_s = B_s;
    p.K_s = K_s;
    p.V_star = V_star;
    p.V_cmax = V_cmax;
    p.A_c = A_c;
    p.B_c = B_c;
    p.D_c = D_c;
    p.K_c = K_c;
    p.A_u = A_u;
    p.K_u = K_u;
    p.R_ve = R_ve;
    p.C_ve = C_ve;
    p.lung_curve_kind = kind;
    return p;
}

constexpr auto Log = LungCurveKind::Logarithmic;
constexpr auto Sig = LungCurveKind::Sigmoid;
using A = ArchetypeId;

// clang-format off
//                      RV    TLC   Acw   Bcw   Al   Bl    Dl    Kl   As    Bs    Ks     V*   Vcmax Ac     Bc     Dc     Kc    Au    Ku    Rve   Cve
constexpr std::array<ArchetypeParams, 9> kCatalog{
    make(A::Healthy,  1.24, 5.19, 1.4, -3.5, 0.2, -0.5, 0.0,  1.0, 2.2,  0.02, -10.9, 5.3, 0.1,  0.341, 9.692, 0.411, 0.21, 0.34, 0.46, 1.0,  0.5,  Log),
    make(A::Obese1,   0.25, 4.0,  8.0, -5.0, 3.0, 0.2,  10.0, 0.0, 4.0,  0.5,  -5.0,  4.0, 0.07, 0.4,   9.0,   0.411, 0.5,  2.0,  8.0,  18.0, 0.2,  Sig),
    make(A::Obese2,   0.25, 4.0,  8.0, -5.0, 3.0, 0.15, 14.4, 0.0, 7.0,  1.5,  -5.0,  3.5, 0.06, 0.55,  10.0,  0.411, 1.5,  2.0,  8.0,  18.0, 0.2,  Sig),
    make(A::ARDS1,    1.24, 5.19, 1.4, -3.5, 3.7, 0.15, 10.0, 0.0, 3.0,  1.0,  -4.0,  4.5, 0.07, 0.6,   10.0,  0.411, 1.0,  0.34, 0.46, 3.0,  0.2,  Sig),
    make(A::ARDS2,    1.24, 5.19, 1.4, -3.5, 3.0, 0.15, 14.4, 0.0, 7.0,  1.5,  -5.0,  3.5, 0.06, 0.55,  17.0,  0.411, 1.5,  0.34, 0.46, 3.0,  0.2,  Sig),
    make(A::ARDS3,    1.24, 5.19, 1.4, -3.5, 2.3, 0.15, 20.0, 0.0, 18.0, 2.0,  -14.0, 3.0, 0.05, 0.77,  27.0,  0.411, 2.4,  0.34, 0.46, 3.0,  0.2,  Sig),
    make(A::COPD1,    3.0,  7.0,  3.0, -5.0, 6.9, 0.5,  2.3,  0.0, 2.2,  1.5,  -20.0, 5.3, 0.05, 1.5,   6.2,   0.411, 2.0,  0.34, 0.46, 3.0,  0.2,  Sig),
    make(A::COPD2,    3.0,  7.0,  3.0, -5.0, 6.9, 0.5,  2.3,  0.0, 7.0,  3.0,  -2.5,  6.0, 0.05, 1.2,   7.0,   0.411, 0.6,  0.34, 2.5,  1.0,  0.5,  Sig),
    make(A::Fibrosis, 1.1,  3.4,  1.4, -3.0, 3.4, 0.06, 7.0,  0.0, 2.0,  0.5,  -10.9, 3.4, 0.1,  0.341, 7.0,   0.411, 0.5,  0.34, 0.46, 2.0,  0.05, Sig),
};
// clang-format on

constexpr std::array<std::string_view, 9> kNames{
    "Healthy", "Obese1", "Obese2", "ARDS1", "ARDS2", "ARDS3", "COPD1", "COPD2", "Fibrosis"};

bool finite_all(const ArchetypeParams& p)
{
    for (double v : {p.RV, p.TLC, p.A_cw, p.B_cw, p.A_l, p.B_l, p.D_l, p.K_l, p.A_s, p.B_s, p.K_s,
                     p.V_star, p.V_cmax, p.A_c, p.B_c, p.D_c, p.K_c, p.A_u, p.K_u, p.R_ve, p.C_ve}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace

std::string_view to_string(ArchetypeId id) { return kNames[static_cast<std::size_t>(id)]; }

std::optional<ArchetypeId> parse_archetype(std::string_view name)
{
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (kNames[i] == name) return static_cast<ArchetypeId>(i);
    }
    return std::nullopt;
}

std::string_view to_string(LungCurveKind kind)
{
    return kind == LungCurveKind::Logarithmic ? "logarithmic" : "sigmoid";
}

void ArchetypeParams::validate() const
{
    auto fail = [this](const std::string& what) {
        throw ValidationError("archetype " + std::string(name()) + ": " + what);
    };
    if (!finite_all(*this)) fail("non-finite parameter");
    if (!(RV > 0)) fail("RV must be positive");
    if (!(TLC > RV)) fail("TLC must exceed RV");
    if (!(V_cmax > 0)) fail("V_cmax must be positive");
    if (!(C_ve > 0)) fail("C_ve must be positive");
    if (!(R_ve > 0)) fail("R_ve must be positive");
    if (B_cw == 0) fail("B_cw must be non-zero");
    if (A_c == 0 || D_c <= 0) fail("collapsible curve needs A_c != 0 and D_c > 0");
    if (V_star == RV) fail("V_star must differ from RV");
    if (lung_curve_kind == LungCurveKind::Sigmoid) {
        if (!(A_l > 0) || !(B_l > 0)) fail("sigmoid lung curve needs A_l > 0 and B_l > 0");
    } else {
        if (K_l == 0 || !(A_l > 0)) fail("logarithmic lung curve needs K_l != 0 and A_l > 0");
    }
}

std::span<const ArchetypeParams> archetype_catalog() { return kCatalog; }

const ArchetypeParams& archetype(ArchetypeId id) { return kCatalog[static_cast<std::size_t>(id)]; }

const ArchetypeParams& archetype(std::string_view name)
{
    auto id = parse_archetype(name);
    if (!id) throw NotFoundError("unknown archetype '" + std::string(name) + "'");
    return archetype(*id);
}

Json to_json(const ArchetypeParams& p)
{
    return Json{
        {"name", p.name()},   {"RV", p.RV},         {"TLC", p.TLC},       {"A_cw", p.A_cw},
        {"B_cw", p.B_cw},     {"A_l", p.A_l},       {"B_l", p.B_l},       {"D_l", p.D_l},
        {"K_l", p.K_l},       {"A_s", p.A_s},       {"B_s", p.B_s},       {"K_s", p.K_s},
        {"V_star", p.V_star}, {"V_cmax", p.V_cmax}, {"A_c", p.A_c},       {"B_c", p.B_c},
        {"D_c", p.D_c},       {"K_c", p.K_c},       {"A_u", p.A_u},       {"K_u", p.K_u},
        {"R_ve", p.R_ve},     {"C_ve", p.C_ve},     {"lung_curve_kind", to_string(p.lung_curve_kind)},
    };
}

ArchetypeParams archetype_from_json(const Json& j)
{
    const auto name = j.at("name").get<std::string>();
    auto id = parse_archetype(name);
    if (!id) throw NotFoundError("unknown archetype '" + name + "'");
    ArchetypeParams p = archetype(*id);
    auto get = [&j](const char* key, double& out) {
        if (j.contains(key)) out = j.at(key).get<double>();
    };
    get("RV", p.RV);
    get("TLC", p.TLC);
    get("A_cw", p.A_cw);
    get("B_cw", p.B_cw);
    get("A_l", p.A_l);
    get("B_l", p.B_l);
    get("D_l", p.D_l);
    get("K_l", p.K_l);
    get("A_s", p.A_s);
    get("B_s", p.B_s);
    get("K_s", p.K_s);
    get("V_star", p.V_star);
    get("V_cmax", p.V_cmax);
    get("A_c", p.A_c);
    get("B_c", p.B_c);
    get("D_c", p.D_c);
    get("K_c", p.K_c);
    get("A_u", p.A_u);
    get("K_u", p.K_u);
    get("R_ve", p.R_ve);
    get("C_ve", p.C_ve);
    if (j.contains("lung_curve_kind")) {
        const auto kind = j.at("lung_curve_kind").get<std::string>();
        if (kind == "logarithmic") p.lung_curve_kind = LungCurveKind::Logarithmic;
        else if (kind == "sigmoid") p.lung_curve_kind = LungCurveKind::Sigmoid;
        else throw ConfigError("unknown lung_curve_kind '" + kind + "'");
    }
    p.validate();
    return p;
}

Json catalog_json()
{
    Json arr = Json::array();
    for (const auto& p : kCatalog) arr.push_back(to_json(p));
    return Json{{"archetypes", arr}};
}

} // namespace ventsim
