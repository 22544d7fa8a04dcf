#include "ventsim/solver/integrator.hpp"

#include "ventsim/error.hpp"
#include "ventsim/model/element_laws.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <sstream>

namespace ventsim {

namespace {

using Matrix = Eigen::Matrix<double, kStateSize, kStateSize>;

const double kGamma = 2.0 - std::sqrt(2.0);
const double kD = kGamma / 2.0;
// BDF2 weights on the stage value and on y_n
const double kW1 = 1.0 / (kGamma * (2.0 - kGamma));
const double kW0 = -(1.0 - kGamma) * (1.0 - kGamma) / (kGamma * (2.0 - kGamma));

std::optional<StateVector> eval_rhs(const CircuitModel& m, const CircuitInputs& in,
                                    const StateVector& y)
{
    try {
        StateVector f = circuit_rhs(m, in, y);
        if (!f.allFinite()) return std::nullopt;
        return f;
    } catch (const DomainError&) {
        return std::nullopt;
    } catch (const RangeError&) {
        return std::nullopt;
    }
}

// Open ranges of the three volume states (V_l, V_c, V_cw).
struct Bounds {
    VolumeRange v[3];

    explicit Bounds(const ArchetypeParams& p)
        : v{volume_range(Curve::Lung, p), volume_range(Curve::Collapsible, p),
            volume_range(Curve::ChestWall, p)}
    {
    }

    double distance(const StateVector& y, int j) const
    {
        if (j >= 3) return std::numeric_limits<double>::infinity();
        return std::min(y[j] - v[j].lo, v[j].hi - y[j]);
    }

    // Largest step fraction that keeps every volume inside its range, leaving
    // a tenth of the remaining distance to the boundary.
    double max_fraction(const StateVector& y, const StateVector& d) const
    {
        double lambda = 1.0;
        for (int j = 0; j < 3; ++j) {
            if (d[j] > 0 && std::isfinite(v[j].hi)) {
                lambda = std::min(lambda, 0.9 * (v[j].hi - y[j]) / d[j]);
            } else if (d[j] < 0 && std::isfinite(v[j].lo)) {
                lambda = std::min(lambda, 0.9 * (v[j].lo - y[j]) / d[j]);
            }
        }
        return lambda;
    }
};

std::optional<Matrix> fd_jacobian(const CircuitModel& m, const CircuitInputs& in,
                                  const StateVector& y, const StateVector& f0, const Bounds& bounds)
{
    Matrix J;
    for (int j = 0; j < kStateSize; ++j) {
        const double delta =
            std::min(1e-7 * std::max(1.0, std::abs(y[j])), 1e-3 * bounds.distance(y, j));
        StateVector yp = y;
        yp[j] += delta;
        auto fp = eval_rhs(m, in, yp);
        double signed_delta = delta;
        if (!fp) {
            yp[j] = y[j] - delta;
            fp = eval_rhs(m, in, yp);
            signed_delta = -delta;
            if (!fp) return std::nullopt;
        }
        J.col(j) = (*fp - f0) / signed_delta;
    }
    return J;
}

struct StageSolver {
    const CircuitModel& m;
    const SolverConfig& cfg;
    StepStats* stats;
    double dh;
    Bounds bounds;
    Eigen::PartialPivLU<Matrix> lu{};

    bool factor(const CircuitInputs& in, const StateVector& y, const StateVector& f)
    {
        const auto J = fd_jacobian(m, in, y, f, bounds);
        if (!J) return false;
        lu.compute(Matrix::Identity() - dh * *J);
        if (stats) ++stats->jacobians;
        return true;
    }

    // Solves z - dh f(z) = rhs starting from z. The Jacobian is refreshed at
    // the current iterate once if the iteration stalls.
    bool solve(const CircuitInputs& in, StateVector& z, const StateVector& rhs)
    {
        auto fz = eval_rhs(m, in, z);
        if (!fz) return false;
        StateVector g = z - dh * *fz - rhs;
        double norm = g.lpNorm<Eigen::Infinity>();
        bool refreshed = false;
        for (int it = 0; it < cfg.max_newton_iters; ++it) {
            if (norm < cfg.newton_tol) return true;
            if (stats) ++stats->newton_iterations;
            const StateVector delta = -lu.solve(g);
            double lambda = bounds.max_fraction(z, delta);
            bool improved = false;
            for (int k = 0; k < 10; ++k, lambda *= 0.5) {
                const StateVector trial = z + lambda * delta;
                const auto ft = eval_rhs(m, in, trial);
                if (!ft) continue;
                const StateVector gt = trial - dh * *ft - rhs;
                const double nt = gt.lpNorm<Eigen::Infinity>();
                if (nt < norm || nt < cfg.newton_tol) {
                    z = trial;
                    fz = ft;
                    g = gt;
                    norm = nt;
                    improved = true;
                    break;
                }
            }
            if (!improved) {
                if (refreshed || !factor(in, z, *fz)) return false;
                refreshed = true;
            }
        }
        return norm < cfg.newton_tol;
    }
};

} // namespace

void SolverConfig::validate() const
{
    if (!(min_step > 0) || !(max_step > min_step)) {
        throw ValidationError("solver: require 0 < min_step < max_step");
    }
    if (!(newton_tol > 0) || max_newton_iters < 1) {
        throw ValidationError("solver: newton_tol must be positive and max_newton_iters >= 1");
    }
    if (!(output_rate >= 50)) throw ValidationError("solver: output_rate must be >= 50 Hz");
    if (!(event_localization_tol > 0)) {
        throw ValidationError("solver: event_localization_tol must be positive");
    }
}

Json to_json(const SolverConfig& c)
{
    return Json{
        {"max_step", c.max_step},
        {"min_step", c.min_step},
        {"newton_tol", c.newton_tol},
        {"max_newton_iters", c.max_newton_iters},
        {"output_rate", c.output_rate},
        {"event_localization_tol", c.event_localization_tol},
    };
}

SolverConfig merge_solver_config(const SolverConfig& base, const Json& j)
{
    if (!j.is_object()) throw ConfigError("solver config must be an object");
    SolverConfig c = base;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw ConfigError("solver." + key + " must be a number");
        if (key == "max_step") c.max_step = value.get<double>();
        else if (key == "min_step") c.min_step = value.get<double>();
        else if (key == "newton_tol") c.newton_tol = value.get<double>();
        else if (key == "max_newton_iters") c.max_newton_iters = value.get<int>();
        else if (key == "output_rate") c.output_rate = value.get<double>();
        else if (key == "event_localization_tol") c.event_localization_tol = value.get<double>();
        else throw ConfigError("unknown solver key '" + key + "'");
    }
    return c;
}

std::optional<StateVector> try_step(const CircuitModel& m, const InputFunction& inputs, double t,
                                    const StateVector& y, double h, const SolverConfig& cfg,
                                    StepStats* stats)
{
    const CircuitInputs in0 = inputs(t);
    const auto f0 = eval_rhs(m, in0, y);
    if (!f0) return std::nullopt;

    StageSolver solver{m, cfg, stats, kD * h, Bounds(m.patient)};
    if (!solver.factor(in0, y, *f0)) return std::nullopt;

    // trapezoidal stage to t + gamma h
    StateVector z = y;
    const StateVector rhs1 = y + kD * h * *f0;
    if (!solver.solve(inputs(t + kGamma * h), z, rhs1)) return std::nullopt;

    // BDF2 stage to t + h
    const StateVector rhs2 = kW0 * y + kW1 * z;
    StateVector y1 = z;
    if (!solver.solve(inputs(t + h), y1, rhs2)) return std::nullopt;
    if (stats) ++stats->steps;
    return y1;
}

StateVector step(const CircuitModel& m, const InputFunction& inputs, double t, const StateVector& y,
                 double h, const SolverConfig& cfg, StepStats* stats)
{
    const double t_end = t + h;
    StateVector cur = y;
    double tc = t;
    double trial = h;
    while (t_end - tc > 1e-15) {
        trial = std::min(trial, t_end - tc);
        const bool last = trial >= t_end - tc;
        if (auto next = try_step(m, inputs, tc, cur, trial, cfg, stats)) {
            cur = *next;
            tc = last ? t_end : tc + trial;
            trial = std::min(2.0 * trial, h);
            continue;
        }
        if (stats) ++stats->rejected;
        if (trial <= cfg.min_step * (1.0 + 1e-9)) {
            std::ostringstream os;
            os.precision(10);
            os << "Newton iteration failed at t=" << tc << " s with step " << trial
               << " s; state [V_l V_c V_cw Q_ve Q_ti Q_te I_i I_e] = [" << cur.transpose() << "]";
            throw SolverError(os.str());
        }
        trial = std::max(0.5 * trial, cfg.min_step);
    }
    return cur;
}

} // namespace ventsim
