#include "ventsim/datagen/calibrate.hpp"

#include "ventsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ventsim {

CalibrationRequest CalibrationRequest::from_record(const RecordSpec& r)
{
    CalibrationRequest q;
    q.archetype = r.archetype;
    q.settings = r.settings;
    q.tubing = r.tubing;
    q.solver = r.solver;
    q.effort = r.breathing.effort;
    q.target_tidal_volume = r.target_tidal_volume;
    q.tolerance = r.calibration_tolerance;
    return q;
}

std::string CalibrationRequest::key() const
{
    Json j{{"archetype", std::string(to_string(archetype))},
           {"settings", to_json(settings)},
           {"tubing", to_json(tubing)},
           {"solver", to_json(solver)},
           {"effort", Json::array({effort.amplitude, effort.rise_time, effort.plateau_time,
                                   effort.fall_time, effort.corner_smoothing})},
           {"target", target_tidal_volume},
           {"tolerance", tolerance}};
    return j.dump();
}

Json CalibrationResult::to_json() const
{
    return Json{{"p_insp", p_insp},
                {"median_tidal_volume", median_tidal_volume},
                {"iterations", iterations},
                {"evaluations", evaluations},
                {"vt_range", Json::array({vt_min, vt_max})}};
}

double calibration_tidal_volume(const CalibrationRequest& req, double p_insp)
{
    constexpr double rate = 15.0;
    constexpr int breaths = 5;
    SimulationInputs in;
    in.setup.patient = archetype(req.archetype);
    in.setup.settings = req.settings;
    in.setup.settings.p_insp = p_insp;
    in.setup.tubing = req.tubing;
    in.setup.solver = req.solver;
    in.setup.cardiac.amplitude = 0.0;
    BreathPlanOptions o;
    o.shape = req.effort;
    // onsets at 2, 6, ..., 18 s; the record ends one exhalation after the last
    in.breaths = build_breath_plan(rate, (breaths + 0.625) * 60.0 / rate, 0.0, 0, o);
    const Trajectory tr = simulate(in);
    std::vector<double> vt = tidal_volumes(tr);
    if (vt.empty()) throw CalibrationError("calibration run produced no breaths");
    std::sort(vt.begin(), vt.end());
    const std::size_t n = vt.size();
    return n % 2 ? vt[n / 2] : 0.5 * (vt[n / 2 - 1] + vt[n / 2]);
}

CalibrationResult calibrate_pinsp(const CalibrationRequest& req)
{
    const double peep = req.settings.peep;
    const double target = req.target_tidal_volume;
    const double tol = req.tolerance * target;
    CalibrationResult res;
    res.vt_min = INFINITY;
    res.vt_max = -INFINITY;

    auto context = [&] {
        std::ostringstream s;
        s << to_string(req.archetype) << " PEEP " << peep << " target VT " << target
          << " L; achieved median VT range [" << res.vt_min << ", " << res.vt_max << "] L";
        return s.str();
    };
    auto evaluate = [&](double p) {
        double vt;
        try {
            vt = calibration_tidal_volume(req, p);
        } catch (const SolverError& e) {
            throw CalibrationError("calibration run at P_insp " + std::to_string(p) + " failed (" +
                                   context() + "): " + e.what());
        }
        ++res.evaluations;
        res.vt_min = std::min(res.vt_min, vt);
        res.vt_max = std::max(res.vt_max, vt);
        res.p_insp = p;
        res.median_tidal_volume = vt;
        return vt;
    };

    double lo = peep;
    double hi = peep + kCalibrationSpan;
    const double start = req.settings.p_insp;
    if (start > lo && start <= hi) {
        const double vt = evaluate(start);
        if (std::abs(vt - target) <= tol) return res;
        (vt < target ? lo : hi) = start;
    }
    // The upper end is never simulated unless bisection converges onto it.
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        const double vt = evaluate(mid);
        ++res.iterations;
        if (std::abs(vt - target) <= tol) return res;
        (vt < target ? lo : hi) = mid;
    }
    throw CalibrationError("no P_insp in (" + std::to_string(peep) + ", " +
                           std::to_string(peep + kCalibrationSpan) + "] reaches the target (" +
                           context() + ")");
}

} // namespace ventsim
