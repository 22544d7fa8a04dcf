#pragma once

namespace ventsim {

/// Shape of one inspiratory muscle effort: a trapezoid with separate rise and
/// fall slopes whose corners are rounded so the waveform is C1.
struct EffortShape {
    double amplitude = 8.0;       // cmH2O, applied as a negative pressure
    double rise_time = 0.45;      // s
    double plateau_time = 0.25;   // s
    double fall_time = 0.35;      // s
    double corner_smoothing = 0.05; // s, blend width at each corner

    double duration() const { return rise_time + plateau_time + fall_time; }

    /// Throws ValidationError unless all durations are positive and the
    /// smoothing fits inside half of each ramp.
    void validate() const;
};

/// Muscle pressure [cmH2O] at time t after effort onset. Zero outside
/// [0, duration], exactly -amplitude on the plateau.
double pmus_waveform(const EffortShape& shape, double t_since_onset);

/// d(pmus)/dt at time t after onset.
double pmus_slope(const EffortShape& shape, double t_since_onset);

/// Cardiogenic oscillation added to the muscle pressure: a sin(2 pi HR/60 t).
double cardiac_oscillation(double amplitude, double heart_rate, double t);

} // namespace ventsim
