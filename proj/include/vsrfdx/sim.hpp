#pragma once

// Fixed-step switched-circuit model of a three-phase two-level PWM boost
// rectifier (grid -> L filter -> IGBT bridge -> C || R) with PR current
// control and open-circuit fault injection.

#include "vsrfdx/switches.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace vsrfdx::sim {

inline constexpr double kPi = 3.14159265358979323846;

using Abc = std::array<double, 3>;

struct ControllerGains {
    double kp_v = 0.3;        // A/V
    double ki_v = 10.0;       // A/(V*s)
    double kp_i = 2.0;        // ohm
    double kr_i = 1.0;        // ohm, resonant gain at the grid frequency
    double resonant_bw = 5.0; // rad/s, damping of the resonant term
    double i_max = 60.0;      // A, clamp on the current-amplitude reference
};

struct SimParams {
    double grid_voltage = 40.0;        // line-to-line RMS
    double grid_freq = 50.0;
    double filter_inductance = 500e-6;
    double dc_capacitance = 7000e-6;
    double load_resistance = 16.0;
    double vdc_ref = 100.0;
    double switching_freq = 12.8e3;
    double control_freq = 25.6e3;
    double sim_step = 1.0 / 1.024e6;   // 40 steps per control period
    double initial_udc = -1.0;         // < 0: precharged to the line-to-line peak
    ControllerGains gains;

    // Throws Error(Config) if any invariant is violated.
    void validate() const;

    double phase_amplitude() const;    // peak phase EMF
    int steps_per_control() const;
    int steps_per_carrier() const { return 2 * steps_per_control(); }
};

struct FaultEntry {
    SwitchId sw;
    double onset;
    std::optional<double> clear;

    bool active_at(double t) const { return t >= onset && (!clear || t < *clear); }
};

struct FaultScenario {
    std::vector<FaultEntry> faults;

    void validate() const;
    SwitchSet switches() const;
    SwitchSet active_at(double t) const;
    // Earliest onset, or +inf when empty.
    double first_onset() const;
};

struct GateCommand {
    std::array<bool, 3> upper_on{};
};

// Discrete resonant filter state (transposed direct form II).
struct ResonantState {
    double z1 = 0.0;
    double z2 = 0.0;
};

struct ControllerState {
    double v_integral = 0.0;  // voltage-loop integrator (A)
    double amp_ref = 0.0;     // last current-amplitude reference (A)
    std::array<ResonantState, 3> resonant{};
    Abc modulation{};         // held between control instants
};

struct SimState {
    double t = 0.0;
    Abc i_abc{};
    double u_dc = 0.0;
    ControllerState ctrl;
    double carrier_phase = 0.0;   // [0,1), derived from `tick`
    std::int64_t tick = 0;        // steps since t = 0
    int carrier_offset = 0;       // steps; initial carrier phase = offset / steps_per_carrier
};

struct ControlOutput {
    Abc modulation{};
    ControllerState next;
};

// Grid EMF angle at time t, wrapped to [0, 2*pi).
double grid_angle(double t, const SimParams& params);
Abc grid_emf(double t, const SimParams& params);

// Pole voltage of one leg relative to the negative rail.
double leg_pole_voltage(bool upper_cmd, bool fault_upper, bool fault_lower, double phase_current,
                        double u_dc);

ControlOutput pr_controller(const SimState& state, const SimParams& params);

double carrier_value(double carrier_phase);
GateCommand pwm_compare(const Abc& modulation, double carrier_phase);

// Conduction permissions after fault blocking; lower switch mirrors !upper_on.
SwitchSet apply_faults(const GateCommand& cmd, const FaultScenario& scenario, double t);

SimState initial_state(const SimParams& params, int carrier_offset = 0);

struct StepInfo {
    bool control_instant = false;
    SwitchSet permissions;
};

// Advances one sim_step. Runs the controller first when the carrier is at a
// peak or valley. Throws Error(NonFinite) on blow-up.
SimState step(const SimState& state, const SimParams& params, const FaultScenario& scenario,
              StepInfo* info = nullptr);

struct TraceRecord {
    double t;
    Abc i_abc;
    double u_dc;
    double ref_angle;
    SwitchSet gates;
};

struct Trace {
    double sample_rate = 0.0;
    std::vector<TraceRecord> records;
};

struct SimOptions {
    bool randomize = false;
    double onset_jitter = 0.02;  // s; uniform extra delay per fault when randomized
};

Trace simulate(const FaultScenario& scenario, double duration, const SimParams& params,
               std::uint64_t seed, const SimOptions& options = {});

// Scenario actually simulated for a given seed (onset jitter applied).
FaultScenario effective_scenario(const FaultScenario& scenario, const SimParams& params,
                                 std::uint64_t seed, const SimOptions& options);

// Switches whose fault is visible at this reference angle: upper of phase k
// when the healthy reference current of phase k is negative, lower when positive.
SwitchSet observable_switches(double reference_angle);

} // namespace vsrfdx::sim
