#include "vsrfdx/sim.hpp"

#include "vsrfdx/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace vsrfdx::sim {

namespace {

constexpr double kTwoPi = 2.0 * kPi;
constexpr double kPhaseShift = kTwoPi / 3.0;
// Reference magnitudes below this count as a zero crossing.
constexpr double kZeroReference = 1e-12;

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw Error(ErrorKind::Config, std::string(name) + " must be strictly positive");
    }
}

// Per-leg conduction options for one sub-interval.
struct LegPaths {
    double v_pos;   // pole voltage if current is (or becomes) positive
    double v_neg;   // pole voltage if current is (or becomes) negative
    bool stiff() const { return v_pos == v_neg; }
};

enum class LegMode { Open, Pos, Neg };

struct LegSolution {
    std::array<LegMode, 3> mode{};
    std::array<double, 3> v{};
    double v_n = 0.0;
    int conducting = 0;
};

// Neutral-point voltage of the grid star point relative to the negative rail,
// from the conducting legs only (the open ones carry no current).
double neutral_voltage(const LegSolution& s, const Abc& e) {
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) {
        if (s.mode[k] != LegMode::Open) acc += s.v[k] - e[k];
    }
    return acc / s.conducting;
}

// Resolves which legs conduct given the current signs. Legs carrying current
// keep their path; zero-current diode-like legs are enumerated over
// {Pos, Neg, Open} and the first consistent assignment wins.
LegSolution solve_legs(const Abc& i, const std::array<LegPaths, 3>& paths, const Abc& e,
                       double u_dc) {
    LegSolution base;
    std::array<int, 3> free_legs{};
    int n_free = 0;
    for (int k = 0; k < 3; ++k) {
        if (i[k] > 0.0) {
            base.mode[k] = LegMode::Pos;
            base.v[k] = paths[k].v_pos;
        } else if (i[k] < 0.0) {
            base.mode[k] = LegMode::Neg;
            base.v[k] = paths[k].v_neg;
        } else if (paths[k].stiff()) {
            base.mode[k] = LegMode::Pos;
            base.v[k] = paths[k].v_pos;
        } else {
            base.mode[k] = LegMode::Open;
            free_legs[n_free++] = k;
        }
    }

    int combos = 1;
    for (int n = 0; n < n_free; ++n) combos *= 3;

    LegSolution fallback;
    bool have_fallback = false;
    for (int c = 0; c < combos; ++c) {
        LegSolution s = base;
        int code = c;
        for (int n = 0; n < n_free; ++n) {
            int k = free_legs[n];
            switch (code % 3) {
            case 0: s.mode[k] = LegMode::Pos; s.v[k] = paths[k].v_pos; break;
            case 1: s.mode[k] = LegMode::Neg; s.v[k] = paths[k].v_neg; break;
            default: s.mode[k] = LegMode::Open; break;
            }
            code /= 3;
        }
        s.conducting = 0;
        for (auto m : s.mode) s.conducting += (m != LegMode::Open) ? 1 : 0;
        if (s.conducting == 1) continue;
        if (s.conducting == 0) {
            if (!have_fallback) {
                fallback = s;
                have_fallback = true;
            }
            continue;
        }
        s.v_n = neutral_voltage(s, e);

        bool ok = true;
        for (int n = 0; n < n_free && ok; ++n) {
            int k = free_legs[n];
            double drive = e[k] + s.v_n;
            switch (s.mode[k]) {
            case LegMode::Pos: ok = drive - paths[k].v_pos > 0.0; break;
            case LegMode::Neg: ok = drive - paths[k].v_neg < 0.0; break;
            case LegMode::Open: ok = drive <= u_dc && drive >= 0.0; break;
            }
        }
        if (ok) return s;
    }
    if (have_fallback) return fallback;
    // Numerically marginal: nothing consistent; hold the free legs open and
    // keep the rest conducting if that is a valid configuration.
    base.conducting = 0;
    for (auto m : base.mode) base.conducting += (m != LegMode::Open) ? 1 : 0;
    if (base.conducting >= 2) {
        base.v_n = neutral_voltage(base, e);
    } else {
        base.mode = {LegMode::Open, LegMode::Open, LegMode::Open};
        base.conducting = 0;
    }
    return base;
}

struct Electrical {
    Abc i;
    double u_dc;
};

// Forward-Euler over one sub-interval of constant gate pattern.
void integrate(Electrical& x, SwitchSet permissions, const Abc& e, double h,
               const SimParams& p) {
    std::array<LegPaths, 3> paths{};
    for (int k = 0; k < 3; ++k) {
        bool upper = permissions.contains(upper_switch(k));
        bool lower = permissions.contains(lower_switch(k));
        paths[k].v_pos = lower ? 0.0 : x.u_dc;
        paths[k].v_neg = upper ? x.u_dc : 0.0;
    }

    LegSolution s = solve_legs(x.i, paths, e, x.u_dc);

    Abc i_next = x.i;
    double i_dc = 0.0;
    if (s.conducting >= 2) {
        for (int k = 0; k < 3; ++k) {
            if (s.mode[k] == LegMode::Open) continue;
            i_next[k] = x.i[k] + h / p.filter_inductance * (e[k] - s.v[k] + s.v_n);
            if (s.v[k] == x.u_dc && x.u_dc > 0.0) i_dc += x.i[k];
        }
    }

    // Open-leg clamp: a diode-like leg whose current crosses zero stops there.
    std::array<bool, 3> free{};
    int n_free = 0;
    for (int k = 0; k < 3; ++k) {
        if (s.mode[k] == LegMode::Open) {
            i_next[k] = 0.0;
            continue;
        }
        bool crossed = (s.mode[k] == LegMode::Pos && i_next[k] < 0.0) ||
                       (s.mode[k] == LegMode::Neg && i_next[k] > 0.0);
        if (crossed && !paths[k].stiff()) {
            i_next[k] = 0.0;
        } else {
            free[k] = true;
            ++n_free;
        }
    }
    // Project back onto i_a + i_b + i_c = 0.
    if (n_free > 0) {
        double residual = i_next[0] + i_next[1] + i_next[2];
        for (int k = 0; k < 3; ++k) {
            if (free[k]) i_next[k] -= residual / n_free;
        }
    }

    double u_next = x.u_dc + h / p.dc_capacitance * (i_dc - x.u_dc / p.load_resistance);
    x.i = i_next;
    x.u_dc = std::max(u_next, 0.0);
}

// Transposed direct-form II biquad, Tustin-discretized with prewarping at the
// grid frequency: H(s) = kr * 2*wc*s / (s^2 + 2*wc*s + w0^2).
double resonant_update(ResonantState& z, double input, const SimParams& p) {
    double w0 = kTwoPi * p.grid_freq;
    double ts = 1.0 / p.control_freq;
    double k = w0 / std::tan(w0 * ts / 2.0);
    double wc = p.gains.resonant_bw;
    double a0 = k * k + 2.0 * wc * k + w0 * w0;
    double b0 = p.gains.kr_i * 2.0 * wc * k / a0;
    double b2 = -b0;
    double a1 = 2.0 * (w0 * w0 - k * k) / a0;
    double a2 = (k * k - 2.0 * wc * k + w0 * w0) / a0;

    double y = b0 * input + z.z1;
    z.z1 = -a1 * y + z.z2;
    z.z2 = b2 * input - a2 * y;
    return y;
}

} // namespace

void SimParams::validate() const {
    require_positive(grid_voltage, "grid_voltage");
    require_positive(grid_freq, "grid_freq");
    require_positive(filter_inductance, "filter_inductance");
    require_positive(dc_capacitance, "dc_capacitance");
    require_positive(load_resistance, "load_resistance");
    require_positive(vdc_ref, "vdc_ref");
    require_positive(switching_freq, "switching_freq");
    require_positive(control_freq, "control_freq");
    require_positive(sim_step, "sim_step");
    if (std::abs(control_freq - 2.0 * switching_freq) > 1e-9 * control_freq) {
        throw Error(ErrorKind::Config, "control_freq must equal 2 x switching_freq");
    }
    double ratio = 1.0 / (control_freq * sim_step);
    if (ratio < 1.0 || std::abs(ratio - std::round(ratio)) > 1e-6) {
        throw Error(ErrorKind::Config, "sim_step must divide the control period evenly");
    }
    require_positive(gains.i_max, "i_max");
}

double SimParams::phase_amplitude() const { return grid_voltage * std::sqrt(2.0 / 3.0); }

int SimParams::steps_per_control() const {
    return static_cast<int>(std::lround(1.0 / (control_freq * sim_step)));
}

void FaultScenario::validate() const {
    SwitchSet seen;
    for (const auto& f : faults) {
        if (seen.contains(f.sw)) {
            throw Error(ErrorKind::Config,
                        "duplicate fault entry for " + std::string(switch_name(f.sw)));
        }
        seen.insert(f.sw);
        if (!std::isfinite(f.onset)) throw Error(ErrorKind::Config, "fault onset must be finite");
        if (f.clear && !(f.onset < *f.clear)) {
            throw Error(ErrorKind::Config, "fault clear time must be after onset");
        }
    }
}

SwitchSet FaultScenario::switches() const {
    SwitchSet set;
    for (const auto& f : faults) set.insert(f.sw);
    return set;
}

SwitchSet FaultScenario::active_at(double t) const {
    SwitchSet set;
    for (const auto& f : faults) {
        if (f.active_at(t)) set.insert(f.sw);
    }
    return set;
}

double FaultScenario::first_onset() const {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& f : faults) t = std::min(t, f.onset);
    return t;
}

double grid_angle(double t, const SimParams& params) {
    double a = std::fmod(kTwoPi * params.grid_freq * t, kTwoPi);
    return a < 0.0 ? a + kTwoPi : a;
}

Abc grid_emf(double t, const SimParams& params) {
    double amp = params.phase_amplitude();
    double theta = kTwoPi * params.grid_freq * t;
    return {amp * std::sin(theta), amp * std::sin(theta - kPhaseShift),
            amp * std::sin(theta + kPhaseShift)};
}

double leg_pole_voltage(bool upper_cmd, bool fault_upper, bool fault_lower, double phase_current,
                        double u_dc) {
    if (phase_current >= 0.0) {
        // Lower IGBT or upper diode D1.
        bool lower_conducts = !upper_cmd && !fault_lower;
        return lower_conducts ? 0.0 : u_dc;
    }
    // Upper IGBT or lower diode D2.
    bool upper_conducts = upper_cmd && !fault_upper;
    return upper_conducts ? u_dc : 0.0;
}

ControlOutput pr_controller(const SimState& state, const SimParams& params) {
    const auto& g = params.gains;
    double ts = 1.0 / params.control_freq;
    ControlOutput out;
    out.next = state.ctrl;

    double err_v = params.vdc_ref - state.u_dc;
    double integral = state.ctrl.v_integral + g.ki_v * err_v * ts;
    double amp = g.kp_v * err_v + integral;
    if (amp > g.i_max) {
        amp = g.i_max;
    } else if (amp < 0.0) {
        amp = 0.0;
    } else {
        out.next.v_integral = integral;  // conditional integration as anti-windup
    }
    out.next.amp_ref = amp;

    double theta = kTwoPi * params.grid_freq * state.t;
    Abc e = grid_emf(state.t, params);
    double half_dc = std::max(state.u_dc, 1.0) / 2.0;
    for (int k = 0; k < 3; ++k) {
        double ref = amp * std::sin(theta - k * kPhaseShift);
        double err = ref - state.i_abc[k];
        double r = resonant_update(out.next.resonant[k], err, params);
        double v = e[k] - (g.kp_i * err + r);
        out.modulation[k] = std::clamp(v / half_dc, -1.0, 1.0);
    }
    out.next.modulation = out.modulation;
    return out;
}

double carrier_value(double carrier_phase) { return std::abs(4.0 * carrier_phase - 2.0) - 1.0; }

GateCommand pwm_compare(const Abc& modulation, double carrier_phase) {
    GateCommand cmd;
    double tri = carrier_value(carrier_phase);
    for (int k = 0; k < 3; ++k) {
        // -1 is full saturation: the valley touch at phase 0.5 does not turn it on.
        cmd.upper_on[k] = modulation[k] > -1.0 && modulation[k] >= tri;
    }
    return cmd;
}

SwitchSet apply_faults(const GateCommand& cmd, const FaultScenario& scenario, double t) {
    SwitchSet perm;
    for (int k = 0; k < 3; ++k) {
        perm.insert(cmd.upper_on[k] ? upper_switch(k) : lower_switch(k));
    }
    SwitchSet blocked = scenario.active_at(t);
    return SwitchSet::from_mask(perm.mask() & static_cast<std::uint8_t>(~blocked.mask()));
}

SimState initial_state(const SimParams& params, int carrier_offset) {
    SimState s;
    s.u_dc = params.initial_udc >= 0.0 ? params.initial_udc
                                        : params.grid_voltage * std::sqrt(2.0);
    int spc = params.steps_per_carrier();
    s.carrier_offset = ((carrier_offset % spc) + spc) % spc;
    s.carrier_phase = static_cast<double>(s.carrier_offset) / spc;
    return s;
}

SimState step(const SimState& state, const SimParams& params, const FaultScenario& scenario,
              StepInfo* info) {
    const int half = params.steps_per_control();
    const int spc = 2 * half;
    const std::int64_t ctick = state.tick + state.carrier_offset;

    SimState next = state;
    bool control = ctick % half == 0;
    if (control) {
        ControlOutput c = pr_controller(state, params);
        next.ctrl = c.next;
    }
    const Abc& m = next.ctrl.modulation;

    // The carrier is linear within a step (peaks and valleys fall on step
    // boundaries), so each comparator toggles at most once; split the step at
    // those instants.
    int pos = static_cast<int>(ctick % spc);
    double phase0 = static_cast<double>(pos) / spc;
    double phase1 = static_cast<double>(pos + 1) / spc;
    double c0 = carrier_value(phase0);
    double c1 = carrier_value(phase1);

    std::array<double, 5> cuts{0.0, 1.0, 1.0, 1.0, 1.0};
    int n_cuts = 1;
    for (int k = 0; k < 3; ++k) {
        if (c1 == c0) continue;
        double f = (m[k] - c0) / (c1 - c0);
        if (f > 0.0 && f < 1.0) cuts[n_cuts++] = f;
    }
    cuts[n_cuts++] = 1.0;
    std::sort(cuts.begin(), cuts.begin() + n_cuts);

    const double h = params.sim_step;
    const Abc e = grid_emf(state.t + 0.5 * h, params);
    Electrical x{state.i_abc, state.u_dc};
    SwitchSet first_perm;
    for (int j = 0; j + 1 < n_cuts; ++j) {
        double f0 = cuts[j];
        double f1 = cuts[j + 1];
        if (f1 <= f0) continue;
        double fm = 0.5 * (f0 + f1);
        double phase = phase0 + fm * (phase1 - phase0);
        GateCommand cmd = pwm_compare(m, phase);
        SwitchSet perm = apply_faults(cmd, scenario, state.t + f0 * h);
        if (j == 0) first_perm = perm;
        integrate(x, perm, e, (f1 - f0) * h, params);
    }

    for (double v : x.i) {
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "phase current diverged");
    }
    if (!std::isfinite(x.u_dc)) throw Error(ErrorKind::NonFinite, "DC-link voltage diverged");

    next.i_abc = x.i;
    next.u_dc = x.u_dc;
    next.tick = state.tick + 1;
    next.t = static_cast<double>(next.tick) * h;
    next.carrier_phase = static_cast<double>((next.tick + next.carrier_offset) % spc) / spc;

    if (info) {
        info->control_instant = control;
        info->permissions = first_perm;
    }
    return next;
}

FaultScenario effective_scenario(const FaultScenario& scenario, const SimParams& params,
                                 std::uint64_t seed, const SimOptions& options) {
    (void)params;
    FaultScenario eff = scenario;
    if (!options.randomize) return eff;
    std::mt19937_64 rng(seed);
    rng();  // first draw is the carrier offset
    for (auto& f : eff.faults) {
        double jitter = uniform01(rng) * options.onset_jitter;
        f.onset += jitter;
        if (f.clear) *f.clear += jitter;
    }
    return eff;
}

Trace simulate(const FaultScenario& scenario, double duration, const SimParams& params,
               std::uint64_t seed, const SimOptions& options) {
    params.validate();
    scenario.validate();
    if (!(duration > 0.0)) throw Error(ErrorKind::Config, "duration must be positive");

    int offset = 0;
    if (options.randomize) {
        std::mt19937_64 rng(seed);
        offset = static_cast<int>(rng() % static_cast<std::uint64_t>(params.steps_per_carrier()));
    }
    FaultScenario eff = effective_scenario(scenario, params, seed, options);

    Trace trace;
    trace.sample_rate = params.control_freq;
    const auto n_steps = static_cast<std::int64_t>(std::llround(duration / params.sim_step));
    trace.records.reserve(static_cast<std::size_t>(duration * params.control_freq) + 2);

    SimState state = initial_state(params, offset);
    for (std::int64_t n = 0; n < n_steps; ++n) {
        StepInfo info;
        SimState next = step(state, params, eff, &info);
        if (info.control_instant) {
            trace.records.push_back(
                {state.t, state.i_abc, state.u_dc, grid_angle(state.t, params), info.permissions});
        }
        state = next;
    }
    return trace;
}

SwitchSet observable_switches(double reference_angle) {
    SwitchSet set;
    for (int k = 0; k < 3; ++k) {
        double ref = std::sin(reference_angle - k * kPhaseShift);
        if (ref < -kZeroReference) {
            set.insert(upper_switch(k));
        } else if (ref > kZeroReference) {
            set.insert(lower_switch(k));
        }
    }
    return set;
}

} // namespace vsrfdx::sim
