// Two-axis synchronous generator with a single-lag exciter and a droop
// governor. Staged modes follow the sequential-initialization order:
// voltage-source -> constant-speed -> exciter-on -> governor-on; the swing
// equation runs only in governor-on mode, speed is pinned at 1.0 before that.
#pragma once

#include "emtsim/case_model.hpp"
#include "emtsim/control.hpp"

namespace emtsim {

enum class SgMode { VoltageSource, ConstantSpeed, ExciterOn, GovernorOn };

struct SgState {
    SgMode mode = SgMode::VoltageSource;
    double t = 0.0;        // local time, s
    double delta = 0.0;    // rotor angle against the synchronous reference, rad
    double speed = 1.0;    // pu
    double eq_p = 1.0;     // transient EMFs, machine pu
    double ed_p = 0.0;
    double efd = 1.0;
    double v_ref = 1.0;
    double p_ref = 0.0;    // governor setpoint, machine pu
    double p_mech = 0.0;
    double id = 0.0;       // last stator current in machine dq
    double iq = 0.0;
    double p_elec = 0.0;   // last air-gap power
    LagFilter v_filter;    // terminal magnitude measurement (tr)
    LagFilter efd_lag;     // exciter regulator (ta)
    LagFilter gov_lag;     // governor actuator (tg)
    Phases stator_i{};     // standalone-mode stator branch currents
    Phases stator_u{};     // standalone-mode previous branch drive e - v
    bool initialized = false;
};

struct SgInit {
    SgState state;
    Complex i_machine;  // stator current phasor at t = 0, machine pu
    Complex e_if;       // EMF-behind-x' phasor at t = 0 (voltage pu)
};

// Park angle convention: theta = w0 t + delta - pi/2, q axis along the rotor
// EMF, so v_dq = space_phasor * e^{-j theta}.
inline double sg_park_angle(const SgState& st, double w0) {
    return w0 * st.t + st.delta - kPi / 2.0;
}

// Steady-state initialization from the power-flow phasors. v_phasor is the
// bus voltage, s_system the injected complex power on the system base.
SgInit init_sg_from_snapshot(const SgPlant& plant, Complex v_phasor, Complex s_system,
                             double system_mva);

double exciter_step(SgState& st, const ExciterParams& p, double v_mag, double dt);
double governor_step(SgState& st, const GovernorParams& p, double speed, double dt);

// Network-coupled step: advances the rotor/flux/control states given the
// terminal-voltage and stator-current space phasors (machine pu), returning
// the EMF space phasor that drives the interface source over the next step.
Complex sg_network_step(SgState& st, const SgPlant& plant, Complex v_s, Complex i_s, double w0,
                        double dt);

// Self-contained step for a machine fed by a known terminal waveform: the
// stator branch (ra + x'/w0) is integrated internally and the injected
// current is returned in machine pu.
Phases sg_step(SgState& st, const SgPlant& plant, const Phases& v_abc, double w0, double dt);

}  // namespace emtsim
