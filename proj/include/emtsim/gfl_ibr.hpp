// Grid-following inverter: SRF-PLL synchronized controlled current source
// with frequency/voltage droop deadbands and P-priority current limiting.
#pragma once

#include <utility>

#include "emtsim/case_model.hpp"
#include "emtsim/control.hpp"

namespace emtsim {

struct PllParams {
    // 2nd-order loop, 20 Hz bandwidth, damping 0.707.
    double kp = 177.7;
    double ki = 15791.4;
    double omega_min = 0.9;
    double omega_max = 1.1;
};

struct PllState {
    double theta = 0.0;  // rad, wrapped to [0, 2pi)
    double omega = 1.0;  // pu of nominal
    double integ = 0.0;  // rad/s frequency deviation integral
};

void pll_step(PllState& st, const Phases& v_abc, const PllParams& p, double w0, double dt);

// Deadbanded droop response (delta_p, delta_q) in pu on the plant base;
// the deadband is applied before the droop gain.
std::pair<double, double> droop_response(double freq_hz, double v_mag, const GflPlant& plant,
                                         double f0);

struct GflState {
    PllState pll;
    double p_ref = 0.0;  // ramped reference, pu on plant base
    double q_ref = 0.0;
    double p_cmd = 0.0;  // post-droop commands
    double q_cmd = 0.0;
    double id_cmd = 0.0;  // limited current commands (d along the PLL)
    double iq_cmd = 0.0;
    double id = 0.0;      // injected currents after the converter lag
    double iq = 0.0;
    double t_conv = 0.02;  // current-source lag, s
    bool enabled = true;
};

// Moves the references toward their targets at the given rate (pu/s).
void ramp_refs(GflState& st, double target_p, double target_q, double ramp_rate, double dt);

// One step of the inverter: returns the injected three-phase current in pu on
// the plant base (generator convention).
Phases gfl_step(GflState& st, const GflPlant& plant, const Phases& v_abc, double f0, double dt,
                const PllParams& pll = {});

}  // namespace emtsim
