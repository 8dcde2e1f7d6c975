// Aggregated Type-4 offshore wind plant: rotor aerodynamics with pitch
// control, MPPT, back-to-back averaged converters (rotor-side and grid-side)
// around a chopper-protected DC link, and an LVRT power-reduction table.
#pragma once

#include "emtsim/case_model.hpp"
#include "emtsim/control.hpp"
#include "emtsim/gfl_ibr.hpp"

namespace emtsim {

// Performance coefficient of the blade, exponential form.
double cp_value(double lambda, double beta_deg);

// Mechanical power in pu on the turbine rating; zero outside the cut-in /
// cut-out window.
double aero_power(double v_wind, double omega_pu, double beta_deg, const OwfPlant& plant);

// MPPT schedule: k_opt * omega^3 below rating, clamped at 1 pu.
double mppt_ref(double omega_pu);

// Piecewise-linear voltage-indexed power scale used for ride-through.
double lvrt_scale(double v_poi, const OwfParams& p);

struct TurbineMech {
    double omega = 1.0;  // pu
    double beta = 0.0;   // deg
    double pitch_integ = 0.0;
    bool held = true;    // rotor pinned until the rotor-side converter engages
    bool online = false; // wind inside the cut-in/cut-out window
};

// Pitch regulator: PI on (omega - omega_max) with range and rate limits.
double pitch_step(TurbineMech& mech, const OwfParams& p, double dt);

struct DcLink {
    double v_dc = 1.0;
    double energy = 0.0;  // c_dc * v^2 / 2, pu-s
    bool chopper_on = false;
    double p_chopper = 0.0;
    double last_residual = 0.0;  // power-balance audit of the last step
    double max_residual = 0.0;
    double v_dc_peak = 1.0;
};

DcLink make_dclink(const OwfParams& p);
bool chopper_step(DcLink& link, const OwfParams& p);
double dclink_step(DcLink& link, const OwfParams& p, double p_in, double p_out, double dt);

struct GscControl {
    PllState pll;
    PiController pi_vdc, pi_vac, pi_q, pi_id, pi_iq;
    double id = 0.0, iq = 0.0;  // filter currents, plant pu
    double id_ref = 0.0, iq_ref = 0.0;
    double q_ref = 0.0;
    double ud = 0.0, uq = 0.0;  // converter voltage commands
    double p_bridge = 0.0;      // power drawn from the DC link
    double q_out = 0.0;
    bool active = false;
};

struct GscInputs {
    double vd = 1.0;  // terminal voltage in the PLL frame
    double vq = 0.0;
    double v_poi = 1.0;
    double v_dc = 1.0;
    double omega = 1.0;              // decoupling frequency, pu
    double w_base = 2.0 * kPi * 60;  // rad/s
};

GscControl make_gsc(const OwfParams& p);

// Outer loops (DC voltage -> id*, POI AC voltage -> Q* -> iq*) followed by
// the decoupled inner current loops; returns (ud*, uq*).
Complex gsc_step(GscControl& c, const OwfParams& p, const GscInputs& in, double dt);

struct RscControl {
    PiController pi_p, pi_v, pi_id, pi_iq;
    RateLimiter order_ramp;      // soft start and recovery ramping
    double id = 0.0, iq = 0.0;   // machine-side currents
    double id_ref = 0.0, iq_ref = 0.0;
    double ud = 0.0, uq = 0.0;
    double p_bridge = 0.0;       // power fed into the DC link
    double p_machine = 0.0;      // power taken off the shaft
    double order = 0.0;
    bool active = false;
};

struct RscInputs {
    double p_mppt = 0.0;
    double v_poi = 1.0;
    double omega = 1.0;              // rotor speed, pu
    double w_base = 2.0 * kPi * 60;  // rad/s
};

RscControl make_rsc(const OwfParams& p);

Complex rsc_step(RscControl& c, const OwfParams& p, const RscInputs& in, double dt);

struct OwfState {
    TurbineMech mech;
    DcLink link;
    GscControl gsc;
    RscControl rsc;
    double wind = 0.0;
};

void owf_start_turbine(OwfState& st, const OwfPlant& plant, double wind);

// Full plant step. v_term_abc is the converter terminal voltage (pu),
// v_poi_mag the POI voltage magnitude; returns the injected three-phase
// current in pu on the plant base.
Phases owf_step(OwfState& st, const OwfPlant& plant, const Phases& v_term_abc, double v_poi_mag,
                double wind, double f0, double dt);

}  // namespace emtsim
