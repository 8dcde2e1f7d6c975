#include "emtsim/gfl_ibr.hpp"

#include <cmath>

namespace emtsim {

void pll_step(PllState& st, const Phases& v_abc, const PllParams& p, double w0, double dt) {
    const Complex v_s = space_phasor(v_abc);
    const Complex v_dq = to_dq(v_s, st.theta);
    const double vn = std::max(std::abs(v_s), 0.1);
    const double err = v_dq.imag() / vn;

    const double dev_min = (p.omega_min - 1.0) * w0;
    const double dev_max = (p.omega_max - 1.0) * w0;
    st.integ = std::clamp(st.integ + p.ki * err * dt, dev_min, dev_max);
    const double dev = std::clamp(p.kp * err + st.integ, dev_min, dev_max);
    st.omega = 1.0 + dev / w0;
    st.theta = wrap_angle(st.theta + st.omega * w0 * dt);
}

std::pair<double, double> droop_response(double freq_hz, double v_mag, const GflPlant& plant,
                                         double f0) {
    const double df = apply_deadband(freq_hz - f0, plant.freq_deadband_hz);
    const double dv = apply_deadband(v_mag - 1.0, plant.volt_deadband_pu);
    return {-plant.p_droop * df / f0, -plant.q_droop * dv};
}

void ramp_refs(GflState& st, double target_p, double target_q, double ramp_rate, double dt) {
    const double step = ramp_rate * dt;
    st.p_ref += std::clamp(target_p - st.p_ref, -step, step);
    st.q_ref += std::clamp(target_q - st.q_ref, -step, step);
}

Phases gfl_step(GflState& st, const GflPlant& plant, const Phases& v_abc, double f0, double dt,
                const PllParams& pll) {
    const double w0 = kTwoPi * f0;
    pll_step(st.pll, v_abc, pll, w0, dt);
    if (!st.enabled) {
        st.id = st.iq = 0.0;
        return {0.0, 0.0, 0.0};
    }

    const double v_mag = std::abs(space_phasor(v_abc));
    const auto [dp, dq] = droop_response(st.pll.omega * f0, v_mag, plant, f0);
    st.p_cmd = st.p_ref + dp;
    st.q_cmd = st.q_ref + dq;

    // Current commands at the PLL frame; Q > 0 (injection) maps to iq < 0.
    const double vd = std::max(v_mag, 0.1);
    double id_cmd = st.p_cmd / vd;
    double iq_cmd = -st.q_cmd / vd;

    // P-priority limiting: active current keeps the full limit, reactive
    // current gets the headroom.
    id_cmd = std::clamp(id_cmd, -plant.i_max, plant.i_max);
    const double head = std::sqrt(std::max(plant.i_max * plant.i_max - id_cmd * id_cmd, 0.0));
    iq_cmd = std::clamp(iq_cmd, -head, head);
    st.id_cmd = id_cmd;
    st.iq_cmd = iq_cmd;

    const double a = dt / std::max(st.t_conv, dt);
    st.id += a * (id_cmd - st.id);
    st.iq += a * (iq_cmd - st.iq);

    return phases_from_phasor(from_dq(Complex(st.id, st.iq), st.pll.theta));
}

}  // namespace emtsim
