#include "emtsim/owf.hpp"

#include <cmath>
#include <stdexcept>

namespace emtsim {

namespace {

// Trapezoidal update of the dq filter pair:
//   (l/w0) di/dt = drive - r i - j w l i
void dq_filter_step(double& id, double& iq, double drive_d, double drive_q, double r, double l,
                    double omega, double w0, double dt) {
    const double tau = l / w0;
    const double a = r, b = omega * l;  // di/dt = (drive - (a + jb) i) / tau
    const double h = dt / (2.0 * tau);
    // (I + h (a + jb)) i+ = (I - h (a + jb)) i + 2h * drive
    const double pa = 1.0 + h * a, pb = h * b;
    const double ma = 1.0 - h * a, mb = -h * b;
    const double rd = ma * id - mb * iq + 2.0 * h * drive_d;
    const double rq = mb * id + ma * iq + 2.0 * h * drive_q;
    const double det = pa * pa + pb * pb;
    id = (pa * rd + pb * rq) / det;
    iq = (-pb * rd + pa * rq) / det;
}

void limit_dq(double& d_ref, double& q_ref, double i_max) {
    d_ref = std::clamp(d_ref, -i_max, i_max);
    const double head = std::sqrt(std::max(i_max * i_max - d_ref * d_ref, 0.0));
    q_ref = std::clamp(q_ref, -head, head);
}

}  // namespace

double cp_value(double lambda, double beta_deg) {
    lambda = std::max(lambda, 0.1);
    const double beta = std::max(beta_deg, 0.0);
    const double li_inv =
        1.0 / (lambda + 0.08 * beta) - 0.035 / (beta * beta * beta + 1.0);
    return 0.5176 * (116.0 * li_inv - 0.4 * beta - 5.0) * std::exp(-21.0 * li_inv) +
           0.0068 * lambda;
}

double aero_power(double v_wind, double omega_pu, double beta_deg, const OwfPlant& plant) {
    if (v_wind < plant.cut_in || v_wind > plant.cut_out) return 0.0;
    const auto& p = plant.params;
    const double lambda = p.lambda_opt * p.rated_wind * std::max(omega_pu, 1e-3) / v_wind;
    const double area = kPi * p.rotor_radius * p.rotor_radius;
    const double watts =
        0.5 * p.air_density * area * v_wind * v_wind * v_wind * cp_value(lambda, beta_deg);
    return std::max(watts / (plant.turbine_mw * 1e6), 0.0);
}

double mppt_ref(double omega_pu) {
    const double w = std::max(omega_pu, 0.0);
    return std::min(w * w * w, 1.0);
}

double lvrt_scale(double v_poi, const OwfParams& p) {
    if (v_poi <= p.lvrt_v0) return 0.0;
    if (v_poi >= p.lvrt_v1) return 1.0;
    return (v_poi - p.lvrt_v0) / (p.lvrt_v1 - p.lvrt_v0);
}

double pitch_step(TurbineMech& mech, const OwfParams& p, double dt) {
    const double err = mech.omega - p.omega_max;
    mech.pitch_integ = std::clamp(mech.pitch_integ + p.pitch_ki * err * dt, 0.0, p.beta_max);
    const double cmd = std::clamp(p.pitch_kp * err + mech.pitch_integ, 0.0, p.beta_max);
    const double slew = p.pitch_rate * dt;
    mech.beta = std::clamp(mech.beta + std::clamp(cmd - mech.beta, -slew, slew), 0.0, p.beta_max);
    return mech.beta;
}

DcLink make_dclink(const OwfParams& p) {
    DcLink link;
    link.v_dc = 1.0;
    link.energy = 0.5 * p.c_dc;
    return link;
}

bool chopper_step(DcLink& link, const OwfParams& p) {
    if (!p.chopper_enabled) {
        link.chopper_on = false;
        return false;
    }
    if (link.v_dc >= p.v_dc_trip)
        link.chopper_on = true;
    else if (link.v_dc <= p.v_dc_release)
        link.chopper_on = false;
    return link.chopper_on;
}

double dclink_step(DcLink& link, const OwfParams& p, double p_in, double p_out, double dt) {
    const double e0 = link.energy;
    auto chop = [&](double e) {
        return link.chopper_on ? 2.0 * e / (p.c_dc * p.chopper_r) : 0.0;
    };
    const double pnet0 = p_in - p_out - chop(e0);
    double e1 = e0 + dt * pnet0;
    for (int it = 0; it < 4; ++it)
        e1 = e0 + 0.5 * dt * (pnet0 + p_in - p_out - chop(e1));
    if (!(e1 > 0.0)) throw std::runtime_error("DC link voltage collapsed");

    link.p_chopper = 0.5 * (chop(e0) + chop(e1));
    link.last_residual = std::abs((e1 - e0) / dt - (p_in - p_out - link.p_chopper));
    link.max_residual = std::max(link.max_residual, link.last_residual);
    link.energy = e1;
    link.v_dc = std::sqrt(2.0 * e1 / p.c_dc);
    link.v_dc_peak = std::max(link.v_dc_peak, link.v_dc);
    return link.v_dc;
}

GscControl make_gsc(const OwfParams& p) {
    GscControl c;
    c.pi_vdc = {p.kp_vdc, p.ki_vdc, -p.i_max, p.i_max};
    c.pi_vac = {p.kp_vac, p.ki_vac, -p.q_max, p.q_max};
    c.pi_q = {p.kp_q, p.ki_q, -p.i_max, p.i_max};
    c.pi_id = {p.kp_cur, p.ki_cur, -2.0, 2.0};
    c.pi_iq = {p.kp_cur, p.ki_cur, -2.0, 2.0};
    return c;
}

RscControl make_rsc(const OwfParams& p) {
    RscControl c;
    c.pi_p = {p.kp_p, p.ki_p, -p.i_max, p.i_max};
    c.pi_v = {p.kp_vrsc, p.ki_vrsc, -p.i_max, p.i_max};
    c.pi_id = {p.kp_cur, p.ki_cur, -2.0, 2.0};
    c.pi_iq = {p.kp_cur, p.ki_cur, -2.0, 2.0};
    c.order_ramp = {p.order_rate, 1e12, 0.0};
    return c;
}

Complex gsc_step(GscControl& c, const OwfParams& p, const GscInputs& in, double dt) {
    // Outer loops: DC-link voltage sets the active current (high V_dc exports
    // more), POI voltage sets a reactive power order.
    double id_ref = c.pi_vdc.step(in.v_dc - 1.0, dt);
    c.q_ref = c.pi_vac.step(p.v_poi_ref - in.v_poi, dt);
    c.q_out = in.vq * c.id - in.vd * c.iq;
    double iq_ref = -c.pi_q.step(c.q_ref - c.q_out, dt);
    limit_dq(id_ref, iq_ref, p.i_max);
    c.id_ref = id_ref;
    c.iq_ref = iq_ref;

    c.ud = c.pi_id.step(id_ref - c.id, dt) - in.omega * p.l_filter * c.iq + in.vd;
    c.uq = c.pi_iq.step(iq_ref - c.iq, dt) + in.omega * p.l_filter * c.id + in.vq;

    dq_filter_step(c.id, c.iq, c.ud - in.vd, c.uq - in.vq, p.r_filter, p.l_filter, in.omega,
                   in.w_base, dt);
    c.p_bridge = c.ud * c.id + c.uq * c.iq;
    return {c.ud, c.uq};
}

Complex rsc_step(RscControl& c, const OwfParams& p, const RscInputs& in, double dt) {
    c.order = c.order_ramp.step(in.p_mppt * lvrt_scale(in.v_poi, p), dt);

    double id_ref = c.pi_p.step(c.order - c.p_bridge, dt);
    // The voltage reference follows the speed-proportional machine EMF.
    const double v_rsc = std::hypot(c.ud, c.uq);
    double iq_ref = c.pi_v.step(p.rsc_v_sign * (in.omega - v_rsc), dt);
    limit_dq(id_ref, iq_ref, p.i_max);
    c.id_ref = id_ref;
    c.iq_ref = iq_ref;

    // Machine side: collapsed PMSG as an EMF proportional to rotor speed
    // behind the stator reactance; current flows machine -> converter, so the
    // inner loop mirrors the grid-side signs.
    const double ed = in.omega, eq = 0.0;
    c.ud = -c.pi_id.step(id_ref - c.id, dt) + ed + in.omega * p.x_stator * c.iq;
    c.uq = -c.pi_iq.step(iq_ref - c.iq, dt) + eq - in.omega * p.x_stator * c.id;

    dq_filter_step(c.id, c.iq, ed - c.ud, eq - c.uq, p.r_filter, p.x_stator, in.omega, in.w_base,
                   dt);
    c.p_machine = ed * c.id + eq * c.iq;
    c.p_bridge = c.ud * c.id + c.uq * c.iq;
    return {c.ud, c.uq};
}

void owf_start_turbine(OwfState& st, const OwfPlant& plant, double wind) {
    st.mech.omega = std::clamp(wind / plant.params.rated_wind, 0.2, 1.0);
    st.mech.beta = 0.0;
    st.mech.pitch_integ = 0.0;
    st.mech.held = true;
    st.mech.online = wind >= plant.cut_in && wind <= plant.cut_out;
}

Phases owf_step(OwfState& st, const OwfPlant& plant, const Phases& v_term_abc, double v_poi_mag,
                double wind, double f0, double dt) {
    const auto& p = plant.params;
    const double w0 = kTwoPi * f0;
    st.wind = wind;
    st.mech.online = wind >= plant.cut_in && wind <= plant.cut_out;

    pll_step(st.gsc.pll, v_term_abc, PllParams{}, w0, dt);
    if (!st.gsc.active) return {0.0, 0.0, 0.0};

    const Complex v_dq = to_dq(space_phasor(v_term_abc), st.gsc.pll.theta);
    GscInputs gin;
    gin.vd = v_dq.real();
    gin.vq = v_dq.imag();
    gin.v_poi = v_poi_mag;
    gin.v_dc = st.link.v_dc;
    gin.omega = st.gsc.pll.omega;
    gin.w_base = w0;
    gsc_step(st.gsc, p, gin, dt);

    double p_in = 0.0;
    if (st.rsc.active && st.mech.online) {
        RscInputs rin;
        rin.p_mppt = mppt_ref(st.mech.omega);
        rin.v_poi = v_poi_mag;
        rin.omega = st.mech.omega;
        rin.w_base = w0;
        rsc_step(st.rsc, p, rin, dt);
        p_in = st.rsc.p_bridge;
    } else {
        st.rsc.id = st.rsc.iq = 0.0;
        st.rsc.p_bridge = st.rsc.p_machine = 0.0;
        st.rsc.order = 0.0;
        st.rsc.order_ramp.y = 0.0;
        st.rsc.pi_p.reset();
        st.rsc.pi_v.reset();
        st.rsc.pi_id.reset();
        st.rsc.pi_iq.reset();
    }

    if (!st.mech.held) {
        const double p_aero = aero_power(wind, st.mech.omega, st.mech.beta, plant);
        const double w = std::max(st.mech.omega, 0.1);
        const double acc = (p_aero - st.rsc.p_machine) / w;
        st.mech.omega = std::max(st.mech.omega + dt * acc / (2.0 * p.rotor_h), 0.05);
        pitch_step(st.mech, p, dt);
    }

    chopper_step(st.link, p);
    dclink_step(st.link, p, p_in, st.gsc.p_bridge, dt);

    return phases_from_phasor(from_dq(Complex(st.gsc.id, st.gsc.iq), st.gsc.pll.theta));
}

}  // namespace emtsim
