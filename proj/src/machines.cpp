#include "emtsim/machines.hpp"

#include <cmath>
#include <stdexcept>

namespace emtsim {

SgInit init_sg_from_snapshot(const SgPlant& plant, Complex v_phasor, Complex s_system,
                             double system_mva) {
    if (std::abs(v_phasor) < 1e-6) throw std::invalid_argument("SG terminal voltage is zero");
    const Complex s = s_system * (system_mva / plant.mva_base);
    const Complex i = std::conj(s / v_phasor);

    const double delta = std::arg(v_phasor + Complex(plant.ra, plant.xq) * i);
    const Complex rot = std::polar(1.0, -(delta - kPi / 2.0));
    const Complex v_dq = v_phasor * rot;
    const Complex i_dq = i * rot;
    const double vd = v_dq.real(), vq = v_dq.imag();
    const double id = i_dq.real(), iq = i_dq.imag();

    SgInit out;
    SgState& st = out.state;
    st.eq_p = vq + plant.ra * iq + plant.xd_p * id;
    st.ed_p = vd + plant.ra * id - plant.xq_p * iq;
    st.efd = st.eq_p + (plant.xd - plant.xd_p) * id;
    st.delta = delta;
    st.speed = 1.0;
    st.id = id;
    st.iq = iq;
    st.p_elec = st.ed_p * id + st.eq_p * iq + (plant.xq_p - plant.xd_p) * id * iq;
    st.p_mech = st.p_elec;
    st.p_ref = st.p_elec;
    st.v_ref = std::abs(v_phasor) + st.efd / plant.exciter.ka;
    st.v_filter = LagFilter{plant.exciter.tr, std::abs(v_phasor)};
    st.efd_lag = LagFilter{plant.exciter.ta, st.efd};
    st.gov_lag = LagFilter{plant.governor.tg, st.p_mech};
    st.initialized = true;

    const Complex e_if_dq(st.ed_p + (plant.xq_p - plant.xd_p) * iq, st.eq_p);
    out.e_if = e_if_dq * std::conj(rot);
    out.i_machine = i;

    // Consistency of the stator algebra: E' - (ra + jx'd) i must equal v.
    const Complex check = e_if_dq - Complex(plant.ra, plant.xd_p) * i_dq - v_dq;
    if (std::abs(check) > 1e-8)
        throw std::logic_error("SG snapshot initialization is inconsistent");
    return out;
}

double exciter_step(SgState& st, const ExciterParams& p, double v_mag, double dt) {
    const double vm = st.v_filter.step(v_mag, dt);
    st.efd_lag.step(p.ka * (st.v_ref - vm), dt);
    st.efd_lag.y = std::clamp(st.efd_lag.y, p.efd_min, p.efd_max);
    st.efd = st.efd_lag.y;
    return st.efd;
}

double governor_step(SgState& st, const GovernorParams& p, double speed, double dt) {
    const double target =
        std::clamp(st.p_ref - (speed - 1.0) / p.droop, p.p_min, p.p_max);
    st.p_mech = st.gov_lag.step(target, dt);
    return st.p_mech;
}

Complex sg_network_step(SgState& st, const SgPlant& plant, Complex v_s, Complex i_s, double w0,
                        double dt) {
    if (!st.initialized) throw std::logic_error("SG state is not initialized");

    const double theta = sg_park_angle(st, w0);
    const Complex i_dq = to_dq(i_s, theta);
    const double id = i_dq.real(), iq = i_dq.imag();

    if (st.mode != SgMode::VoltageSource) {
        if (st.mode >= SgMode::ExciterOn && plant.exciter.enabled)
            exciter_step(st, plant.exciter, std::abs(v_s), dt);

        // Flux decay, trapezoidal with the measured currents held over the step.
        {
            LagFilter fq{plant.td0_p, st.eq_p};
            st.eq_p = fq.step(st.efd - (plant.xd - plant.xd_p) * id, dt);
            LagFilter fd{plant.tq0_p, st.ed_p};
            st.ed_p = fd.step((plant.xq - plant.xq_p) * iq, dt);
        }

        st.p_elec = st.ed_p * id + st.eq_p * iq + (plant.xq_p - plant.xd_p) * id * iq;

        if (st.mode == SgMode::GovernorOn) {
            if (plant.governor.enabled) governor_step(st, plant.governor, st.speed, dt);
            const double acc = (st.p_mech - st.p_elec) / st.speed -
                               plant.damping * (st.speed - 1.0);
            st.speed += dt * acc / (2.0 * plant.h);
            st.delta += dt * w0 * (st.speed - 1.0);
        } else {
            st.speed = 1.0;
        }
    }

    st.id = id;
    st.iq = iq;
    st.t += dt;

    const Complex e_if_dq(st.ed_p + (plant.xq_p - plant.xd_p) * iq, st.eq_p);
    return from_dq(e_if_dq, sg_park_angle(st, w0));
}

Phases sg_step(SgState& st, const SgPlant& plant, const Phases& v_abc, double w0, double dt) {
    const Complex i_s = space_phasor(st.stator_i);
    const Complex v_s = space_phasor(v_abc);
    const Complex e_next = sg_network_step(st, plant, v_s, i_s, w0, dt);
    const Phases e_abc = phases_from_phasor(e_next);

    // Trapezoidal stator branch: l di/dt = (e - v) - ra i, l = xd'/w0.
    const double l = plant.xd_p / w0;
    const double a = plant.ra * dt / (2.0 * l);
    for (int p = 0; p < 3; ++p) {
        const double u_next = e_abc[p] - v_abc[p];
        st.stator_i[p] = ((1.0 - a) * st.stator_i[p] +
                          (dt / (2.0 * l)) * (u_next + st.stator_u[p])) /
                         (1.0 + a);
        st.stator_u[p] = u_next;
    }
    return st.stator_i;
}

}  // namespace emtsim
