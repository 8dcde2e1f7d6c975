#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "emtsim/machines.hpp"

using namespace emtsim;

namespace {

constexpr double kDt = 50e-6;
constexpr double kW0 = kTwoPi * 60.0;

SgPlant bare_plant() {
    SgPlant p;
    p.mva_base = 100.0;
    p.h = 4.0;
    p.xd = 1.8;
    p.xq = 1.7;
    p.xd_p = 0.3;
    p.xq_p = 0.3;
    p.ra = 0.003;
    p.td0_p = 6.0;
    p.tq0_p = 0.8;
    p.damping = 0.0;
    p.exciter.enabled = false;
    p.governor.enabled = false;
    return p;
}

Phases rated_terminal(double t, double mag = 1.0, double angle = 0.0) {
    return phases_from_phasor(std::polar(mag, kW0 * t + angle));
}

}  // namespace

TEST_CASE("no-load machine at rated terminal carries no current") {
    const auto plant = bare_plant();
    auto init = init_sg_from_snapshot(plant, Complex{1.0, 0.0}, Complex{0.0, 0.0}, 100.0);
    CHECK(init.state.efd == doctest::Approx(1.0));
    CHECK(init.state.eq_p == doctest::Approx(1.0));
    CHECK(init.state.ed_p == doctest::Approx(0.0));
    CHECK(std::abs(init.i_machine) == doctest::Approx(0.0));

    SgState st = init.state;
    st.mode = SgMode::ConstantSpeed;
    double max_i = 0.0;
    for (int k = 1; k <= 10000; ++k) {
        const auto i = sg_step(st, plant, rated_terminal(k * kDt), kW0, kDt);
        if (k > 4000) max_i = std::max(max_i, std::abs(space_phasor(i)));
    }
    CHECK(max_i < 0.01);
}

TEST_CASE("speed ramps at dT/(2H) under a torque step with the governor off") {
    const auto plant = bare_plant();
    auto init = init_sg_from_snapshot(plant, Complex{1.0, 0.0}, Complex{0.0, 0.0}, 100.0);
    SgState st = init.state;
    st.mode = SgMode::GovernorOn;
    st.p_mech = 0.1;  // torque step against zero electrical load angle

    const double window = 0.02;
    const int steps = static_cast<int>(std::lround(window / kDt));
    for (int k = 1; k <= steps; ++k) sg_step(st, plant, rated_terminal(k * kDt), kW0, kDt);
    const double slope = (st.speed - 1.0) / window;
    CHECK(slope == doctest::Approx(0.1 / (2.0 * plant.h)).epsilon(0.02));
}

TEST_CASE("constant-speed mode pins speed at exactly 1.0") {
    const auto plant = bare_plant();
    auto init = init_sg_from_snapshot(plant, Complex{1.0, 0.0}, Complex{0.0, 0.0}, 100.0);
    SgState st = init.state;
    st.mode = SgMode::ConstantSpeed;
    st.p_mech = 0.8;
    for (int k = 1; k <= 2000; ++k) sg_step(st, plant, rated_terminal(k * kDt), kW0, kDt);
    CHECK(st.speed == 1.0);
    CHECK(st.delta == init.state.delta);
}

TEST_CASE("exciter holds at zero error and follows Ta on a reference step") {
    ExciterParams p;
    p.ka = 50.0;
    p.ta = 0.05;
    p.tr = 0.0;
    p.efd_max = 10.0;
    p.efd_min = -10.0;

    SgState st;
    st.efd = 2.0;
    st.efd_lag = LagFilter{p.ta, 2.0};
    st.v_filter = LagFilter{p.tr, 1.0};
    st.v_ref = 1.0 + 2.0 / p.ka;
    for (int k = 0; k < 1000; ++k) exciter_step(st, p, 1.0, kDt);
    CHECK(st.efd == doctest::Approx(2.0).epsilon(1e-9));

    // +0.05 reference step: first-order rise with time constant ta.
    st.v_ref += 0.05;
    const int steps_ta = static_cast<int>(std::lround(p.ta / kDt));
    for (int k = 0; k < steps_ta; ++k) exciter_step(st, p, 1.0, kDt);
    const double target_rise = p.ka * 0.05;
    CHECK(st.efd - 2.0 ==
          doctest::Approx(target_rise * (1.0 - std::exp(-1.0))).epsilon(0.05));

    // Ceiling is never exceeded.
    st.v_ref += 10.0;
    double max_efd = 0.0;
    for (int k = 0; k < 40000; ++k) max_efd = std::max(max_efd, exciter_step(st, p, 1.0, kDt));
    CHECK(max_efd <= p.efd_max);
    CHECK(max_efd == doctest::Approx(p.efd_max));
}

TEST_CASE("governor droop algebra") {
    GovernorParams p;
    p.droop = 0.05;
    p.tg = 0.1;

    SgState st;
    st.p_ref = 0.8;
    st.gov_lag = LagFilter{p.tg, 0.8};
    governor_step(st, p, 1.0, kDt);
    CHECK(st.p_mech == doctest::Approx(0.8));

    for (int k = 0; k < 40000; ++k) governor_step(st, p, 1.01, kDt);
    CHECK(st.p_mech == doctest::Approx(0.8 - 0.2).epsilon(1e-6));
}

TEST_CASE("mechanical power is frozen while the governor stage is off") {
    auto plant = bare_plant();
    plant.governor.enabled = true;  // present on the plant, not yet staged in
    auto init = init_sg_from_snapshot(plant, Complex{1.0, 0.0}, Complex{0.8, 0.2}, 100.0);
    SgState st = init.state;
    st.mode = SgMode::ExciterOn;
    const double pm0 = st.p_mech;
    for (int k = 1; k <= 2000; ++k) sg_step(st, plant, rated_terminal(k * kDt), kW0, kDt);
    CHECK(st.p_mech == pm0);
    CHECK(st.speed == 1.0);
}

TEST_CASE("loaded equilibrium is stationary with all controls on") {
    auto plant = bare_plant();
    plant.exciter.enabled = true;
    plant.governor.enabled = true;
    plant.damping = 2.0;

    const Complex v0 = std::polar(1.02, 0.2);
    const Complex s0{0.8, 0.3};
    auto init = init_sg_from_snapshot(plant, v0, s0, 100.0);
    SgState st = init.state;
    st.mode = SgMode::GovernorOn;
    st.stator_i = phases_from_phasor(init.i_machine);

    // Drive the standalone stator with the frozen terminal waveform. A fine
    // step keeps the trapezoidal stator error below the balance tolerance.
    const double dt = 10e-6;
    const double t_end = 3.0;
    const int steps = static_cast<int>(std::lround(t_end / dt));
    double delta_at_half = 0.0;
    for (int k = 1; k <= steps; ++k) {
        const double t = k * dt;
        sg_step(st, plant, phases_from_phasor(v0 * std::polar(1.0, kW0 * t)), kW0, dt);
        if (k == steps / 2) delta_at_half = st.delta;
    }
    CHECK(std::abs(st.p_elec - st.p_mech) < 1e-4);
    CHECK(std::abs(st.speed - 1.0) < 1e-6);
    const double drift = std::abs(st.delta - delta_at_half) / (t_end / 2.0);
    CHECK(drift < 1e-5);  // rad/s
    CHECK(std::abs(space_phasor(st.stator_i) - init.i_machine * std::polar(1.0, kW0 * t_end)) <
          5e-3);
}
