#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <complex>
#include <random>

#include "emtsim/case_model.hpp"
#include "emtsim/control.hpp"
#include "emtsim/powerflow.hpp"

using namespace emtsim;

namespace {

const char* kTwoBus = R"(
[SYSTEM]
mva 100
[BUS]
1 230 slack
2 230 PQ
[BRANCH]
1 2 0.0 0.1 0.0
[LOAD]
2 1.0 0.0 0.0 0.0 1.0
)";

SystemCase nine_bus() { return load_case(std::string(EMTSIM_CASE_DIR) + "/nine_bus.case"); }

// Independent oracle for the two-bus case: fixed-point iteration on the exact
// complex power equation V2 = V1 - jX conj(S_load / V2).
Complex two_bus_oracle(double x, Complex s_load, double tol = 1e-12) {
    Complex v2{1.0, 0.0};
    for (int i = 0; i < 10000; ++i) {
        const Complex next = 1.0 - Complex(0.0, x) * std::conj(s_load / v2);
        if (std::abs(next - v2) < tol) return next;
        v2 = next;
    }
    return v2;
}

// Independent Gauss-Seidel solver working from its own admittance assembly.
struct GsResult {
    std::vector<Complex> v;
};

GsResult gauss_seidel(const SystemCase& sys, int sweeps) {
    const int n = static_cast<int>(sys.buses.size());
    std::vector<std::vector<Complex>> y(n, std::vector<Complex>(n, Complex{0.0, 0.0}));
    for (const auto& br : sys.branches) {
        if (br.breaker_state != BreakerState::Closed) continue;
        const int i = sys.bus_index(br.from), j = sys.bus_index(br.to);
        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex hs(0.0, br.b_shunt / 2.0);
        y[i][i] += ys + hs;
        y[j][j] += ys + hs;
        y[i][j] -= ys;
        y[j][i] -= ys;
    }

    std::vector<Complex> s(n, Complex{0.0, 0.0});
    std::vector<double> vset(n, 1.0);
    std::vector<BusType> type(n);
    for (int i = 0; i < n; ++i) type[i] = sys.buses[i].type;
    for (const auto& sg : sys.sg_plants) {
        const int i = sys.bus_index(sg.bus);
        s[i] += Complex(sg.p_set * sg.mva_base / sys.mva_base, 0.0);
        vset[i] = sg.v_set;
    }
    for (const auto& g : sys.gfl_plants)
        s[sys.bus_index(g.bus)] +=
            Complex(g.p_ref, g.q_ref) * (g.mva_base / sys.mva_base);
    for (const auto& ld : sys.loads) s[sys.bus_index(ld.bus)] -= Complex(ld.p0, ld.q0);

    std::vector<Complex> v(n, Complex{1.0, 0.0});
    for (int i = 0; i < n; ++i)
        if (type[i] != BusType::PQ) v[i] = Complex(vset[i], 0.0);

    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (int i = 0; i < n; ++i) {
            if (type[i] == BusType::Slack) continue;
            Complex sum{0.0, 0.0};
            for (int j = 0; j < n; ++j)
                if (j != i) sum += y[i][j] * v[j];
            Complex si = s[i];
            if (type[i] == BusType::PV) {
                // reactive power follows from the present voltage estimate
                Complex inj = std::conj(v[i]) * (sum + y[i][i] * v[i]);
                si = Complex(s[i].real(), -inj.imag());
            }
            Complex vnew = (std::conj(si / v[i]) - sum) / y[i][i];
            if (type[i] == BusType::PV) vnew *= vset[i] / std::abs(vnew);
            v[i] = vnew;
        }
    }
    return {v};
}

}  // namespace

TEST_CASE("ybus entries for a single reactive branch") {
    const SystemCase sys = parse_case(kTwoBus);
    const auto y = build_ybus(sys);
    CHECK(y(0, 1).imag() == doctest::Approx(10.0));
    CHECK(y(0, 1).real() == doctest::Approx(0.0));
    CHECK(y(0, 0).imag() == doctest::Approx(-10.0));
    CHECK(y(1, 1).imag() == doctest::Approx(-10.0));
}

TEST_CASE("open breakers are excluded from ybus") {
    SystemCase sys = nine_bus();
    SystemCase cut = sys;
    cut.branches.back().breaker_state = BreakerState::Open;
    SystemCase removed = sys;
    removed.branches.pop_back();
    CHECK((build_ybus(cut) - build_ybus(removed)).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("half shunts land on both diagonals") {
    SystemCase sys = parse_case(kTwoBus);
    auto base = build_ybus(sys);
    sys.branches[0].b_shunt = 0.2;
    auto with_shunt = build_ybus(sys);
    CHECK((with_shunt(0, 0) - base(0, 0)).imag() == doctest::Approx(0.1));
    CHECK((with_shunt(1, 1) - base(1, 1)).imag() == doctest::Approx(0.1));
    CHECK((with_shunt(0, 1) - base(0, 1)).imag() == doctest::Approx(0.0));

    // Row sums reduce to the shunt terms: series contributions cancel.
    for (int i = 0; i < 2; ++i)
        CHECK(std::abs(with_shunt.row(i).sum() - Complex(0.0, 0.1)) < 1e-12);
}

TEST_CASE("zero-impedance branch is rejected") {
    SystemCase sys = parse_case(kTwoBus);
    sys.branches[0].x = 0.0;
    CHECK_THROWS_AS(build_ybus(sys), PowerFlowError);
}

TEST_CASE("two-bus solution matches the fixed-point oracle") {
    const SystemCase sys = parse_case(kTwoBus);
    const Complex v2 = two_bus_oracle(0.1, Complex(1.0, 0.0));

    // Frozen oracle values, re-derived on every run.
    CHECK(std::abs(v2) == doctest::Approx(0.99496).epsilon(1e-4));
    CHECK(std::arg(v2) * 180.0 / kPi == doctest::Approx(-5.77).epsilon(1e-2));

    const auto sol = solve_powerflow(sys, 1e-12, 30);
    CHECK(std::abs(sol.vm[1] - std::abs(v2)) < 1e-8);
    CHECK(std::abs(sol.va[1] - std::arg(v2)) < 1e-8);
    CHECK(sol.va[0] == 0.0);
}

TEST_CASE("zero-load case solves flat with zero flows") {
    const char* text = R"(
[SYSTEM]
mva 100
[BUS]
1 230 slack
2 230 PQ
[BRANCH]
1 2 0.0 0.1 0.0
)";
    const auto sys = parse_case(text);
    const auto sol = solve_powerflow(sys);
    CHECK(sol.vm[0] == doctest::Approx(1.0));
    CHECK(sol.vm[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sol.va[1] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(sol.sg_p.empty());
}

TEST_CASE("nine-bus fixture converges quickly and tightly") {
    const auto sys = nine_bus();
    const auto sol = solve_powerflow(sys, 1e-10, 10);
    CHECK(sol.iterations <= 10);
    CHECK(sol.max_mismatch < 1e-8);
}

TEST_CASE("nine-bus solution agrees with an independent Gauss-Seidel solver") {
    const auto sys = nine_bus();
    const auto sol = solve_powerflow(sys, 1e-12, 20);
    const auto gs = gauss_seidel(sys, 6000);
    for (std::size_t i = 0; i < sys.buses.size(); ++i) {
        CHECK(std::abs(gs.v[i]) == doctest::Approx(sol.vm[i]).epsilon(1e-6));
        CHECK(std::arg(gs.v[i]) == doctest::Approx(sol.va[i]).epsilon(1e-6));
    }
}

TEST_CASE("complex power balances to 1e-6") {
    const auto sys = nine_bus();
    const auto sol = solve_powerflow(sys, 1e-12, 20);
    const auto y = build_ybus(sys);
    const int n = static_cast<int>(sys.buses.size());

    Complex total{0.0, 0.0};  // sum of net injections = series + shunt losses
    std::vector<Complex> v(n);
    for (int i = 0; i < n; ++i) v[i] = std::polar(sol.vm[i], sol.va[i]);
    for (int i = 0; i < n; ++i) {
        Complex inj{0.0, 0.0};
        for (int j = 0; j < n; ++j) inj += y(i, j) * v[j];
        total += v[i] * std::conj(inj);
    }

    double gen_p = 0.0, load_p = 0.0;
    for (double p : sol.sg_p) gen_p += p;
    for (double p : sol.gfl_p) gen_p += p;
    for (const auto& ld : sys.loads) load_p += ld.p0;
    CHECK(std::abs(gen_p - load_p - total.real()) < 1e-6);
}

TEST_CASE("solution is invariant under bus reordering") {
    const auto sys = nine_bus();
    const auto sol = solve_powerflow(sys, 1e-12, 20);

    SystemCase shuffled = sys;
    std::mt19937 rng(3);
    std::shuffle(shuffled.buses.begin(), shuffled.buses.end(), rng);
    std::shuffle(shuffled.branches.begin(), shuffled.branches.end(), rng);
    const auto sol2 = solve_powerflow(shuffled, 1e-12, 20);

    for (const auto& bus : sys.buses) {
        const int a = sys.bus_index(bus.id);
        const int b = shuffled.bus_index(bus.id);
        CHECK(sol.vm[a] == doctest::Approx(sol2.vm[b]).epsilon(1e-9));
        CHECK(sol.va[a] == doctest::Approx(sol2.va[b]).epsilon(1e-9));
    }
}

TEST_CASE("snapshot carries flat sources and device targets") {
    const char* flat = R"(
[SYSTEM]
mva 100
[BUS]
1 230 slack
2 230 PQ
[BRANCH]
1 2 0.0 0.1 0.0
)";
    auto sys = parse_case(flat);
    auto snap = snapshot_for_emt(solve_powerflow(sys), sys);
    CHECK(snap.vm[0] == doctest::Approx(1.0));
    CHECK(snap.vm[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(snap.va[1] == doctest::Approx(0.0).epsilon(1e-9));

    const auto loaded = parse_case(kTwoBus);
    const auto snap2 = snapshot_for_emt(solve_powerflow(loaded), loaded);
    CHECK(snap2.load[0].p == doctest::Approx(1.0));
    CHECK(snap2.load[0].q == doctest::Approx(0.0));

    const auto sys9 = nine_bus();
    const auto snap9 = snapshot_for_emt(solve_powerflow(sys9), sys9);
    for (std::size_t k = 0; k < sys9.gfl_plants.size(); ++k) {
        const auto& g = sys9.gfl_plants[k];
        CHECK(snap9.gfl[k].p == doctest::Approx(g.p_ref * g.mva_base / sys9.mva_base));
        CHECK(snap9.gfl[k].q == doctest::Approx(g.q_ref * g.mva_base / sys9.mva_base));
    }
    CHECK(snap9.report(sys9).find("init snapshot") != std::string::npos);
}
