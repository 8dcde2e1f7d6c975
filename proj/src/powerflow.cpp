#include "emtsim/powerflow.hpp"

#include <cmath>
#include <sstream>

#include "emtsim/control.hpp"

namespace emtsim {

namespace {

struct BusSpec {
    BusType type = BusType::PQ;
    double p = 0.0;      // specified net injection, system base
    double q = 0.0;
    double v_set = 1.0;  // PV / slack magnitude
};

std::vector<BusSpec> assemble_specs(const SystemCase& sys) {
    std::vector<BusSpec> spec(sys.buses.size());
    for (std::size_t i = 0; i < sys.buses.size(); ++i) spec[i].type = sys.buses[i].type;
    for (const auto& sg : sys.sg_plants) {
        auto& s = spec[sys.bus_index(sg.bus)];
        s.p += sg.p_set * sg.mva_base / sys.mva_base;
        s.v_set = sg.v_set;
    }
    for (const auto& g : sys.gfl_plants) {
        auto& s = spec[sys.bus_index(g.bus)];
        s.p += g.p_ref * g.mva_base / sys.mva_base;
        s.q += g.q_ref * g.mva_base / sys.mva_base;
    }
    for (const auto& ld : sys.loads) {
        auto& s = spec[sys.bus_index(ld.bus)];
        s.p -= ld.p0;
        s.q -= ld.q0;
    }
    // OWF plants are disconnected at initialization and contribute nothing.
    return spec;
}

}  // namespace

Eigen::MatrixXcd build_ybus(const SystemCase& sys) {
    const auto n = static_cast<Eigen::Index>(sys.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : sys.branches) {
        if (br.breaker_state != BreakerState::Closed) continue;
        if (br.r == 0.0 && br.x == 0.0)
            throw PowerFlowError("zero-impedance branch " + std::to_string(br.from) + "-" +
                                 std::to_string(br.to));
        const int i = sys.bus_index(br.from);
        const int j = sys.bus_index(br.to);
        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex half_shunt(0.0, br.b_shunt / 2.0);
        y(i, i) += ys + half_shunt;
        y(j, j) += ys + half_shunt;
        y(i, j) -= ys;
        y(j, i) -= ys;
    }
    return y;
}

PowerFlowSolution solve_powerflow(const SystemCase& sys, double tol, int max_iter) {
    const auto n = static_cast<int>(sys.buses.size());
    const Eigen::MatrixXcd ybus = build_ybus(sys);
    const auto spec = assemble_specs(sys);

    int slack = -1;
    for (int i = 0; i < n; ++i)
        if (spec[i].type == BusType::Slack) slack = i;
    if (slack < 0) throw PowerFlowError("case has no slack bus");

    Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
        if (spec[i].type != BusType::PQ) vm(i) = spec[i].v_set;

    // Unknown ordering: angles at all non-slack buses, then magnitudes at PQ buses.
    std::vector<int> ang_idx, mag_idx;
    for (int i = 0; i < n; ++i) {
        if (i != slack) ang_idx.push_back(i);
        if (spec[i].type == BusType::PQ) mag_idx.push_back(i);
    }
    const int na = static_cast<int>(ang_idx.size());
    const int nm = static_cast<int>(mag_idx.size());

    auto injections = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
        p.setZero(n);
        q.setZero(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double g = ybus(i, j).real();
                const double b = ybus(i, j).imag();
                const double th = va(i) - va(j);
                p(i) += vm(i) * vm(j) * (g * std::cos(th) + b * std::sin(th));
                q(i) += vm(i) * vm(j) * (g * std::sin(th) - b * std::cos(th));
            }
        }
    };

    PowerFlowSolution sol;
    Eigen::VectorXd p_calc(n), q_calc(n);
    for (int iter = 0; iter <= max_iter; ++iter) {
        injections(p_calc, q_calc);

        Eigen::VectorXd rhs(na + nm);
        for (int k = 0; k < na; ++k) rhs(k) = spec[ang_idx[k]].p - p_calc(ang_idx[k]);
        for (int k = 0; k < nm; ++k) rhs(na + k) = spec[mag_idx[k]].q - q_calc(mag_idx[k]);
        const double mismatch = rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0;

        if (mismatch <= tol) {
            sol.iterations = iter;
            sol.max_mismatch = mismatch;
            break;
        }
        if (iter == max_iter)
            throw PowerFlowError("power flow diverged: mismatch " + std::to_string(mismatch) +
                                 " after " + std::to_string(max_iter) + " iterations");

        Eigen::MatrixXd jac(na + nm, na + nm);
        for (int r = 0; r < na; ++r) {
            const int i = ang_idx[r];
            for (int c = 0; c < na; ++c) {
                const int j = ang_idx[c];
                if (i == j) {
                    jac(r, c) = -q_calc(i) - ybus(i, i).imag() * vm(i) * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(r, c) = vm(i) * vm(j) *
                                (ybus(i, j).real() * std::sin(th) - ybus(i, j).imag() * std::cos(th));
                }
            }
            for (int c = 0; c < nm; ++c) {
                const int j = mag_idx[c];
                if (i == j) {
                    jac(r, na + c) = p_calc(i) / vm(i) + ybus(i, i).real() * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(r, na + c) = vm(i) * (ybus(i, j).real() * std::cos(th) +
                                              ybus(i, j).imag() * std::sin(th));
                }
            }
        }
        for (int r = 0; r < nm; ++r) {
            const int i = mag_idx[r];
            for (int c = 0; c < na; ++c) {
                const int j = ang_idx[c];
                if (i == j) {
                    jac(na + r, c) = p_calc(i) - ybus(i, i).real() * vm(i) * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(na + r, c) = -vm(i) * vm(j) * (ybus(i, j).real() * std::cos(th) +
                                                       ybus(i, j).imag() * std::sin(th));
                }
            }
            for (int c = 0; c < nm; ++c) {
                const int j = mag_idx[c];
                if (i == j) {
                    jac(na + r, na + c) = q_calc(i) / vm(i) - ybus(i, i).imag() * vm(i);
                } else {
                    const double th = va(i) - va(j);
                    jac(na + r, na + c) = vm(i) * (ybus(i, j).real() * std::sin(th) -
                                                   ybus(i, j).imag() * std::cos(th));
                }
            }
        }

        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) throw PowerFlowError("singular Jacobian");
        const Eigen::VectorXd dx = lu.solve(rhs);
        for (int k = 0; k < na; ++k) va(ang_idx[k]) += dx(k);
        for (int k = 0; k < nm; ++k) vm(mag_idx[k]) += dx(na + k);
    }

    sol.vm.assign(vm.data(), vm.data() + n);
    sol.va.assign(va.data(), va.data() + n);

    // Attribute bus-level results to devices: dispatched values where they were
    // inputs, solved values at the slack and for PV-bus reactive power.
    injections(p_calc, q_calc);
    sol.sg_p.resize(sys.sg_plants.size());
    sol.sg_q.resize(sys.sg_plants.size());
    for (std::size_t k = 0; k < sys.sg_plants.size(); ++k) {
        const auto& sg = sys.sg_plants[k];
        const int i = sys.bus_index(sg.bus);
        double p_other = 0.0, q_other = 0.0;
        for (const auto& g : sys.gfl_plants)
            if (g.bus == sg.bus) {
                p_other += g.p_ref * g.mva_base / sys.mva_base;
                q_other += g.q_ref * g.mva_base / sys.mva_base;
            }
        double p_load = 0.0, q_load = 0.0;
        for (const auto& ld : sys.loads)
            if (ld.bus == sg.bus) {
                p_load += ld.p0;
                q_load += ld.q0;
            }
        sol.sg_p[k] = p_calc(i) + p_load - p_other;
        sol.sg_q[k] = q_calc(i) + q_load - q_other;
    }
    sol.gfl_p.resize(sys.gfl_plants.size());
    sol.gfl_q.resize(sys.gfl_plants.size());
    for (std::size_t k = 0; k < sys.gfl_plants.size(); ++k) {
        sol.gfl_p[k] = sys.gfl_plants[k].p_ref * sys.gfl_plants[k].mva_base / sys.mva_base;
        sol.gfl_q[k] = sys.gfl_plants[k].q_ref * sys.gfl_plants[k].mva_base / sys.mva_base;
    }
    return sol;
}

InitSnapshot snapshot_for_emt(const PowerFlowSolution& sol, const SystemCase& sys) {
    InitSnapshot snap;
    snap.vm = sol.vm;
    snap.va = sol.va;
    for (std::size_t k = 0; k < sys.sg_plants.size(); ++k)
        snap.sg.push_back({sol.sg_p[k], sol.sg_q[k]});
    for (std::size_t k = 0; k < sys.gfl_plants.size(); ++k)
        snap.gfl.push_back({sol.gfl_p[k], sol.gfl_q[k]});
    for (const auto& ld : sys.loads) snap.load.push_back({ld.p0, ld.q0});
    snap.owf.assign(sys.owf_plants.size(), DeviceTarget{});
    return snap;
}

std::string InitSnapshot::report(const SystemCase& sys) const {
    std::ostringstream os;
    os.precision(9);
    os << "[init snapshot]\n";
    for (std::size_t i = 0; i < vm.size(); ++i)
        os << "bus " << sys.buses[i].id << " V " << vm[i] << " angle_deg "
           << va[i] * 180.0 / kPi << "\n";
    for (std::size_t k = 0; k < sg.size(); ++k)
        os << "sg " << sys.sg_plants[k].bus << " P " << sg[k].p << " Q " << sg[k].q << "\n";
    for (std::size_t k = 0; k < gfl.size(); ++k)
        os << "gfl " << sys.gfl_plants[k].bus << " P " << gfl[k].p << " Q " << gfl[k].q << "\n";
    for (std::size_t k = 0; k < load.size(); ++k)
        os << "load " << sys.loads[k].bus << " P " << load[k].p << " Q " << load[k].q << "\n";
    os << "[end init snapshot]\n";
    return os.str();
}

}  // namespace emtsim
