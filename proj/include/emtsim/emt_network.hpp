// Three-phase instantaneous-value nodal solver. Elements are stamped as
// trapezoidal companion conductances; the two half-steps after any topology
// change use backward Euler at dt/2 (same companion conductances) to damp
// switching oscillation.
#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "emtsim/case_model.hpp"

namespace emtsim {

class NetworkError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

using ElementId = int;

enum class ElementKind { Resistor, Inductor, Capacitor, SeriesRL, SeriesRC, Switch, IdealSource };

struct SwitchEvent {
    ElementId element = -1;
    BreakerState state = BreakerState::Closed;
    double time = 0.0;
};

struct FaultSpec {
    int bus = 0;
    double fault_r = 1e-3;  // network units (pu for grid cases)
    double t_on = 0.0;
    double duration = 0.0;
};

class NodalSystem {
public:
    static constexpr int kGround = -1;
    static constexpr double kOpenConductance = 1e-9;
    static constexpr double kClosedConductance = 1e4;
    static constexpr double kSourceConductance = 1e6;

    explicit NodalSystem(double dt);

    double dt() const { return dt_; }
    int add_node();
    int node_count() const { return n_nodes_; }

    ElementId stamp_resistor(int n1, int n2, double r);
    ElementId stamp_inductor(int n1, int n2, double l);
    ElementId stamp_capacitor(int n1, int n2, double c);
    ElementId stamp_series_rl(int n1, int n2, double r, double l);
    ElementId stamp_series_rc(int n1, int n2, double r, double c);
    ElementId stamp_switch(int n1, int n2, BreakerState initial);
    ElementId stamp_ideal_source(int node);

    void set_source_voltage(ElementId id, double e);
    void set_switch(ElementId id, BreakerState state);
    BreakerState switch_state(ElementId id) const;

    // Seeds stored element currents/voltages and node voltages so a run can
    // start in sinusoidal steady state instead of from zero.
    void preset_element(ElementId id, double current, double branch_voltage);
    void seed_voltages(const Eigen::VectorXd& v);

    void add_injection(int node, double current);

    // Advances one dt and returns node voltages at the new time.
    const Eigen::VectorXd& solve_step();

    double voltage(int node) const;
    double element_current(ElementId id) const;
    double element_voltage(ElementId id) const;
    double element_conductance(ElementId id) const;
    ElementKind element_kind(ElementId id) const;
    const Eigen::MatrixXd& conductance_matrix() const { return g_; }

    int refactor_count() const { return refactor_count_; }

private:
    struct Element {
        ElementKind kind;
        int n1, n2;
        double a = 0.0;  // R / L / C / switch r_closed (unused)
        double b = 0.0;  // series L for SeriesRL
        double g = 0.0;  // companion conductance currently stamped
        double i = 0.0;  // current through element, n1 -> n2
        double v = 0.0;  // branch voltage v(n1) - v(n2)
        double e = 0.0;  // source EMF
        BreakerState state = BreakerState::Closed;
    };

    void check_node(int n) const;
    const Element& at(ElementId id) const;
    double switch_g(BreakerState s) const {
        return s == BreakerState::Closed ? kClosedConductance : kOpenConductance;
    }
    void refactorize();
    void half_step_be(double h);

    double dt_;
    int n_nodes_ = 0;
    std::vector<Element> elems_;
    Eigen::MatrixXd g_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    Eigen::VectorXd injections_;
    Eigen::VectorXd v_;
    bool dirty_ = true;
    int cda_steps_ = 0;  // backward-Euler half-steps still owed
    int refactor_count_ = 0;
};

// Maps scenario fault requests onto pre-stamped fault switch elements and
// produces the insert/remove switch events. Rejects overlapping windows on
// the same bus.
class FaultBank {
public:
    void register_path(int bus, std::vector<ElementId> phase_switches);
    bool has_path(int bus) const { return paths_.count(bus) > 0; }
    std::vector<SwitchEvent> apply_fault(const FaultSpec& spec);

private:
    struct Path {
        std::vector<ElementId> elems;
        std::vector<std::pair<double, double>> windows;
    };
    std::map<int, Path> paths_;
};

}  // namespace emtsim
