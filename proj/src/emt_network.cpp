#include "emtsim/emt_network.hpp"

#include <cmath>

namespace emtsim {

NodalSystem::NodalSystem(double dt) : dt_(dt) {
    if (dt <= 0.0) throw NetworkError("timestep must be positive");
}

int NodalSystem::add_node() {
    dirty_ = true;
    return n_nodes_++;
}

void NodalSystem::check_node(int n) const {
    if (n != kGround && (n < 0 || n >= n_nodes_)) throw NetworkError("node does not exist");
}

const NodalSystem::Element& NodalSystem::at(ElementId id) const {
    if (id < 0 || id >= static_cast<int>(elems_.size())) throw NetworkError("unknown element");
    return elems_[id];
}

ElementId NodalSystem::stamp_resistor(int n1, int n2, double r) {
    check_node(n1);
    check_node(n2);
    if (r <= 0.0) throw NetworkError("resistance must be positive");
    Element e{ElementKind::Resistor, n1, n2};
    e.a = r;
    e.g = 1.0 / r;
    elems_.push_back(e);
    dirty_ = true;
    return static_cast<ElementId>(elems_.size() - 1);
}

ElementId NodalSystem::stamp_inductor(int n1, int n2, double l) {
    check_node(n1);
    check_node(n2);
    if (l <= 0.0) throw NetworkError("inductance must be positive");
    Element e{ElementKind::Inductor, n1, n2};
    e.a = l;
    e.g = dt_ / (2.0 * l);
    elems_.push_back(e);
    dirty_ = true;
    return static_cast<ElementId>(elems_.size() - 1);
}

ElementId NodalSystem::stamp_capacitor(int n1, int n2, double c) {
    check_node(n1);
    check_node(n2);
    if (c <= 0.0) throw NetworkError("capacitance must be positive");
    Element e{ElementKind::Capacitor, n1, n2};
    e.a = c;
    e.g = 2.0 * c / dt_;
    elems_.push_back(e);
    dirty_ = true;
    return static_cast<ElementId>(elems_.size() - 1);
}

ElementId NodalSystem::stamp_series_rl(int n1, int n2, double r, double l) {
    check_node(n1);
    check_node(n2);
    if (r < 0.0 || l <= 0.0) throw NetworkError("series RL needs r >= 0 and l > 0");
    Element e{ElementKind::SeriesRL, n1, n2};
    e.a = r;
    e.b = l;
    e.g = 1.0 / (r + 2.0 * l / dt_);
    elems_.push_back(e);
    dirty_ = true;
    return static_cast<ElementId>(elems_.size() - 1);
}

ElementId NodalSystem::stamp_series_rc(int n1, int n2, double r, double c) {
    check_node(n1);
    check_node(n2);
    if (r <= 0.0 || c <= 0.0) throw NetworkError("series RC needs r > 0 and c > 0");
    Element e{ElementKind::SeriesRC, n1, n2};
    e.a = r;
    e.b = c;
    e.g = 1.0 / (r + dt_ / (2.0 * c));
    elems_.push_back(e);
    dirty_ = true;
    return static_cast<ElementId>(elems_.size() - 1);
}

ElementId NodalSystem::stamp_switch(int n1, int n2, BreakerState initial) {
    check_node(n1);
    check_node(n2);
    Element e{ElementKind::Switch, n1, n2};
    e.state = initial;
    e.g = switch_g(initial);
    elems_.push_back(e);
    dirty_ = true;
    return static_cast<ElementId>(elems_.size() - 1);
}

ElementId NodalSystem::stamp_ideal_source(int node) {
    check_node(node);
    if (node == kGround) throw NetworkError("source node cannot be ground");
    Element e{ElementKind::IdealSource, node, kGround};
    e.g = kSourceConductance;
    elems_.push_back(e);
    dirty_ = true;
    return static_cast<ElementId>(elems_.size() - 1);
}

void NodalSystem::set_source_voltage(ElementId id, double e) {
    if (at(id).kind != ElementKind::IdealSource) throw NetworkError("element is not a source");
    elems_[id].e = e;
}

BreakerState NodalSystem::switch_state(ElementId id) const {
    if (at(id).kind != ElementKind::Switch) throw NetworkError("element is not a switch");
    return elems_[id].state;
}

void NodalSystem::set_switch(ElementId id, BreakerState state) {
    if (at(id).kind != ElementKind::Switch) throw NetworkError("element is not a switch");
    if (elems_[id].state == state) return;  // no-op keeps the factorization
    elems_[id].state = state;
    elems_[id].g = switch_g(state);
    dirty_ = true;
}

void NodalSystem::preset_element(ElementId id, double current, double branch_voltage) {
    at(id);
    elems_[id].i = current;
    elems_[id].v = branch_voltage;
}

void NodalSystem::seed_voltages(const Eigen::VectorXd& v) {
    if (v.size() != n_nodes_) throw NetworkError("seed vector size mismatch");
    v_ = v;
}

void NodalSystem::add_injection(int node, double current) {
    check_node(node);
    if (injections_.size() != n_nodes_) injections_ = Eigen::VectorXd::Zero(n_nodes_);
    if (node != kGround) injections_(node) += current;
}

void NodalSystem::refactorize() {
    g_ = Eigen::MatrixXd::Zero(n_nodes_, n_nodes_);
    for (const auto& e : elems_) {
        if (e.n1 != kGround) g_(e.n1, e.n1) += e.g;
        if (e.n2 != kGround) g_(e.n2, e.n2) += e.g;
        if (e.n1 != kGround && e.n2 != kGround) {
            g_(e.n1, e.n2) -= e.g;
            g_(e.n2, e.n1) -= e.g;
        }
    }
    lu_.compute(g_);
    ++refactor_count_;
    dirty_ = false;
    // Topology changes mid-run get two backward-Euler half-steps to damp the
    // switching discontinuity; the initial factorization does not.
    if (refactor_count_ > 1) cda_steps_ = 2;
    if (v_.size() != n_nodes_) v_ = Eigen::VectorXd::Zero(n_nodes_);
}

// One backward-Euler substep of length h = dt/2. The companion conductances
// coincide with the trapezoidal ones at this h, so the factorization is reused.
void NodalSystem::half_step_be(double h) {
    Eigen::VectorXd rhs = injections_;
    std::vector<double> hist(elems_.size(), 0.0);
    for (std::size_t k = 0; k < elems_.size(); ++k) {
        auto& e = elems_[k];
        switch (e.kind) {
            case ElementKind::Inductor: hist[k] = e.i; break;
            case ElementKind::SeriesRL: hist[k] = e.g * (e.b / h) * e.i; break;
            case ElementKind::Capacitor: hist[k] = -e.g * e.v; break;
            case ElementKind::SeriesRC: hist[k] = -e.g * (e.v - e.a * e.i); break;
            case ElementKind::IdealSource:
                if (e.n1 != kGround) rhs(e.n1) += e.g * e.e;
                continue;
            default: continue;
        }
        if (e.n1 != kGround) rhs(e.n1) -= hist[k];
        if (e.n2 != kGround) rhs(e.n2) += hist[k];
    }

    v_ = lu_.solve(rhs);
    if (!v_.allFinite()) throw NetworkError("singular network (floating subnetwork?)");

    for (std::size_t k = 0; k < elems_.size(); ++k) {
        auto& e = elems_[k];
        const double v1 = e.n1 == kGround ? 0.0 : v_(e.n1);
        const double v2 = e.n2 == kGround ? 0.0 : v_(e.n2);
        switch (e.kind) {
            case ElementKind::Inductor:
            case ElementKind::SeriesRL:
            case ElementKind::Capacitor:
            case ElementKind::SeriesRC:
                e.v = v1 - v2;
                e.i = e.g * e.v + hist[k];
                break;
            case ElementKind::Resistor:
            case ElementKind::Switch:
                e.v = v1 - v2;
                e.i = e.g * e.v;
                break;
            case ElementKind::IdealSource:
                e.v = v1;
                e.i = e.g * (e.e - v1);
                break;
        }
    }
}

const Eigen::VectorXd& NodalSystem::solve_step() {
    if (n_nodes_ == 0) throw NetworkError("empty network");
    if (injections_.size() != n_nodes_) injections_ = Eigen::VectorXd::Zero(n_nodes_);
    if (dirty_) refactorize();

    if (cda_steps_ > 0) {
        half_step_be(dt_ / 2.0);
        half_step_be(dt_ / 2.0);
        cda_steps_ -= 2;
        injections_.setZero();
        return v_;
    }

    Eigen::VectorXd rhs = injections_;
    // Histories computed from stored state at t; elements then updated to t+dt.
    std::vector<double> hist(elems_.size(), 0.0);
    for (std::size_t k = 0; k < elems_.size(); ++k) {
        auto& e = elems_[k];
        switch (e.kind) {
            case ElementKind::Inductor: hist[k] = e.i + e.g * e.v; break;
            case ElementKind::SeriesRL:
                hist[k] = e.g * (e.v + (2.0 * e.b / dt_ - e.a) * e.i);
                break;
            case ElementKind::Capacitor: hist[k] = -(e.i + e.g * e.v); break;
            case ElementKind::SeriesRC:
                hist[k] = -e.g * (e.v - (e.a - dt_ / (2.0 * e.b)) * e.i);
                break;
            case ElementKind::IdealSource:
                if (e.n1 != kGround) rhs(e.n1) += e.g * e.e;
                continue;
            default: continue;
        }
        if (e.n1 != kGround) rhs(e.n1) -= hist[k];
        if (e.n2 != kGround) rhs(e.n2) += hist[k];
    }

    v_ = lu_.solve(rhs);
    if (!v_.allFinite()) throw NetworkError("singular network (floating subnetwork?)");

    for (std::size_t k = 0; k < elems_.size(); ++k) {
        auto& e = elems_[k];
        const double v1 = e.n1 == kGround ? 0.0 : v_(e.n1);
        const double v2 = e.n2 == kGround ? 0.0 : v_(e.n2);
        switch (e.kind) {
            case ElementKind::Inductor:
            case ElementKind::SeriesRL:
            case ElementKind::Capacitor:
            case ElementKind::SeriesRC:
                e.v = v1 - v2;
                e.i = e.g * e.v + hist[k];
                break;
            case ElementKind::Resistor:
            case ElementKind::Switch:
                e.v = v1 - v2;
                e.i = e.g * e.v;
                break;
            case ElementKind::IdealSource:
                e.v = v1;
                e.i = e.g * (e.e - v1);
                break;
        }
    }
    injections_.setZero();
    return v_;
}

double NodalSystem::voltage(int node) const {
    check_node(node);
    if (node == kGround) return 0.0;
    return v_.size() == n_nodes_ ? v_(node) : 0.0;
}

double NodalSystem::element_current(ElementId id) const { return at(id).i; }
double NodalSystem::element_voltage(ElementId id) const { return at(id).v; }
double NodalSystem::element_conductance(ElementId id) const { return at(id).g; }
ElementKind NodalSystem::element_kind(ElementId id) const { return at(id).kind; }

void FaultBank::register_path(int bus, std::vector<ElementId> phase_switches) {
    paths_[bus] = Path{std::move(phase_switches), {}};
}

std::vector<SwitchEvent> FaultBank::apply_fault(const FaultSpec& spec) {
    if (spec.fault_r <= 0.0) throw NetworkError("fault resistance must be positive");
    if (spec.duration <= 0.0) throw NetworkError("fault duration must be positive");
    auto it = paths_.find(spec.bus);
    if (it == paths_.end())
        throw NetworkError("no fault path registered at bus " + std::to_string(spec.bus));

    const double t0 = spec.t_on;
    const double t1 = spec.t_on + spec.duration;
    for (const auto& [w0, w1] : it->second.windows)
        if (t0 < w1 && w0 < t1)
            throw NetworkError("overlapping fault on bus " + std::to_string(spec.bus));
    it->second.windows.emplace_back(t0, t1);

    std::vector<SwitchEvent> events;
    for (ElementId el : it->second.elems) {
        events.push_back({el, BreakerState::Closed, t0});
        events.push_back({el, BreakerState::Open, t1});
    }
    return events;
}

}  // namespace emtsim
