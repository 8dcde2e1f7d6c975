#include "emtsim/scenario_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "emtsim/control.hpp"
#include "emtsim/gfl_ibr.hpp"
#include "emtsim/machines.hpp"
#include "emtsim/owf.hpp"

namespace emtsim {

double apply_wind_profile(const std::vector<WindPoint>& points, double t) {
    if (points.empty()) throw ScenarioError("empty wind profile");
    if (t <= points.front().t) return points.front().speed;
    if (t >= points.back().t) return points.back().speed;
    for (std::size_t k = 1; k < points.size(); ++k) {
        if (t <= points[k].t) {
            const auto& a = points[k - 1];
            const auto& b = points[k];
            const double f = (t - a.t) / (b.t - a.t);
            return a.speed + f * (b.speed - a.speed);
        }
    }
    return points.back().speed;
}

int Recording::column(const std::string& name) const {
    for (std::size_t k = 0; k < channels.size(); ++k)
        if (channels[k] == name) return static_cast<int>(k);
    return -1;
}

double Recording::at(const std::string& name, double t) const {
    const int col = column(name);
    if (col < 0 || time.empty()) throw ScenarioError("unknown channel " + name);
    const auto it = std::lower_bound(time.begin(), time.end(), t);
    std::size_t idx = it == time.end() ? time.size() - 1 : it - time.begin();
    if (idx > 0 && std::abs(time[idx - 1] - t) < std::abs(time[idx] - t)) --idx;
    return data[col][idx];
}

// ---------------------------------------------------------------------------
// Scenario file parsing
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        if (tok[0] == '#') break;
        out.push_back(tok);
    }
    return out;
}

double num(const std::string& tok, int line) {
    try {
        return std::stod(tok);
    } catch (const std::exception&) {
        throw ScenarioError("line " + std::to_string(line) + ": expected a number, got '" + tok +
                            "'");
    }
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::string& base_dir) {
    Scenario sc;
    std::istringstream stream{std::string(text)};
    std::string raw, section;
    int line_no = 0;
    int wind_plant = -1;
    bool have_case = false;

    while (std::getline(stream, raw)) {
        ++line_no;
        auto toks = tokenize(raw);
        if (toks.empty()) continue;
        if (toks[0].front() == '[') {
            section = toks[0].substr(1, toks[0].size() - 2);
            wind_plant = -1;
            continue;
        }
        auto err = [&](const std::string& m) {
            throw ScenarioError("line " + std::to_string(line_no) + ": " + m);
        };

        if (section == "SCENARIO") {
            if (toks.size() < 2) err("expected 'key value'");
            const std::string& k = toks[0];
            if (k == "case") {
                std::filesystem::path p(toks[1]);
                if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
                sc.case_path = p.string();
                sc.sys = load_case(sc.case_path);
                have_case = true;
            } else if (k == "dt") {
                sc.dt = num(toks[1], line_no);
            } else if (k == "t_end") {
                sc.t_end = num(toks[1], line_no);
            } else if (k == "record_dt") {
                sc.record_dt = num(toks[1], line_no);
            } else if (k == "chopper") {
                sc.chopper_override = num(toks[1], line_no) != 0.0;
            } else if (k == "default_wind") {
                sc.default_wind = num(toks[1], line_no);
            } else {
                err("unknown [SCENARIO] key '" + k + "'");
            }
        } else if (section == "INIT") {
            if (toks.size() != 2) err("expected 'key value'");
            const std::string& k = toks[0];
            const double v = num(toks[1], line_no);
            if (k == "exciters") sc.init.exciters = v;
            else if (k == "governors") sc.init.governors = v;
            else if (k == "zip_swap") sc.init.zip_swap = v;
            else if (k == "ibr_ramp_start") sc.init.ibr_ramp_start = v;
            else if (k == "ibr_ramp_end") sc.init.ibr_ramp_end = v;
            else if (k == "ibr_swap") sc.init.ibr_swap = v;
            else if (k == "owf_t0") sc.owf_t0 = v;
            else if (k == "owf_plant_spacing") sc.owf_plant_spacing = v;
            else if (k == "owf_stage_spacing") sc.owf_stage_spacing = v;
            else err("unknown [INIT] key '" + k + "'");
        } else if (section == "WIND") {
            if (toks[0] == "plant") {
                if (toks.size() != 2) err("expected 'plant <index>'");
                wind_plant = static_cast<int>(num(toks[1], line_no));
                if (wind_plant < 0) err("plant index must be nonnegative");
                if (static_cast<int>(sc.wind.size()) <= wind_plant)
                    sc.wind.resize(wind_plant + 1);
            } else {
                if (wind_plant < 0) err("wind points before any 'plant' line");
                if (toks.size() != 2) err("expected 'time speed'");
                sc.wind[wind_plant].push_back({num(toks[0], line_no), num(toks[1], line_no)});
            }
        } else if (section == "FAULT") {
            if (toks.size() != 4) err("[FAULT] record is: bus t_on duration r");
            FaultSpec f;
            f.bus = static_cast<int>(num(toks[0], line_no));
            f.t_on = num(toks[1], line_no);
            f.duration = num(toks[2], line_no);
            f.fault_r = num(toks[3], line_no);
            sc.faults.push_back(f);
        } else if (section == "BREAKER") {
            if (toks.size() != 4) err("[BREAKER] record is: from to time state");
            BranchEvent ev;
            ev.from = static_cast<int>(num(toks[0], line_no));
            ev.to = static_cast<int>(num(toks[1], line_no));
            ev.time = num(toks[2], line_no);
            ev.state = toks[3] == "open" ? BreakerState::Open : BreakerState::Closed;
            sc.breaker_events.push_back(ev);
        } else if (section == "RECORD") {
            if (toks[0] == "channels") {
                for (std::size_t k = 1; k < toks.size(); ++k)
                    if (toks[k] != "default") sc.channels.push_back(toks[k]);
            } else {
                err("unknown [RECORD] key '" + toks[0] + "'");
            }
        } else {
            err("record outside a known section");
        }
    }
    if (!have_case) throw ScenarioError("scenario does not name a case file");

    // Wind profiles must be time-sorted; events must fit the run.
    for (const auto& prof : sc.wind)
        for (std::size_t k = 1; k < prof.size(); ++k)
            if (prof[k].t < prof[k - 1].t) throw ScenarioError("wind profile is not time-sorted");
    for (const auto& f : sc.faults)
        if (f.t_on + f.duration >= sc.t_end)
            throw ScenarioError("fault extends past t_end");
    for (const auto& ev : sc.breaker_events)
        if (ev.time >= sc.t_end) throw ScenarioError("breaker event past t_end");
    if (sc.dt <= 0.0) throw ScenarioError("dt must be positive");
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ScenarioError("cannot open scenario file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_scenario(buf.str(), std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Grid assembly and the simulation loop
// ---------------------------------------------------------------------------

namespace {

constexpr double kLoadVoltageFloor = 0.5;  // pu; below this the I/P load parts
                                           // scale down like impedances
constexpr double kShuntDamping = 0.05;     // series loss of charging shunts,
                                           // as a share of their 60 Hz reactance

struct PresetEntry {
    ElementId elem;
    Complex i_phasor;
    Complex v_phasor;
    int phase;
};

struct SgRig {
    const SgPlant* plant = nullptr;
    int bus = -1;
    SgState st;
    std::array<ElementId, 3> src{}, src_sw{}, emf{}, stator{};
    Complex v_snap, e_snap;
    double i_scale = 1.0;  // system amps per machine-pu amp
};

struct GflRig {
    const GflPlant* plant = nullptr;
    int bus = -1;
    GflState st;
    std::array<ElementId, 3> src{}, src_sw{};
    Complex v_snap;
    double target_p = 0.0, target_q = 0.0;  // own base
    double ramp_rate = 0.0;
    bool ramping = false;
    double p_out = 0.0;  // system base, for recording
};

struct OwfRig {
    OwfPlant plant;  // copy carrying any scenario parameter overrides
    int poi_bus = -1;
    OwfState st;
    std::array<ElementId, 3> sw_poi{}, sw_plant{}, coll{};
    std::array<int, 3> term_nodes{};
    std::vector<WindPoint> profile;
    double wind = 0.0;
    double p_poi = 0.0;  // system base
};

struct LoadRig {
    const ZipLoad* load = nullptr;
    int bus = -1;
    bool has_z = false;
    bool z_has_cap = false;
    std::array<ElementId, 3> z_sw{}, z_main{}, z_cap{};
    Complex z_imp;              // impedance of the Z share
    Complex s_total, s_i, s_p;  // system base
    Complex v_snap;
    Complex v_hat;  // synchronous-frame filtered bus phasor driving the draw
    bool swapped = false;
    Phases draw{};  // last injected draw, for the recorder
    double p_drawn = 0.0;
};

class Simulator {
public:
    Simulator(const Scenario& sc) : sc_(sc), sys_(sc.sys), net_(sc.dt) {}

    Recording run();

private:
    void build();
    void schedule_events();
    void apply_action(const ScheduleAction& a, double t);
    void step_devices(double t_next);
    void setup_channels();
    void sample(double t, Recording& rec);
    Phases node_voltages(const std::array<int, 3>& nodes) const {
        return {net_.voltage(nodes[0]), net_.voltage(nodes[1]), net_.voltage(nodes[2])};
    }
    Phases bus_voltages(int bus_idx) const { return node_voltages(bus_nodes_[bus_idx]); }
    Complex bus_phasor(int bus_idx) const {
        return std::polar(snapshot_.vm[bus_idx], snapshot_.va[bus_idx]);
    }

    const Scenario& sc_;
    const SystemCase& sys_;
    NodalSystem net_;
    InitSnapshot snapshot_;
    PowerFlowSolution pf_;
    double w0_ = 0.0;

    std::vector<std::array<int, 3>> bus_nodes_;
    std::vector<SgRig> sgs_;
    std::vector<GflRig> gfls_;
    std::vector<OwfRig> owfs_;
    std::vector<LoadRig> loads_;
    std::vector<PresetEntry> presets_;
    FaultBank faults_;
    std::map<std::pair<int, int>, std::array<ElementId, 3>> branch_switches_;

    struct TimedEvent {
        double time;
        int order;  // stable tiebreak
        std::function<void(double)> fire;
        std::string description;
    };
    std::vector<TimedEvent> events_;
    std::vector<AppliedEvent> applied_;

    std::vector<RmsWindow> bus_rms_;
    std::vector<std::string> channel_names_;
    std::vector<std::function<double()>> channel_fns_;
};

void Simulator::build() {
    w0_ = sys_.omega0();
    const double s_sys = sys_.mva_base;

    bus_nodes_.resize(sys_.buses.size());
    for (auto& nodes : bus_nodes_)
        for (int ph = 0; ph < 3; ++ph) nodes[ph] = net_.add_node();

    // Branches as per-phase pi sections; a series switch is inserted only
    // where the breaker starts open or a scenario event drives it.
    for (std::size_t b = 0; b < sys_.branches.size(); ++b) {
        const auto& br = sys_.branches[b];
        const int fi = sys_.bus_index(br.from);
        const int ti = sys_.bus_index(br.to);
        bool needs_switch = br.breaker_state == BreakerState::Open;
        for (const auto& ev : sc_.breaker_events)
            if (ev.from == br.from && ev.to == br.to) needs_switch = true;

        const Complex z(br.r, br.x);
        const Complex v_from = bus_phasor(fi), v_to = bus_phasor(ti);
        const Complex i_ser =
            br.breaker_state == BreakerState::Closed ? (v_from - v_to) / z : Complex{0.0, 0.0};

        for (int ph = 0; ph < 3; ++ph) {
            int left = bus_nodes_[fi][ph];
            if (needs_switch) {
                const int aux = net_.add_node();
                const ElementId sw = net_.stamp_switch(left, aux, br.breaker_state);
                if (ph == 0) branch_switches_[{br.from, br.to}] = {};
                branch_switches_[{br.from, br.to}][ph] = sw;
                left = aux;
            }
            ElementId ser;
            if (br.x > 0.0)
                ser = net_.stamp_series_rl(left, bus_nodes_[ti][ph], br.r, br.x / w0_);
            else
                ser = net_.stamp_resistor(left, bus_nodes_[ti][ph], br.r);
            presets_.push_back({ser, i_ser, v_from - v_to, ph});

            if (br.b_shunt > 0.0) {
                // Charging capacitance with a small series loss; an undamped
                // shunt leaves the line LC modes ringing against the stepwise
                // converter injections.
                const double c = br.b_shunt / (2.0 * w0_);
                const double r_d = kShuntDamping * 2.0 / (br.b_shunt);
                const Complex y = 1.0 / Complex(r_d, -2.0 / br.b_shunt);
                const ElementId c1 =
                    net_.stamp_series_rc(bus_nodes_[fi][ph], NodalSystem::kGround, r_d, c);
                const ElementId c2 =
                    net_.stamp_series_rc(bus_nodes_[ti][ph], NodalSystem::kGround, r_d, c);
                presets_.push_back({c1, v_from * y, v_from, ph});
                presets_.push_back({c2, v_to * y, v_to, ph});
            } else if (br.b_shunt < 0.0) {
                const double l = 1.0 / (-br.b_shunt / 2.0 * w0_);
                const ElementId l1 = net_.stamp_inductor(bus_nodes_[fi][ph], NodalSystem::kGround, l);
                const ElementId l2 = net_.stamp_inductor(bus_nodes_[ti][ph], NodalSystem::kGround, l);
                presets_.push_back({l1, v_from * Complex(0, br.b_shunt / 2.0), v_from, ph});
                presets_.push_back({l2, v_to * Complex(0, br.b_shunt / 2.0), v_to, ph});
            }
        }
    }

    // Synchronous plants: an ideal init source behind a breaker pins the bus;
    // the machine EMF drives a stamped stator branch from t = 0 with its
    // current preset, so the 0.5 s handoff is seamless.
    for (std::size_t k = 0; k < sys_.sg_plants.size(); ++k) {
        const auto& plant = sys_.sg_plants[k];
        SgRig rig;
        rig.plant = &plant;
        rig.bus = sys_.bus_index(plant.bus);
        rig.v_snap = bus_phasor(rig.bus);
        rig.i_scale = plant.mva_base / s_sys;

        const auto init = init_sg_from_snapshot(plant, rig.v_snap,
                                                Complex(snapshot_.sg[k].p, snapshot_.sg[k].q), s_sys);
        rig.st = init.state;
        rig.e_snap = init.e_if;

        const double ra_sys = plant.ra * s_sys / plant.mva_base;
        const double xp_sys = plant.xd_p * s_sys / plant.mva_base;
        const Complex i_sys = init.i_machine * rig.i_scale;
        for (int ph = 0; ph < 3; ++ph) {
            const int src_node = net_.add_node();
            rig.src[ph] = net_.stamp_ideal_source(src_node);
            rig.src_sw[ph] = net_.stamp_switch(src_node, bus_nodes_[rig.bus][ph], BreakerState::Closed);

            const int emf_node = net_.add_node();
            rig.emf[ph] = net_.stamp_ideal_source(emf_node);
            rig.stator[ph] =
                net_.stamp_series_rl(emf_node, bus_nodes_[rig.bus][ph], ra_sys, xp_sys / w0_);
            presets_.push_back({rig.stator[ph], i_sys, rig.e_snap - rig.v_snap, ph});
        }
        sgs_.push_back(std::move(rig));
    }

    // Grid-following plants: init source behind a breaker plus the controlled
    // current injection; references start at zero and ramp to the snapshot.
    for (std::size_t k = 0; k < sys_.gfl_plants.size(); ++k) {
        const auto& plant = sys_.gfl_plants[k];
        GflRig rig;
        rig.plant = &plant;
        rig.bus = sys_.bus_index(plant.bus);
        rig.v_snap = bus_phasor(rig.bus);
        rig.target_p = plant.p_ref;
        rig.target_q = plant.q_ref;
        rig.st.pll.theta = wrap_angle(std::arg(rig.v_snap));
        for (int ph = 0; ph < 3; ++ph) {
            const int src_node = net_.add_node();
            rig.src[ph] = net_.stamp_ideal_source(src_node);
            rig.src_sw[ph] = net_.stamp_switch(src_node, bus_nodes_[rig.bus][ph], BreakerState::Closed);
        }
        gfls_.push_back(std::move(rig));
    }

    // Wind plants: POI breaker, collector, plant switch, converter terminal
    // with a high-ohmic shunt keeping the disconnected island well-posed.
    for (std::size_t k = 0; k < sys_.owf_plants.size(); ++k) {
        OwfRig rig;
        rig.plant = sys_.owf_plants[k];
        if (sc_.chopper_override) rig.plant.params.chopper_enabled = *sc_.chopper_override;
        rig.poi_bus = sys_.bus_index(rig.plant.poi_bus);
        rig.plant.params.v_poi_ref = snapshot_.vm[rig.poi_bus];
        const auto& plant = rig.plant;
        rig.st.gsc = make_gsc(plant.params);
        rig.st.rsc = make_rsc(plant.params);
        rig.st.link = make_dclink(plant.params);
        if (k < sc_.wind.size() && !sc_.wind[k].empty()) rig.profile = sc_.wind[k];
        else rig.profile = {{0.0, sc_.default_wind}};
        rig.wind = apply_wind_profile(rig.profile, 0.0);

        const double scale = s_sys / plant.mva_base();
        const double r_sys = plant.collector_r * scale;
        const double x_sys = plant.collector_x * scale;
        for (int ph = 0; ph < 3; ++ph) {
            const int a = net_.add_node();
            const int b = net_.add_node();
            const int term = net_.add_node();
            rig.term_nodes[ph] = term;
            rig.sw_poi[ph] = net_.stamp_switch(bus_nodes_[rig.poi_bus][ph], a, BreakerState::Open);
            rig.coll[ph] = net_.stamp_series_rl(a, b, r_sys, x_sys / w0_);
            rig.sw_plant[ph] = net_.stamp_switch(b, term, BreakerState::Open);
            net_.stamp_resistor(term, NodalSystem::kGround, 1000.0);
        }
        owfs_.push_back(std::move(rig));
    }

    // Loads: constant-power current injections until the ZIP swap closes the
    // stamped impedance branch sized at the snapshot voltage.
    for (std::size_t k = 0; k < sys_.loads.size(); ++k) {
        const auto& load = sys_.loads[k];
        LoadRig rig;
        rig.load = &load;
        rig.bus = sys_.bus_index(load.bus);
        rig.v_snap = bus_phasor(rig.bus);
        rig.s_total = Complex(load.p0, load.q0);
        rig.s_i = rig.s_total * load.i_frac;
        rig.s_p = rig.s_total * load.p_frac;

        rig.v_hat = rig.v_snap;
        const Complex s_z = rig.s_total * load.z_frac;
        if (std::abs(s_z) > 1e-12) {
            rig.has_z = true;
            const Complex z = std::norm(rig.v_snap) / std::conj(s_z);
            rig.z_imp = z;
            for (int ph = 0; ph < 3; ++ph) {
                const int aux = net_.add_node();
                rig.z_sw[ph] = net_.stamp_switch(bus_nodes_[rig.bus][ph], aux, BreakerState::Open);
                if (z.imag() >= 0.0) {
                    if (z.imag() > 0.0)
                        rig.z_main[ph] =
                            net_.stamp_series_rl(aux, NodalSystem::kGround, z.real(), z.imag() / w0_);
                    else
                        rig.z_main[ph] = net_.stamp_resistor(aux, NodalSystem::kGround, z.real());
                } else {
                    rig.z_has_cap = true;
                    const int mid = net_.add_node();
                    rig.z_main[ph] = net_.stamp_resistor(aux, mid, std::max(z.real(), 1e-9));
                    rig.z_cap[ph] =
                        net_.stamp_capacitor(mid, NodalSystem::kGround, 1.0 / (-z.imag() * w0_));
                }
            }
        }
        loads_.push_back(std::move(rig));
    }

    // Fault paths for every scenario fault bus.
    for (const auto& f : sc_.faults) {
        const int bi = sys_.bus_index(f.bus);
        if (bi < 0) throw ScenarioError("fault at unknown bus " + std::to_string(f.bus));
        if (!faults_.has_path(f.bus)) {
            std::vector<ElementId> sws;
            for (int ph = 0; ph < 3; ++ph) {
                const int aux = net_.add_node();
                sws.push_back(net_.stamp_switch(bus_nodes_[bi][ph], aux, BreakerState::Open));
                net_.stamp_resistor(aux, NodalSystem::kGround, f.fault_r);
            }
            faults_.register_path(f.bus, sws);
        }
    }

    // Seed node voltages and element histories with the snapshot sinusoids.
    Eigen::VectorXd v0 = Eigen::VectorXd::Zero(net_.node_count());
    for (std::size_t b = 0; b < sys_.buses.size(); ++b) {
        const Phases v = phases_from_phasor(bus_phasor(static_cast<int>(b)));
        for (int ph = 0; ph < 3; ++ph) v0(bus_nodes_[b][ph]) = v[ph];
    }
    net_.seed_voltages(v0);
    for (const auto& pre : presets_) {
        net_.preset_element(pre.elem, phases_from_phasor(pre.i_phasor)[pre.phase],
                            phases_from_phasor(pre.v_phasor)[pre.phase]);
    }

    bus_rms_.resize(sys_.buses.size());
    const int window = std::max(1, static_cast<int>(std::lround(1.0 / sys_.nominal_hz / sc_.dt)));
    for (std::size_t b = 0; b < sys_.buses.size(); ++b)
        bus_rms_[b].reset(window, snapshot_.vm[b]);
}

void Simulator::schedule_events() {
    auto bulk = default_bulk_schedule(sys_, sc_.init);
    auto farm = sys_.owf_plants.empty()
                    ? std::vector<ScheduleAction>{}
                    : default_owf_schedule(sys_, sc_.owf_t0, sc_.owf_plant_spacing,
                                           sc_.owf_stage_spacing);
    std::vector<ScheduleAction> all = bulk;
    all.insert(all.end(), farm.begin(), farm.end());
    validate_schedule(all, sys_, sc_.init);

    int order = 0;
    for (const auto& a : all) {
        events_.push_back({a.time, order++, [this, a](double t) { apply_action(a, t); },
                           std::string(action_name(a.kind)) +
                               (a.target >= 0 ? " plant " + std::to_string(a.target) : "")});
    }
    for (const auto& f : sc_.faults) {
        for (const auto& ev : faults_.apply_fault(f)) {
            const char* what = ev.state == BreakerState::Closed ? "fault_on" : "fault_off";
            events_.push_back({ev.time, order++,
                               [this, ev](double) { net_.set_switch(ev.element, ev.state); },
                               std::string(what) + " bus " + std::to_string(f.bus)});
        }
    }
    for (const auto& ev : sc_.breaker_events) {
        auto it = branch_switches_.find({ev.from, ev.to});
        if (it == branch_switches_.end())
            throw ScenarioError("breaker event on unknown branch " + std::to_string(ev.from) +
                                "-" + std::to_string(ev.to));
        const auto sws = it->second;
        events_.push_back({ev.time, order++,
                           [this, sws, ev](double) {
                               for (auto sw : sws) net_.set_switch(sw, ev.state);
                           },
                           "breaker " + std::to_string(ev.from) + "-" + std::to_string(ev.to)});
    }
    std::sort(events_.begin(), events_.end(), [](const auto& a, const auto& b) {
        return a.time != b.time ? a.time < b.time : a.order < b.order;
    });
}

void Simulator::apply_action(const ScheduleAction& a, double t) {
    switch (a.kind) {
        case ActionKind::EnableExciters:
            for (auto& rig : sgs_) {
                for (auto sw : rig.src_sw) net_.set_switch(sw, BreakerState::Open);
                if (rig.st.mode < SgMode::ExciterOn) rig.st.mode = SgMode::ExciterOn;
            }
            break;
        case ActionKind::EnableGovernors:
            for (auto& rig : sgs_)
                if (rig.st.mode < SgMode::GovernorOn) rig.st.mode = SgMode::GovernorOn;
            break;
        case ActionKind::SwapZipLoads:
            for (auto& rig : loads_) {
                rig.swapped = true;
                if (!rig.has_z) continue;
                // Close the impedance branch with its current preset at the
                // prevailing phasor so the total draw stays continuous.
                const Complex spin = std::polar(1.0, w0_ * t);
                const Complex i_z = rig.v_hat / rig.z_imp * spin;
                for (int ph = 0; ph < 3; ++ph) {
                    net_.set_switch(rig.z_sw[ph], BreakerState::Closed);
                    const Complex v_main =
                        rig.z_has_cap ? i_z * rig.z_imp.real() : rig.v_hat * spin;
                    net_.preset_element(rig.z_main[ph], phases_from_phasor(i_z)[ph],
                                        phases_from_phasor(v_main)[ph]);
                    if (rig.z_has_cap)
                        net_.preset_element(rig.z_cap[ph], phases_from_phasor(i_z)[ph],
                                            phases_from_phasor(i_z * Complex(0.0, rig.z_imp.imag()))[ph]);
                }
            }
            break;
        case ActionKind::RampIbrRefs: {
            const double span = std::max(sc_.init.ibr_ramp_end - sc_.init.ibr_ramp_start, 1e-9);
            for (auto& rig : gfls_) {
                rig.ramping = true;
                rig.ramp_rate =
                    std::max(std::abs(rig.target_p), std::abs(rig.target_q)) / span;
            }
            break;
        }
        case ActionKind::OpenSourceBreakers:
            for (auto& rig : gfls_)
                for (auto sw : rig.src_sw) net_.set_switch(sw, BreakerState::Open);
            break;
        case ActionKind::ConnectOwfPoi:
            for (auto sw : owfs_.at(a.target).sw_poi) net_.set_switch(sw, BreakerState::Closed);
            break;
        case ActionKind::CloseOwfSwitch:
            for (auto sw : owfs_.at(a.target).sw_plant) net_.set_switch(sw, BreakerState::Closed);
            break;
        case ActionKind::EnableGsc:
            owfs_.at(a.target).st.gsc.active = true;
            break;
        case ActionKind::StartTurbine: {
            auto& rig = owfs_.at(a.target);
            owf_start_turbine(rig.st, rig.plant, apply_wind_profile(rig.profile, t));
            break;
        }
        case ActionKind::EnableRsc: {
            auto& rig = owfs_.at(a.target);
            rig.st.rsc.active = true;
            rig.st.mech.held = false;
            break;
        }
    }
}

void Simulator::step_devices(double t_next) {
    const double s_sys = sys_.mva_base;
    const Complex spin = std::polar(1.0, w0_ * t_next);

    for (auto& rig : sgs_) {
        // Init source plays the snapshot phasor while its breaker is closed.
        const Phases e_src = phases_from_phasor(rig.v_snap * spin);
        const Phases i_meas = {net_.element_current(rig.stator[0]),
                               net_.element_current(rig.stator[1]),
                               net_.element_current(rig.stator[2])};
        const Complex i_s = space_phasor(i_meas) / rig.i_scale;
        const Complex v_s = space_phasor(bus_voltages(rig.bus));
        const Complex e_next = sg_network_step(rig.st, *rig.plant, v_s, i_s, w0_, sc_.dt);
        const Phases e_abc = phases_from_phasor(e_next);
        for (int ph = 0; ph < 3; ++ph) {
            net_.set_source_voltage(rig.src[ph], e_src[ph]);
            net_.set_source_voltage(rig.emf[ph], e_abc[ph]);
        }
    }

    for (auto& rig : gfls_) {
        const Phases e_src = phases_from_phasor(rig.v_snap * spin);
        for (int ph = 0; ph < 3; ++ph) net_.set_source_voltage(rig.src[ph], e_src[ph]);

        if (rig.ramping)
            ramp_refs(rig.st, rig.target_p, rig.target_q, rig.ramp_rate, sc_.dt);
        const Phases v = bus_voltages(rig.bus);
        const Phases i = gfl_step(rig.st, *rig.plant, v, sys_.nominal_hz, sc_.dt);
        const double scale = rig.plant->mva_base / s_sys;
        rig.p_out = (v[0] * i[0] + v[1] * i[1] + v[2] * i[2]) * (2.0 / 3.0) * scale;
        for (int ph = 0; ph < 3; ++ph)
            net_.add_injection(bus_nodes_[rig.bus][ph], i[ph] * scale);
    }

    for (auto& rig : owfs_) {
        rig.wind = apply_wind_profile(rig.profile, t_next);
        const Phases v_term = node_voltages(rig.term_nodes);
        const Phases v_poi = bus_voltages(rig.poi_bus);
        const double v_poi_mag = std::abs(space_phasor(v_poi));

        const Phases i = owf_step(rig.st, rig.plant, v_term, v_poi_mag, rig.wind,
                                  sys_.nominal_hz, sc_.dt);
        const double scale = rig.plant.mva_base() / s_sys;
        for (int ph = 0; ph < 3; ++ph)
            net_.add_injection(rig.term_nodes[ph], i[ph] * scale);

        // Plant output measured on the POI side of the breaker.
        double p = 0.0;
        for (int ph = 0; ph < 3; ++ph)
            p += v_poi[ph] * -net_.element_current(rig.sw_poi[ph]);
        rig.p_poi = p * 2.0 / 3.0;
    }

    // Loads draw against a synchronous-frame filtered phasor: at fast time
    // scales they look like stiff current sources, which keeps the
    // constant-power behavior from undamping network resonances.
    const double load_tau = 0.03;
    const Complex spin_prev = std::polar(1.0, w0_ * (t_next - sc_.dt));
    for (auto& rig : loads_) {
        // bus voltages are still the previous step's solution here
        const Complex v_s = space_phasor(bus_voltages(rig.bus));
        rig.v_hat += (v_s * std::conj(spin_prev) - rig.v_hat) * (sc_.dt / load_tau);

        const double vm = std::abs(rig.v_hat);
        Complex i_phasor{0.0, 0.0};
        if (vm > 1e-6) {
            // Constant-power/current parts turn impedance-like below the floor.
            const double derate = std::min(vm / kLoadVoltageFloor, 1.0);
            if (!rig.swapped) {
                i_phasor = std::conj(rig.s_total / rig.v_hat) * derate * derate;
            } else {
                if (std::abs(rig.s_i) > 0.0) {
                    const double mag = std::abs(rig.s_i) / std::abs(rig.v_snap);
                    i_phasor += std::polar(mag, std::arg(rig.v_hat) - std::arg(rig.s_i)) * derate;
                }
                if (std::abs(rig.s_p) > 0.0)
                    i_phasor += std::conj(rig.s_p / rig.v_hat) * derate * derate;
            }
        }
        const Phases i = phases_from_phasor(i_phasor * spin);
        rig.draw = i;
        for (int ph = 0; ph < 3; ++ph)
            net_.add_injection(bus_nodes_[rig.bus][ph], -i[ph]);
        rig.p_drawn = (rig.v_hat * std::conj(i_phasor)).real();
    }
}

void Simulator::setup_channels() {
    auto add = [&](const std::string& name, std::function<double()> fn) {
        if (!sc_.channels.empty() &&
            std::find(sc_.channels.begin(), sc_.channels.end(), name) == sc_.channels.end())
            return;
        channel_names_.push_back(name);
        channel_fns_.push_back(std::move(fn));
    };

    for (std::size_t b = 0; b < sys_.buses.size(); ++b)
        add("bus" + std::to_string(sys_.buses[b].id) + "_vrms_pu",
            [this, b] { return bus_rms_[b].value(); });
    for (std::size_t k = 0; k < sgs_.size(); ++k)
        add("sg" + std::to_string(sgs_[k].plant->bus) + "_speed_pu",
            [this, k] { return sgs_[k].st.speed; });
    for (std::size_t k = 0; k < gfls_.size(); ++k)
        add("gfl" + std::to_string(gfls_[k].plant->bus) + "_p_mw",
            [this, k] { return gfls_[k].p_out * sys_.mva_base; });
    for (std::size_t k = 0; k < loads_.size(); ++k)
        add("load" + std::to_string(loads_[k].load->bus) + "_p_mw", [this, k] {
            const auto& rig = loads_[k];
            const Phases v = bus_voltages(rig.bus);
            double p = 0.0;
            for (int ph = 0; ph < 3; ++ph) {
                double i = rig.draw[ph];
                if (rig.has_z) i += net_.element_current(rig.z_sw[ph]);
                p += v[ph] * i;
            }
            return p * (2.0 / 3.0) * sys_.mva_base;
        });
    for (std::size_t k = 0; k < owfs_.size(); ++k) {
        add("owf" + std::to_string(k) + "_p_mw",
            [this, k] { return owfs_[k].p_poi * sys_.mva_base; });
        add("owf" + std::to_string(k) + "_poi_vrms_pu",
            [this, k] { return bus_rms_[owfs_[k].poi_bus].value(); });
        add("owf" + std::to_string(k) + "_wind_ms", [this, k] { return owfs_[k].wind; });
        add("owf" + std::to_string(k) + "_vdc_pu",
            [this, k] { return owfs_[k].st.link.v_dc; });
        add("owf" + std::to_string(k) + "_chopper",
            [this, k] { return owfs_[k].st.link.chopper_on ? 1.0 : 0.0; });
        add("owf" + std::to_string(k) + "_omega_pu",
            [this, k] { return owfs_[k].st.mech.omega; });
        add("owf" + std::to_string(k) + "_order_pu",
            [this, k] { return owfs_[k].st.rsc.order; });
        add("owf" + std::to_string(k) + "_pgsc_pu",
            [this, k] { return owfs_[k].st.gsc.p_bridge; });
        add("owf" + std::to_string(k) + "_prsc_pu",
            [this, k] { return owfs_[k].st.rsc.p_bridge; });
        add("owf" + std::to_string(k) + "_gsc_id",
            [this, k] { return owfs_[k].st.gsc.id; });
        add("owf" + std::to_string(k) + "_gsc_iq",
            [this, k] { return owfs_[k].st.gsc.iq; });
    }
}

void Simulator::sample(double t, Recording& rec) {
    rec.time.push_back(t);
    for (std::size_t c = 0; c < channel_fns_.size(); ++c)
        rec.data[c].push_back(channel_fns_[c]());
}

Recording Simulator::run() {
    auto report = validate_case(sys_);
    if (!report.ok())
        throw ScenarioError("case is not runnable: " + report.violations.front().message);

    pf_ = solve_powerflow(sys_);
    snapshot_ = snapshot_for_emt(pf_, sys_);
    build();
    schedule_events();
    setup_channels();

    Recording rec;
    rec.channels = channel_names_;
    rec.sample_period = std::max(sc_.record_dt, sc_.dt);
    rec.data.assign(channel_names_.size(), {});

    const long steps = std::lround(sc_.t_end / sc_.dt);
    const long decim = std::max(1L, std::lround(rec.sample_period / sc_.dt));
    rec.sample_period = decim * sc_.dt;

    if (steps > 0) sample(0.0, rec);

    std::size_t next_event = 0;
    double max_link_residual = 0.0;
    for (long k = 1; k <= steps; ++k) {
        const double t_prev = (k - 1) * sc_.dt;
        const double t = k * sc_.dt;

        while (next_event < events_.size() && events_[next_event].time <= t_prev + sc_.dt / 2.0) {
            events_[next_event].fire(t_prev);
            applied_.push_back({t_prev, events_[next_event].description});
            ++next_event;
        }

        step_devices(t);
        try {
            net_.solve_step();
        } catch (const NetworkError& e) {
            throw SimulationError(t, e.what());
        }

        for (std::size_t b = 0; b < sys_.buses.size(); ++b) bus_rms_[b].push(bus_voltages(b));

        if (!std::isfinite(net_.voltage(0)))
            throw SimulationError(t, "solution is not finite");
        if (k % 200 == 0) {
            for (std::size_t b = 0; b < sys_.buses.size(); ++b)
                if (!std::isfinite(bus_rms_[b].value()))
                    throw SimulationError(t, "bus voltage is not finite");
            for (const auto& rig : owfs_)
                if (!std::isfinite(rig.st.link.v_dc))
                    throw SimulationError(t, "DC link voltage is not finite");
        }

        if (k % decim == 0) sample(t, rec);
    }
    for (const auto& rig : owfs_)
        max_link_residual = std::max(max_link_residual, rig.st.link.max_residual);

    char buf[64];
    rec.metadata["case"] = sc_.case_path.empty() ? "<inline>" : sc_.case_path;
    std::snprintf(buf, sizeof buf, "%.9g", sc_.dt);
    rec.metadata["dt_s"] = buf;
    std::snprintf(buf, sizeof buf, "%.9g", sc_.t_end);
    rec.metadata["t_end_s"] = buf;
    std::snprintf(buf, sizeof buf, "%.9g", rec.sample_period);
    rec.metadata["sample_period_s"] = buf;
    rec.metadata["powerflow_iterations"] = std::to_string(pf_.iterations);
    std::snprintf(buf, sizeof buf, "%.3e", pf_.max_mismatch);
    rec.metadata["powerflow_mismatch_pu"] = buf;
    std::snprintf(buf, sizeof buf, "%.3e", max_link_residual);
    rec.metadata["dclink_max_residual_pu"] = buf;
    rec.metadata["refactorizations"] = std::to_string(net_.refactor_count());
    {
        std::ostringstream ev;
        for (const auto& e : applied_) {
            std::snprintf(buf, sizeof buf, "%.6f", e.time);
            ev << buf << " " << e.description << "\n";
        }
        rec.metadata["applied_events"] = ev.str();
    }
    rec.metadata["init_snapshot"] = snapshot_.report(sys_);
    return rec;
}

}  // namespace

Recording run_simulation(const Scenario& scenario) {
    Simulator sim(scenario);
    return sim.run();
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

std::string csv_string(const Recording& rec) {
    std::ostringstream os;
    os << "time_s";
    for (const auto& ch : rec.channels) os << "," << ch;
    os << "\n";
    char buf[40];
    for (std::size_t s = 0; s < rec.time.size(); ++s) {
        std::snprintf(buf, sizeof buf, "%.9g", rec.time[s]);
        os << buf;
        for (std::size_t c = 0; c < rec.data.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", rec.data[c][s]);
            os << "," << buf;
        }
        os << "\n";
    }
    return os.str();
}

std::string metadata_string(const Recording& rec) {
    std::ostringstream os;
    for (const auto& [key, value] : rec.metadata) {
        if (value.find('\n') == std::string::npos) {
            os << key << " = " << value << "\n";
        } else {
            os << "[" << key << "]\n" << value;
            if (value.back() != '\n') os << "\n";
        }
    }
    return os.str();
}

void write_csv(const Recording& rec, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ScenarioError("cannot open output file: " + path);
    f << csv_string(rec);
    if (!f) throw ScenarioError("write failed: " + path);

    std::filesystem::path meta(path);
    meta.replace_extension(".meta.txt");
    std::ofstream m(meta, std::ios::binary);
    if (!m) throw ScenarioError("cannot open output file: " + meta.string());
    m << metadata_string(rec);
}

}  // namespace emtsim
