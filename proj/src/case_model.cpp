#include "emtsim/case_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace emtsim {

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

double to_double(const std::string& tok, int line) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw CaseError(line, "expected a number, got '" + tok + "'");
    }
    if (pos != tok.size()) throw CaseError(line, "trailing characters in number '" + tok + "'");
    return v;
}

int to_int(const std::string& tok, int line) {
    const double v = to_double(tok, line);
    const int i = static_cast<int>(std::lround(v));
    if (std::abs(v - i) > 1e-9) throw CaseError(line, "expected an integer, got '" + tok + "'");
    return i;
}

// Splits trailing key=value options from a record's positional fields.
std::map<std::string, std::string> take_options(std::vector<std::string>& toks) {
    std::map<std::string, std::string> opts;
    while (!toks.empty()) {
        const auto eq = toks.back().find('=');
        if (eq == std::string::npos) break;
        opts[toks.back().substr(0, eq)] = toks.back().substr(eq + 1);
        toks.pop_back();
    }
    return opts;
}

struct OptionReader {
    std::map<std::string, std::string> opts;
    int line;

    ~OptionReader() = default;
    void get(const char* key, double& field) {
        if (auto it = opts.find(key); it != opts.end()) {
            field = to_double(it->second, line);
            opts.erase(it);
        }
    }
    void get(const char* key, bool& field) {
        if (auto it = opts.find(key); it != opts.end()) {
            field = to_double(it->second, line) != 0.0;
            opts.erase(it);
        }
    }
    void finish() const {
        if (!opts.empty()) throw CaseError(line, "unknown option '" + opts.begin()->first + "'");
    }
};

BusType parse_bus_type(const std::string& tok, int line) {
    if (tok == "slack") return BusType::Slack;
    if (tok == "PV" || tok == "pv") return BusType::PV;
    if (tok == "PQ" || tok == "pq") return BusType::PQ;
    throw CaseError(line, "unknown bus type '" + tok + "'");
}

const char* bus_type_name(BusType t) {
    switch (t) {
        case BusType::Slack: return "slack";
        case BusType::PV: return "PV";
        default: return "PQ";
    }
}

}  // namespace

int SystemCase::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    return -1;
}

SystemCase parse_case(std::string_view text) {
    SystemCase sys;
    std::istringstream stream{std::string(text)};
    std::string raw;
    std::string section;
    int line_no = 0;
    std::set<int> seen_bus_ids;
    bool have_system = false;

    auto require_bus = [&](int id, int line) {
        if (!seen_bus_ids.count(id))
            throw CaseError(line, "unknown bus reference " + std::to_string(id));
    };

    while (std::getline(stream, raw)) {
        ++line_no;
        auto toks = tokenize(raw);
        if (toks.empty()) continue;

        if (toks[0].front() == '[') {
            if (toks[0].back() != ']' || toks.size() != 1)
                throw CaseError(line_no, "malformed section header");
            section = toks[0].substr(1, toks[0].size() - 2);
            static const std::set<std::string> known{"SYSTEM", "BUS",  "BRANCH",
                                                     "LOAD",   "SG",   "GFL",
                                                     "OWF"};
            if (!known.count(section)) throw CaseError(line_no, "unknown section [" + section + "]");
            continue;
        }
        if (section.empty()) throw CaseError(line_no, "record before any section header");

        if (section == "SYSTEM") {
            if (toks.size() != 2) throw CaseError(line_no, "[SYSTEM] lines are 'key value'");
            if (toks[0] == "mva") {
                sys.mva_base = to_double(toks[1], line_no);
                if (sys.mva_base <= 0) throw CaseError(line_no, "system MVA base must be positive");
                have_system = true;
            } else if (toks[0] == "hz") {
                sys.nominal_hz = to_double(toks[1], line_no);
                if (sys.nominal_hz <= 0) throw CaseError(line_no, "nominal frequency must be positive");
            } else {
                throw CaseError(line_no, "unknown [SYSTEM] key '" + toks[0] + "'");
            }
        } else if (section == "BUS") {
            if (toks.size() < 3 || toks.size() > 4)
                throw CaseError(line_no, "[BUS] record is: id kv type [area]");
            Bus b;
            b.id = to_int(toks[0], line_no);
            b.nominal_kv = to_double(toks[1], line_no);
            b.type = parse_bus_type(toks[2], line_no);
            if (toks.size() > 3) b.area = to_int(toks[3], line_no);
            if (b.nominal_kv <= 0) throw CaseError(line_no, "bus kV must be positive");
            if (!seen_bus_ids.insert(b.id).second)
                throw CaseError(line_no, "duplicate bus id " + std::to_string(b.id));
            sys.buses.push_back(b);
        } else if (section == "BRANCH") {
            if (toks.size() < 5 || toks.size() > 6)
                throw CaseError(line_no, "[BRANCH] record is: from to r x b [state]");
            Branch br;
            br.from = to_int(toks[0], line_no);
            br.to = to_int(toks[1], line_no);
            br.r = to_double(toks[2], line_no);
            br.x = to_double(toks[3], line_no);
            br.b_shunt = to_double(toks[4], line_no);
            if (toks.size() > 5) {
                if (toks[5] == "closed") br.breaker_state = BreakerState::Closed;
                else if (toks[5] == "open") br.breaker_state = BreakerState::Open;
                else throw CaseError(line_no, "breaker state is 'closed' or 'open'");
            }
            require_bus(br.from, line_no);
            require_bus(br.to, line_no);
            if (br.r == 0.0 && br.x == 0.0)
                throw CaseError(line_no, "branch impedance must be nonzero");
            sys.branches.push_back(br);
        } else if (section == "LOAD") {
            if (toks.size() != 3 && toks.size() != 6)
                throw CaseError(line_no, "[LOAD] record is: bus p q [z i p]");
            ZipLoad ld;
            ld.bus = to_int(toks[0], line_no);
            ld.p0 = to_double(toks[1], line_no);
            ld.q0 = to_double(toks[2], line_no);
            if (toks.size() == 6) {
                ld.z_frac = to_double(toks[3], line_no);
                ld.i_frac = to_double(toks[4], line_no);
                ld.p_frac = to_double(toks[5], line_no);
            }
            require_bus(ld.bus, line_no);
            if (ld.z_frac < 0 || ld.i_frac < 0 || ld.p_frac < 0)
                throw CaseError(line_no, "ZIP shares must be nonnegative");
            if (std::abs(ld.z_frac + ld.i_frac + ld.p_frac - 1.0) > 1e-9)
                throw CaseError(line_no, "ZIP shares must sum to 1");
            sys.loads.push_back(ld);
        } else if (section == "SG") {
            auto opts = take_options(toks);
            if (toks.size() != 10)
                throw CaseError(line_no,
                                "[SG] record is: bus mva h xd xq xdp xqp ra p_set v_set [key=value...]");
            SgPlant sg;
            sg.bus = to_int(toks[0], line_no);
            sg.mva_base = to_double(toks[1], line_no);
            sg.h = to_double(toks[2], line_no);
            sg.xd = to_double(toks[3], line_no);
            sg.xq = to_double(toks[4], line_no);
            sg.xd_p = to_double(toks[5], line_no);
            sg.xq_p = to_double(toks[6], line_no);
            sg.ra = to_double(toks[7], line_no);
            sg.p_set = to_double(toks[8], line_no);
            sg.v_set = to_double(toks[9], line_no);
            OptionReader rd{std::move(opts), line_no};
            rd.get("td0p", sg.td0_p);
            rd.get("tq0p", sg.tq0_p);
            rd.get("d", sg.damping);
            rd.get("ka", sg.exciter.ka);
            rd.get("ta", sg.exciter.ta);
            rd.get("tr", sg.exciter.tr);
            rd.get("efd_max", sg.exciter.efd_max);
            rd.get("efd_min", sg.exciter.efd_min);
            rd.get("exciter", sg.exciter.enabled);
            rd.get("droop", sg.governor.droop);
            rd.get("tg", sg.governor.tg);
            rd.get("governor", sg.governor.enabled);
            rd.finish();
            require_bus(sg.bus, line_no);
            if (sg.mva_base <= 0) throw CaseError(line_no, "SG MVA base must be positive");
            if (sg.h <= 0) throw CaseError(line_no, "SG inertia must be positive");
            if (!(sg.xd >= sg.xd_p && sg.xd_p > 0))
                throw CaseError(line_no, "SG requires xd >= xd' > 0");
            sys.sg_plants.push_back(sg);
        } else if (section == "GFL") {
            auto opts = take_options(toks);
            if (toks.size() != 4)
                throw CaseError(line_no, "[GFL] record is: bus mva p_ref q_ref [key=value...]");
            GflPlant g;
            g.bus = to_int(toks[0], line_no);
            g.mva_base = to_double(toks[1], line_no);
            g.p_ref = to_double(toks[2], line_no);
            g.q_ref = to_double(toks[3], line_no);
            OptionReader rd{std::move(opts), line_no};
            rd.get("fdb", g.freq_deadband_hz);
            rd.get("vdb", g.volt_deadband_pu);
            rd.get("dp", g.p_droop);
            rd.get("dq", g.q_droop);
            rd.get("imax", g.i_max);
            rd.finish();
            require_bus(g.bus, line_no);
            if (g.mva_base <= 0) throw CaseError(line_no, "GFL MVA base must be positive");
            if (g.freq_deadband_hz < 0 || g.volt_deadband_pu < 0)
                throw CaseError(line_no, "deadbands must be nonnegative");
            if (std::abs(g.p_ref) > 1.0)
                throw CaseError(line_no, "|p_ref| must be <= 1 on the plant base");
            sys.gfl_plants.push_back(g);
        } else if (section == "OWF") {
            auto opts = take_options(toks);
            if (toks.size() != 7)
                throw CaseError(line_no,
                                "[OWF] record is: poi n_turbines unit_mw cut_in cut_out coll_r coll_x "
                                "[key=value...]");
            OwfPlant w;
            w.poi_bus = to_int(toks[0], line_no);
            w.n_turbines = to_int(toks[1], line_no);
            w.turbine_mw = to_double(toks[2], line_no);
            w.cut_in = to_double(toks[3], line_no);
            w.cut_out = to_double(toks[4], line_no);
            w.collector_r = to_double(toks[5], line_no);
            w.collector_x = to_double(toks[6], line_no);
            OptionReader rd{std::move(opts), line_no};
            auto& p = w.params;
            rd.get("rated_wind", p.rated_wind);
            rd.get("lambda_opt", p.lambda_opt);
            rd.get("rotor_radius", p.rotor_radius);
            rd.get("air_density", p.air_density);
            rd.get("rotor_h", p.rotor_h);
            rd.get("omega_max", p.omega_max);
            rd.get("pitch_kp", p.pitch_kp);
            rd.get("pitch_ki", p.pitch_ki);
            rd.get("beta_max", p.beta_max);
            rd.get("pitch_rate", p.pitch_rate);
            rd.get("cdc", p.c_dc);
            rd.get("v_trip", p.v_dc_trip);
            rd.get("v_release", p.v_dc_release);
            rd.get("chopper_r", p.chopper_r);
            rd.get("v_alarm", p.v_dc_alarm);
            rd.get("lvrt_v0", p.lvrt_v0);
            rd.get("lvrt_v1", p.lvrt_v1);
            rd.get("lf", p.l_filter);
            rd.get("rf", p.r_filter);
            rd.get("xs", p.x_stator);
            rd.get("imax", p.i_max);
            rd.get("v_poi_ref", p.v_poi_ref);
            rd.get("q_max", p.q_max);
            rd.get("kp_vdc", p.kp_vdc);
            rd.get("ki_vdc", p.ki_vdc);
            rd.get("kp_vac", p.kp_vac);
            rd.get("ki_vac", p.ki_vac);
            rd.get("kp_q", p.kp_q);
            rd.get("ki_q", p.ki_q);
            rd.get("kp_p", p.kp_p);
            rd.get("ki_p", p.ki_p);
            rd.get("kp_vrsc", p.kp_vrsc);
            rd.get("ki_vrsc", p.ki_vrsc);
            rd.get("kp_cur", p.kp_cur);
            rd.get("ki_cur", p.ki_cur);
            rd.get("order_rate", p.order_rate);
            rd.get("rsc_v_sign", p.rsc_v_sign);
            rd.get("chopper", p.chopper_enabled);
            rd.finish();
            require_bus(w.poi_bus, line_no);
            if (w.n_turbines < 1) throw CaseError(line_no, "n_turbines must be >= 1");
            if (!(0 < w.cut_in && w.cut_in < w.cut_out))
                throw CaseError(line_no, "cut-in must be positive and below cut-out");
            sys.owf_plants.push_back(w);
        }
    }

    if (!have_system) throw CaseError(line_no, "missing [SYSTEM] mva entry");
    if (sys.buses.empty()) throw CaseError(line_no, "case has no buses");
    return sys;
}

SystemCase load_case(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open case file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_case(buf.str());
}

std::string serialize_case(const SystemCase& sys) {
    std::ostringstream os;
    os.precision(17);
    os << "[SYSTEM]\n"
       << "mva " << sys.mva_base << "\n"
       << "hz " << sys.nominal_hz << "\n\n[BUS]\n";
    for (const auto& b : sys.buses)
        os << b.id << " " << b.nominal_kv << " " << bus_type_name(b.type) << " " << b.area << "\n";
    os << "\n[BRANCH]\n";
    for (const auto& br : sys.branches)
        os << br.from << " " << br.to << " " << br.r << " " << br.x << " " << br.b_shunt << " "
           << (br.breaker_state == BreakerState::Closed ? "closed" : "open") << "\n";
    os << "\n[LOAD]\n";
    for (const auto& ld : sys.loads)
        os << ld.bus << " " << ld.p0 << " " << ld.q0 << " " << ld.z_frac << " " << ld.i_frac << " "
           << ld.p_frac << "\n";
    os << "\n[SG]\n";
    for (const auto& g : sys.sg_plants) {
        os << g.bus << " " << g.mva_base << " " << g.h << " " << g.xd << " " << g.xq << " " << g.xd_p
           << " " << g.xq_p << " " << g.ra << " " << g.p_set << " " << g.v_set;
        os << " td0p=" << g.td0_p << " tq0p=" << g.tq0_p << " d=" << g.damping;
        os << " ka=" << g.exciter.ka << " ta=" << g.exciter.ta << " tr=" << g.exciter.tr
           << " efd_max=" << g.exciter.efd_max << " efd_min=" << g.exciter.efd_min
           << " exciter=" << (g.exciter.enabled ? 1 : 0);
        os << " droop=" << g.governor.droop << " tg=" << g.governor.tg
           << " governor=" << (g.governor.enabled ? 1 : 0) << "\n";
    }
    os << "\n[GFL]\n";
    for (const auto& g : sys.gfl_plants)
        os << g.bus << " " << g.mva_base << " " << g.p_ref << " " << g.q_ref << " fdb="
           << g.freq_deadband_hz << " vdb=" << g.volt_deadband_pu << " dp=" << g.p_droop
           << " dq=" << g.q_droop << " imax=" << g.i_max << "\n";
    os << "\n[OWF]\n";
    for (const auto& w : sys.owf_plants) {
        const auto& p = w.params;
        os << w.poi_bus << " " << w.n_turbines << " " << w.turbine_mw << " " << w.cut_in << " "
           << w.cut_out << " " << w.collector_r << " " << w.collector_x;
        os << " rated_wind=" << p.rated_wind << " lambda_opt=" << p.lambda_opt
           << " rotor_radius=" << p.rotor_radius
           << " air_density=" << p.air_density << " rotor_h=" << p.rotor_h
           << " omega_max=" << p.omega_max << " pitch_kp=" << p.pitch_kp
           << " pitch_ki=" << p.pitch_ki << " beta_max=" << p.beta_max
           << " pitch_rate=" << p.pitch_rate << " cdc=" << p.c_dc << " v_trip=" << p.v_dc_trip
           << " v_release=" << p.v_dc_release << " chopper_r=" << p.chopper_r
           << " v_alarm=" << p.v_dc_alarm << " lvrt_v0=" << p.lvrt_v0 << " lvrt_v1=" << p.lvrt_v1
           << " lf=" << p.l_filter << " rf=" << p.r_filter << " xs=" << p.x_stator
           << " imax=" << p.i_max << " v_poi_ref=" << p.v_poi_ref << " q_max=" << p.q_max
           << " kp_vdc=" << p.kp_vdc << " ki_vdc=" << p.ki_vdc
           << " kp_vac=" << p.kp_vac << " ki_vac=" << p.ki_vac << " kp_q=" << p.kp_q
           << " ki_q=" << p.ki_q << " kp_p=" << p.kp_p << " ki_p=" << p.ki_p
           << " kp_vrsc=" << p.kp_vrsc << " ki_vrsc=" << p.ki_vrsc << " kp_cur=" << p.kp_cur
           << " ki_cur=" << p.ki_cur << " order_rate=" << p.order_rate
           << " rsc_v_sign=" << p.rsc_v_sign << " chopper=" << (p.chopper_enabled ? 1 : 0) << "\n";
    }
    return os.str();
}

ValidationReport validate_case(const SystemCase& sys) {
    ValidationReport rep;
    auto add = [&](const std::string& code, const std::string& msg) {
        rep.violations.push_back({code, msg});
    };

    for (const auto& br : sys.branches)
        if (br.r == 0.0 && br.x == 0.0)
            add("zero_impedance", "branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                      " has zero impedance");

    // Union-find over buses joined by closed branches.
    std::vector<int> parent(sys.buses.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (const auto& br : sys.branches) {
        if (br.breaker_state != BreakerState::Closed) continue;
        const int a = sys.bus_index(br.from);
        const int b = sys.bus_index(br.to);
        if (a >= 0 && b >= 0) parent[find(a)] = find(b);
    }

    std::map<int, int> island_slacks;  // island root -> slack count
    std::set<int> islands;
    for (std::size_t i = 0; i < sys.buses.size(); ++i) {
        const int root = find(static_cast<int>(i));
        islands.insert(root);
        if (sys.buses[i].type == BusType::Slack) island_slacks[root]++;
    }
    if (islands.size() > 1)
        add("islanding", "grid splits into " + std::to_string(islands.size()) +
                             " islands over closed breakers");
    for (int root : islands) {
        const int n = island_slacks.count(root) ? island_slacks.at(root) : 0;
        if (n == 0)
            add("missing_slack", "island containing bus " +
                                     std::to_string(sys.buses[root].id) + " has no slack bus");
        else if (n > 1)
            add("multiple_slack", "island containing bus " +
                                      std::to_string(sys.buses[root].id) + " has " +
                                      std::to_string(n) + " slack buses");
    }

    for (const auto& ld : sys.loads)
        if (ld.z_frac > 0 && ld.q0 < 0)
            add("capacitive_z_share",
                "load at bus " + std::to_string(ld.bus) + ": capacitive Z share is unsupported");
    return rep;
}

double rebase(double value, double from_mva, double to_mva, QuantityKind kind) {
    if (from_mva <= 0.0 || to_mva <= 0.0)
        throw std::invalid_argument("per-unit bases must be positive");
    return kind == QuantityKind::Power ? value * from_mva / to_mva : value * to_mva / from_mva;
}

}  // namespace emtsim
