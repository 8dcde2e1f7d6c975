// Static grid data model and the line-oriented case file parser.
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emtsim {

enum class BusType { Slack, PV, PQ };
enum class BreakerState { Closed, Open };

struct Bus {
    int id = 0;
    double nominal_kv = 0.0;
    BusType type = BusType::PQ;
    int area = 1;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;        // series resistance, pu on system base
    double x = 0.0;        // series reactance, pu
    double b_shunt = 0.0;  // total line charging susceptance, pu
    BreakerState breaker_state = BreakerState::Closed;
};

struct ZipLoad {
    int bus = 0;
    double p0 = 0.0;  // pu on system base at nominal voltage
    double q0 = 0.0;
    double z_frac = 0.4;
    double i_frac = 0.3;
    double p_frac = 0.3;
};

struct ExciterParams {
    bool enabled = true;
    double ka = 200.0;
    double ta = 0.05;    // regulator time constant, s
    double tr = 0.02;    // voltage measurement filter, s
    double efd_max = 5.0;
    double efd_min = -5.0;
};

struct GovernorParams {
    bool enabled = true;
    double droop = 0.05;  // pu speed per pu power on machine base
    double tg = 0.5;      // actuator time constant, s
    double p_max = 1.2;
    double p_min = 0.0;
};

struct SgPlant {
    int bus = 0;
    double mva_base = 100.0;
    double h = 5.0;  // inertia constant, s on machine base
    double xd = 1.8;
    double xq = 1.7;
    double xd_p = 0.3;
    double xq_p = 0.3;
    double ra = 0.003;
    double td0_p = 6.0;
    double tq0_p = 0.8;
    double damping = 0.0;  // pu torque per pu speed deviation
    double p_set = 0.0;    // dispatch, pu on machine base (ignored at the slack)
    double v_set = 1.0;    // regulated terminal magnitude, pu
    ExciterParams exciter;
    GovernorParams governor;
};

struct GflPlant {
    int bus = 0;
    double mva_base = 100.0;
    double p_ref = 0.0;  // pu on own base
    double q_ref = 0.0;
    double freq_deadband_hz = 0.017;
    double volt_deadband_pu = 0.01;
    double p_droop = 20.0;  // pu power per pu frequency deviation (5% droop)
    double q_droop = 20.0;  // pu power per pu voltage deviation
    double i_max = 1.1;
};

// Control and electrical parameters of the aggregated Type-4 turbine model.
// Everything is per-unit on the turbine (plant) base unless noted.
struct OwfParams {
    double rated_wind = 11.06;   // m/s giving 1.0 pu mechanical power at beta = 0
    double rotor_radius = 40.0;  // m
    double air_density = 1.225;  // kg/m^3
    double lambda_opt = 8.1;     // tip-speed ratio at the Cp peak
    double rotor_h = 1.0;        // aggregate inertia constant, s
    double omega_max = 1.05;     // pitch regulation threshold, pu speed
    double pitch_kp = 150.0;
    double pitch_ki = 25.0;
    double beta_max = 30.0;       // deg
    double pitch_rate = 10.0;     // deg/s
    double c_dc = 0.05;           // DC link capacitance, pu-s (E = C V^2 / 2)
    double v_dc_trip = 1.05;      // chopper engage threshold, pu
    double v_dc_release = 1.02;   // chopper release threshold, pu
    double chopper_r = 1.1025;    // sized for 1 pu dissipation at v_dc_trip
    double v_dc_alarm = 1.2;      // overvoltage level the chopper must prevent
    double lvrt_v0 = 0.3;         // POI voltage below which power order is 0
    double lvrt_v1 = 0.9;         // POI voltage above which the order is unscaled
    double l_filter = 0.15;       // converter filter inductance, pu
    double r_filter = 0.005;
    double x_stator = 0.8;        // collapsed machine-side reactance, pu
    double i_max = 1.1;           // converter current limit, pu
    double v_poi_ref = 1.0;       // POI voltage setpoint; the engine aligns it
                                  // with the power-flow snapshot at build time
    double q_max = 0.4;           // plant-level reactive order limit, pu
    double kp_vdc = 3.0;          // outer-loop PI gains
    double ki_vdc = 80.0;
    double kp_vac = 0.5;
    double ki_vac = 5.0;
    double kp_q = 0.2;
    double ki_q = 20.0;
    double kp_p = 1.0;
    double ki_p = 40.0;
    double kp_vrsc = 1.0;
    double ki_vrsc = 20.0;
    double kp_cur = 0.25;         // inner current-loop PI gains (both converters)
    double ki_cur = 20.0;
    double order_rate = 4.0;      // power-order ramp rate, pu/s (down is unlimited)
    double rsc_v_sign = 1.0;      // +1: q current rises when V_rsc < V_rsc*
    bool chopper_enabled = true;
};

struct OwfPlant {
    int poi_bus = 0;
    int n_turbines = 1;
    double turbine_mw = 2.0;
    double cut_in = 4.0;    // m/s
    double cut_out = 25.0;  // m/s
    double collector_r = 0.01;  // pu on plant base
    double collector_x = 0.10;
    OwfParams params;

    double mva_base() const { return n_turbines * turbine_mw; }
};

struct SystemCase {
    double mva_base = 100.0;
    double nominal_hz = 60.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<ZipLoad> loads;
    std::vector<SgPlant> sg_plants;
    std::vector<GflPlant> gfl_plants;
    std::vector<OwfPlant> owf_plants;

    int bus_index(int id) const;  // -1 if absent
    double omega0() const { return 2.0 * 3.14159265358979323846 * nominal_hz; }
};

class CaseError : public std::runtime_error {
public:
    CaseError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct Violation {
    std::string code;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

enum class QuantityKind { Power, Impedance };

SystemCase parse_case(std::string_view text);
SystemCase load_case(const std::string& path);
std::string serialize_case(const SystemCase& sys);
ValidationReport validate_case(const SystemCase& sys);

// Change of per-unit base. Power-type quantities scale by from/to,
// impedance-type by to/from.
double rebase(double value, double from_mva, double to_mva, QuantityKind kind);

}  // namespace emtsim
