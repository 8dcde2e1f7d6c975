// Top-level simulation: scenario parsing, the fixed-step loop that couples
// the nodal network with the machine/inverter/wind-plant models, channel
// recording and CSV output.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emtsim/case_model.hpp"
#include "emtsim/emt_network.hpp"
#include "emtsim/init_sequencer.hpp"
#include "emtsim/powerflow.hpp"

namespace emtsim {

struct WindPoint {
    double t = 0.0;
    double speed = 0.0;  // m/s
};

struct BranchEvent {
    int from = 0;
    int to = 0;
    double time = 0.0;
    BreakerState state = BreakerState::Open;
};

struct Scenario {
    std::string case_path;
    SystemCase sys;
    double dt = 50e-6;
    double t_end = 5.0;
    double record_dt = 1e-3;
    InitTimes init;
    double owf_t0 = 10.0;
    double owf_plant_spacing = 2.0;
    double owf_stage_spacing = 0.5;
    std::vector<std::vector<WindPoint>> wind;  // per OWF plant, may be empty
    double default_wind = 10.0;
    std::vector<FaultSpec> faults;
    std::vector<BranchEvent> breaker_events;
    std::optional<bool> chopper_override;
    std::vector<std::string> channels;  // empty selects the default set
};

class ScenarioError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(double t, const std::string& what)
        : std::runtime_error("t=" + std::to_string(t) + " s: " + what), time_(t) {}
    double time() const { return time_; }

private:
    double time_;
};

// Piecewise-linear interpolation, held flat beyond the profile ends.
double apply_wind_profile(const std::vector<WindPoint>& points, double t);

struct Recording {
    std::vector<std::string> channels;
    double sample_period = 1e-3;
    std::vector<double> time;
    std::vector<std::vector<double>> data;  // data[channel][sample]
    std::map<std::string, std::string> metadata;

    int column(const std::string& name) const;
    double at(const std::string& name, double t) const;  // nearest sample
};

Scenario parse_scenario(std::string_view text, const std::string& base_dir);
Scenario load_scenario(const std::string& path);

Recording run_simulation(const Scenario& scenario);

std::string csv_string(const Recording& rec);
std::string metadata_string(const Recording& rec);
void write_csv(const Recording& rec, const std::string& path);

}  // namespace emtsim
