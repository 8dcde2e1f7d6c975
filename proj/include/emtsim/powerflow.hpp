// Positive-sequence AC power flow (full Newton, polar form) producing the
// initialization snapshot that seeds the EMT run.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "emtsim/case_model.hpp"

namespace emtsim {

class PowerFlowError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PowerFlowSolution {
    std::vector<double> vm;  // per bus (case order), pu
    std::vector<double> va;  // rad, slack at 0
    std::vector<double> sg_p, sg_q;    // per SG plant, pu on system base
    std::vector<double> gfl_p, gfl_q;  // per GFL plant, pu on system base
    int iterations = 0;
    double max_mismatch = 0.0;
};

// Per-device complex power target on the system base plus the bus phasor set
// used to drive the EMT ideal sources.
struct DeviceTarget {
    double p = 0.0;
    double q = 0.0;
};

struct InitSnapshot {
    std::vector<double> vm, va;         // per bus
    std::vector<DeviceTarget> sg;       // system-base injections
    std::vector<DeviceTarget> gfl;
    std::vector<DeviceTarget> load;     // system-base draws (positive = consuming)
    std::vector<DeviceTarget> owf;      // zero until the plant connects
    std::string report(const SystemCase& sys) const;
};

Eigen::MatrixXcd build_ybus(const SystemCase& sys);

PowerFlowSolution solve_powerflow(const SystemCase& sys, double tol = 1e-10, int max_iter = 20);

InitSnapshot snapshot_for_emt(const PowerFlowSolution& sol, const SystemCase& sys);

}  // namespace emtsim
