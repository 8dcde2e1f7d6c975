// Builds and validates the staged start-up schedules: the bulk-system
// sequence (exciters, governors, ZIP swap, IBR reference ramp and source
// breaker opening) and the per-plant wind-farm energization sequence
// (POI breaker, plant switch, grid-side converter, turbine, rotor-side
// converter), with plants staggered in time.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "emtsim/case_model.hpp"

namespace emtsim {

enum class ActionKind {
    EnableExciters,
    EnableGovernors,
    SwapZipLoads,
    RampIbrRefs,
    OpenSourceBreakers,
    ConnectOwfPoi,
    CloseOwfSwitch,
    EnableGsc,
    StartTurbine,
    EnableRsc,
};

const char* action_name(ActionKind kind);

struct ScheduleAction {
    double time = 0.0;
    ActionKind kind = ActionKind::EnableExciters;
    int target = -1;  // OWF plant index; -1 addresses the whole group
};

struct InitTimes {
    double exciters = 0.5;
    double governors = 0.6;
    double zip_swap = 0.7;
    double ibr_ramp_start = 1.0;
    double ibr_ramp_end = 1.9;
    double ibr_swap = 2.0;
};

class ScheduleError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<ScheduleAction> default_bulk_schedule(const SystemCase& sys,
                                                  const InitTimes& times = {});

std::vector<ScheduleAction> default_owf_schedule(const SystemCase& sys, double t0,
                                                 double plant_spacing = 2.0,
                                                 double stage_spacing = 0.5);

// Rejects schedules that violate the staged partial order, reference ramps
// that outlive the source-breaker opening, and actions aimed at devices the
// case does not have.
void validate_schedule(const std::vector<ScheduleAction>& actions, const SystemCase& sys,
                       const InitTimes& times = {});

struct AppliedEvent {
    double time = 0.0;
    std::string description;
};

}  // namespace emtsim
