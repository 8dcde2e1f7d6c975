#include "emtsim/init_sequencer.hpp"

#include <algorithm>
#include <map>

namespace emtsim {

const char* action_name(ActionKind kind) {
    switch (kind) {
        case ActionKind::EnableExciters: return "enable_exciters";
        case ActionKind::EnableGovernors: return "enable_governors";
        case ActionKind::SwapZipLoads: return "swap_zip_loads";
        case ActionKind::RampIbrRefs: return "ramp_ibr_refs";
        case ActionKind::OpenSourceBreakers: return "open_source_breakers";
        case ActionKind::ConnectOwfPoi: return "connect_owf_poi";
        case ActionKind::CloseOwfSwitch: return "close_owf_switch";
        case ActionKind::EnableGsc: return "enable_gsc";
        case ActionKind::StartTurbine: return "start_turbine";
        case ActionKind::EnableRsc: return "enable_rsc";
    }
    return "?";
}

std::vector<ScheduleAction> default_bulk_schedule(const SystemCase& sys, const InitTimes& t) {
    std::vector<ScheduleAction> out;
    if (!sys.sg_plants.empty()) {
        out.push_back({t.exciters, ActionKind::EnableExciters, -1});
        out.push_back({t.governors, ActionKind::EnableGovernors, -1});
    }
    if (!sys.loads.empty()) out.push_back({t.zip_swap, ActionKind::SwapZipLoads, -1});
    if (!sys.gfl_plants.empty()) {
        out.push_back({t.ibr_ramp_start, ActionKind::RampIbrRefs, -1});
        out.push_back({t.ibr_swap, ActionKind::OpenSourceBreakers, -1});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
    return out;
}

std::vector<ScheduleAction> default_owf_schedule(const SystemCase& sys, double t0,
                                                 double plant_spacing, double stage_spacing) {
    if (t0 < 2.0) throw ScheduleError("wind plants connect only after the bulk system is up");
    if (stage_spacing <= 0.0 || plant_spacing < 0.0)
        throw ScheduleError("schedule spacings must be positive");
    std::vector<ScheduleAction> out;
    for (int k = 0; k < static_cast<int>(sys.owf_plants.size()); ++k) {
        const double base = t0 + k * plant_spacing;
        out.push_back({base, ActionKind::ConnectOwfPoi, k});
        out.push_back({base + stage_spacing, ActionKind::CloseOwfSwitch, k});
        out.push_back({base + 2 * stage_spacing, ActionKind::EnableGsc, k});
        out.push_back({base + 3 * stage_spacing, ActionKind::StartTurbine, k});
        out.push_back({base + 4 * stage_spacing, ActionKind::EnableRsc, k});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
    return out;
}

namespace {

int owf_stage_rank(ActionKind kind) {
    switch (kind) {
        case ActionKind::ConnectOwfPoi: return 0;
        case ActionKind::CloseOwfSwitch: return 1;
        case ActionKind::EnableGsc: return 2;
        case ActionKind::StartTurbine: return 3;
        case ActionKind::EnableRsc: return 4;
        default: return -1;
    }
}

}  // namespace

void validate_schedule(const std::vector<ScheduleAction>& actions, const SystemCase& sys,
                       const InitTimes& times) {
    if (!(times.exciters < times.governors && times.governors < times.zip_swap &&
          times.zip_swap < times.ibr_swap))
        throw ScheduleError("bulk stage times must keep the exciter/governor/load/IBR order");
    if (!(times.ibr_ramp_start < times.ibr_ramp_end && times.ibr_ramp_end <= times.ibr_swap))
        throw ScheduleError("IBR reference ramp must finish before the source breakers open");

    std::map<ActionKind, double> bulk_time;
    std::map<int, std::vector<std::pair<double, int>>> owf_stages;  // plant -> (time, rank)
    for (const auto& a : actions) {
        const int rank = owf_stage_rank(a.kind);
        if (rank >= 0) {
            if (a.target < 0 || a.target >= static_cast<int>(sys.owf_plants.size()))
                throw ScheduleError(std::string("action ") + action_name(a.kind) +
                                    " targets a wind plant the case does not have");
            owf_stages[a.target].emplace_back(a.time, rank);
        } else {
            if (a.kind == ActionKind::EnableExciters || a.kind == ActionKind::EnableGovernors) {
                if (sys.sg_plants.empty())
                    throw ScheduleError("SG staging action on a case without SG plants");
            }
            if (a.kind == ActionKind::RampIbrRefs || a.kind == ActionKind::OpenSourceBreakers) {
                if (sys.gfl_plants.empty())
                    throw ScheduleError("IBR staging action on a case without GFL plants");
            }
            if (bulk_time.count(a.kind))
                throw ScheduleError(std::string("duplicate action ") + action_name(a.kind));
            bulk_time[a.kind] = a.time;
        }
    }

    auto ordered = [&](ActionKind first, ActionKind second) {
        if (bulk_time.count(first) && bulk_time.count(second) &&
            bulk_time.at(first) >= bulk_time.at(second))
            throw ScheduleError(std::string(action_name(first)) + " must precede " +
                                action_name(second));
    };
    ordered(ActionKind::EnableExciters, ActionKind::EnableGovernors);
    ordered(ActionKind::EnableGovernors, ActionKind::SwapZipLoads);
    ordered(ActionKind::SwapZipLoads, ActionKind::OpenSourceBreakers);
    ordered(ActionKind::RampIbrRefs, ActionKind::OpenSourceBreakers);

    for (const auto& [plant, stages] : owf_stages) {
        auto sorted = stages;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i].second <= sorted[i - 1].second)
                throw ScheduleError("wind-plant stages for plant " + std::to_string(plant) +
                                    " violate the energization order");
        }
        if (!sorted.empty() && bulk_time.count(ActionKind::OpenSourceBreakers) &&
            sorted.front().first < bulk_time.at(ActionKind::OpenSourceBreakers))
            throw ScheduleError("wind plants connect only after the bulk system is up");
    }
}

}  // namespace emtsim
