#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "emtsim/case_model.hpp"
#include "emtsim/init_sequencer.hpp"

using namespace emtsim;

namespace {

SystemCase nine_bus() { return load_case(std::string(EMTSIM_CASE_DIR) + "/nine_bus.case"); }
SystemCase owf_pair() { return load_case(std::string(EMTSIM_CASE_DIR) + "/owf_pair.case"); }

double time_of(const std::vector<ScheduleAction>& actions, ActionKind kind, int target = -1) {
    for (const auto& a : actions)
        if (a.kind == kind && a.target == target) return a.time;
    return -1.0;
}

}  // namespace

TEST_CASE("default bulk schedule lands on the staged start-up times") {
    const auto sys = nine_bus();
    const auto actions = default_bulk_schedule(sys);
    CHECK(time_of(actions, ActionKind::EnableExciters) == doctest::Approx(0.5));
    CHECK(time_of(actions, ActionKind::EnableGovernors) == doctest::Approx(0.6));
    CHECK(time_of(actions, ActionKind::SwapZipLoads) == doctest::Approx(0.7));
    CHECK(time_of(actions, ActionKind::OpenSourceBreakers) == doctest::Approx(2.0));
    CHECK(time_of(actions, ActionKind::RampIbrRefs) == doctest::Approx(1.0));
    CHECK(std::is_sorted(actions.begin(), actions.end(),
                         [](const auto& a, const auto& b) { return a.time < b.time; }));
    CHECK_NOTHROW(validate_schedule(actions, sys));
}

TEST_CASE("a case without GFL plants emits no source-breaker action") {
    auto sys = nine_bus();
    sys.gfl_plants.clear();
    const auto actions = default_bulk_schedule(sys);
    CHECK(time_of(actions, ActionKind::OpenSourceBreakers) == -1.0);
    CHECK(time_of(actions, ActionKind::RampIbrRefs) == -1.0);
    CHECK(time_of(actions, ActionKind::EnableExciters) == doctest::Approx(0.5));
}

TEST_CASE("overridden stage times pass through") {
    const auto sys = nine_bus();
    InitTimes t;
    t.exciters = 0.4;
    const auto actions = default_bulk_schedule(sys, t);
    CHECK(time_of(actions, ActionKind::EnableExciters) == doctest::Approx(0.4));
}

TEST_CASE("wind-plant schedule staggers POI connections") {
    const auto sys = owf_pair();
    const auto actions = default_owf_schedule(sys, 10.0, 2.0, 0.5);
    CHECK(time_of(actions, ActionKind::ConnectOwfPoi, 0) == doctest::Approx(10.0));
    CHECK(time_of(actions, ActionKind::ConnectOwfPoi, 1) == doctest::Approx(12.0));
    CHECK(time_of(actions, ActionKind::CloseOwfSwitch, 0) == doctest::Approx(10.5));
    CHECK(time_of(actions, ActionKind::EnableGsc, 0) == doctest::Approx(11.0));
    CHECK(time_of(actions, ActionKind::StartTurbine, 0) == doctest::Approx(11.5));
    CHECK(time_of(actions, ActionKind::EnableRsc, 0) == doctest::Approx(12.0));
    CHECK_NOTHROW(validate_schedule(actions, sys));
}

TEST_CASE("a single plant gets one staged sequence") {
    const auto sys = nine_bus();
    const auto actions = default_owf_schedule(sys, 10.0);
    CHECK(actions.size() == 5);
    for (const auto& a : actions) CHECK(a.target == 0);
}

TEST_CASE("wind plants cannot connect before the bulk system is up") {
    CHECK_THROWS_AS(default_owf_schedule(nine_bus(), 1.5), ScheduleError);
}

TEST_CASE("permuted plant stages are rejected at validation") {
    const auto sys = nine_bus();
    auto actions = default_owf_schedule(sys, 10.0);
    // swap the turbine start ahead of the grid-side converter
    for (auto& a : actions) {
        if (a.kind == ActionKind::StartTurbine) a.time = 10.9;
    }
    CHECK_THROWS_AS(validate_schedule(actions, sys), ScheduleError);
}

TEST_CASE("bulk-stage permutations are rejected") {
    const auto sys = nine_bus();
    auto actions = default_bulk_schedule(sys);
    for (auto& a : actions)
        if (a.kind == ActionKind::EnableExciters) a.time = 0.65;
    CHECK_THROWS_AS(validate_schedule(actions, sys), ScheduleError);
}

TEST_CASE("a reference ramp that outlives the breaker opening is rejected") {
    const auto sys = nine_bus();
    InitTimes t;
    t.ibr_ramp_end = 2.3;
    CHECK_THROWS_AS(validate_schedule(default_bulk_schedule(sys), sys, t), ScheduleError);
}

TEST_CASE("actions aimed at missing devices are rejected") {
    auto sys = nine_bus();
    std::vector<ScheduleAction> actions{{10.0, ActionKind::ConnectOwfPoi, 3}};
    CHECK_THROWS_AS(validate_schedule(actions, sys), ScheduleError);

    auto no_sg = sys;
    no_sg.sg_plants.clear();
    std::vector<ScheduleAction> bulk{{0.5, ActionKind::EnableExciters, -1}};
    CHECK_THROWS_AS(validate_schedule(bulk, no_sg), ScheduleError);
}
