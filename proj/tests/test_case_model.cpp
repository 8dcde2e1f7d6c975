#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "emtsim/case_model.hpp"

using namespace emtsim;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

const char* kTwoBus = R"(
[SYSTEM]
mva 100
[BUS]
1 230 slack
2 230 PQ
[BRANCH]
1 2 0.0 0.1 0.0
[LOAD]
2 1.0 0.0
)";

// Independent record counter: scans the raw text for data lines per section,
// with no knowledge of the parser.
std::map<std::string, int> scan_counts(const std::string& text) {
    std::map<std::string, int> counts;
    std::istringstream is(text);
    std::string line, section;
    while (std::getline(is, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (line[first] == '#') continue;
        if (line[first] == '[') {
            const auto close = line.find(']');
            section = line.substr(first + 1, close - first - 1);
            continue;
        }
        if (!section.empty()) counts[section]++;
    }
    return counts;
}

}  // namespace

TEST_CASE("minimal two-bus case parses") {
    const SystemCase sys = parse_case(kTwoBus);
    CHECK(sys.buses.size() == 2);
    CHECK(sys.branches.size() == 1);
    CHECK(sys.loads.size() == 1);
    CHECK(sys.buses[0].type == BusType::Slack);
    CHECK(sys.mva_base == 100.0);
    CHECK(sys.nominal_hz == 60.0);
}

TEST_CASE("ZIP shares that do not sum to one are rejected") {
    const char* text = R"(
[SYSTEM]
mva 100
[BUS]
1 230 slack
[LOAD]
1 1.0 0.0 0.3 0.3 0.3
)";
    CHECK_THROWS_AS(parse_case(text), CaseError);
    try {
        parse_case(text);
    } catch (const CaseError& e) {
        CHECK(e.line() == 7);
    }
}

TEST_CASE("bundled nine-bus fixture matches an independent line scan") {
    const std::string text = read_file(std::string(EMTSIM_CASE_DIR) + "/nine_bus.case");
    const auto counts = scan_counts(text);
    REQUIRE(counts.at("BUS") == 9);
    REQUIRE(counts.at("SG") == 3);
    REQUIRE(counts.at("OWF") == 1);

    const SystemCase sys = parse_case(text);
    CHECK(sys.buses.size() == static_cast<std::size_t>(counts.at("BUS")));
    CHECK(sys.branches.size() == static_cast<std::size_t>(counts.at("BRANCH")));
    CHECK(sys.loads.size() == static_cast<std::size_t>(counts.at("LOAD")));
    CHECK(sys.sg_plants.size() == static_cast<std::size_t>(counts.at("SG")));
    CHECK(sys.gfl_plants.size() == static_cast<std::size_t>(counts.at("GFL")));
    CHECK(sys.owf_plants.size() == static_cast<std::size_t>(counts.at("OWF")));
}

TEST_CASE("parser reports syntax errors with line numbers") {
    CHECK_THROWS_WITH_AS(parse_case("[SYSTEM]\nmva 100\n[BUS]\n1 230 slack\nnot a number bus\n"),
                         doctest::Contains("line 5"), CaseError);
}

TEST_CASE("unknown bus references and duplicate ids are rejected") {
    CHECK_THROWS_AS(parse_case("[SYSTEM]\nmva 100\n[BUS]\n1 230 slack\n[LOAD]\n7 1 0\n"), CaseError);
    CHECK_THROWS_AS(parse_case("[SYSTEM]\nmva 100\n[BUS]\n1 230 slack\n1 230 PQ\n"), CaseError);
}

TEST_CASE("open breaker islands the grid") {
    SystemCase sys = parse_case(kTwoBus);
    sys.branches[0].breaker_state = BreakerState::Open;
    const auto rep = validate_case(sys);
    CHECK(!rep.ok());
    bool islanding = false;
    for (const auto& v : rep.violations) islanding |= v.code == "islanding";
    CHECK(islanding);
}

TEST_CASE("two slack buses in one island is a violation") {
    SystemCase sys = parse_case(kTwoBus);
    sys.buses[1].type = BusType::Slack;
    const auto rep = validate_case(sys);
    CHECK(!rep.ok());
    bool multiple = false;
    for (const auto& v : rep.violations) multiple |= v.code == "multiple_slack";
    CHECK(multiple);
}

TEST_CASE("valid nine-bus fixture yields an empty report") {
    const SystemCase sys = load_case(std::string(EMTSIM_CASE_DIR) + "/nine_bus.case");
    const auto rep = validate_case(sys);
    for (const auto& v : rep.violations) MESSAGE(v.code, ": ", v.message);
    CHECK(rep.ok());
}

TEST_CASE("rebase scales power and impedance in opposite directions") {
    CHECK(rebase(1.0, 100, 100, QuantityKind::Power) == doctest::Approx(1.0));
    CHECK(rebase(1.0, 2, 100, QuantityKind::Power) == doctest::Approx(0.02));

    // Impedance oracle: physical ohms are invariant under base change.
    const double kv = 230.0;
    const double z_ohm = 0.05 * kv * kv / 2.0;  // 0.05 pu on a 2 MVA base
    const double expected = z_ohm / (kv * kv / 100.0);
    CHECK(expected == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(rebase(0.05, 2, 100, QuantityKind::Impedance) == doctest::Approx(expected).epsilon(1e-12));

    CHECK_THROWS_AS(rebase(1.0, 0.0, 100, QuantityKind::Power), std::invalid_argument);
}

TEST_CASE("rebase round-trips to 1e-12") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> base(0.1, 5000.0);
    std::uniform_real_distribution<double> val(-10.0, 10.0);
    for (int i = 0; i < 200; ++i) {
        const double a = base(rng), b = base(rng), v = val(rng);
        for (auto kind : {QuantityKind::Power, QuantityKind::Impedance}) {
            const double rt = rebase(rebase(v, a, b, kind), b, a, kind);
            CHECK(std::abs(rt - v) < 1e-12 * std::max(1.0, std::abs(v)));
        }
    }
}

TEST_CASE("parse -> serialize -> parse round-trips") {
    const SystemCase sys = load_case(std::string(EMTSIM_CASE_DIR) + "/nine_bus.case");
    const std::string text = serialize_case(sys);
    const SystemCase again = parse_case(text);
    CHECK(serialize_case(again) == text);
    CHECK(again.buses.size() == sys.buses.size());
    CHECK(again.sg_plants.size() == sys.sg_plants.size());
    CHECK(again.sg_plants[0].h == sys.sg_plants[0].h);
    CHECK(again.owf_plants[0].params.c_dc == sys.owf_plants[0].params.c_dc);
    CHECK(again.gfl_plants[0].freq_deadband_hz == sys.gfl_plants[0].freq_deadband_hz);
}
