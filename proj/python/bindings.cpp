// Python bindings for the case model, power flow and simulation engine.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "emtsim/case_model.hpp"
#include "emtsim/powerflow.hpp"
#include "emtsim/scenario_engine.hpp"

namespace py = pybind11;
using namespace emtsim;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

QuantityKind kind_from_string(const std::string& kind) {
    if (kind == "power") return QuantityKind::Power;
    if (kind == "impedance") return QuantityKind::Impedance;
    throw std::invalid_argument("kind must be 'power' or 'impedance'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "fixed-timestep EMT simulation of an AC grid with synchronous, "
              "grid-following and offshore wind plants";

    py::class_<SystemCase>(m, "SystemCase")
        .def_readonly("mva_base", &SystemCase::mva_base)
        .def_readonly("nominal_hz", &SystemCase::nominal_hz)
        .def_property_readonly("n_buses", [](const SystemCase& s) { return s.buses.size(); })
        .def_property_readonly("n_branches", [](const SystemCase& s) { return s.branches.size(); })
        .def_property_readonly("n_loads", [](const SystemCase& s) { return s.loads.size(); })
        .def_property_readonly("n_sg", [](const SystemCase& s) { return s.sg_plants.size(); })
        .def_property_readonly("n_gfl", [](const SystemCase& s) { return s.gfl_plants.size(); })
        .def_property_readonly("n_owf", [](const SystemCase& s) { return s.owf_plants.size(); })
        .def_property_readonly("bus_ids",
                               [](const SystemCase& s) {
                                   std::vector<int> ids;
                                   for (const auto& b : s.buses) ids.push_back(b.id);
                                   return ids;
                               })
        .def("__repr__", [](const SystemCase& s) {
            return "<SystemCase: " + std::to_string(s.buses.size()) + " buses, " +
                   std::to_string(s.sg_plants.size()) + " SG, " +
                   std::to_string(s.gfl_plants.size()) + " GFL, " +
                   std::to_string(s.owf_plants.size()) + " OWF>";
        });

    py::class_<PowerFlowSolution>(m, "PowerFlowSolution")
        .def_property_readonly("vm", [](const PowerFlowSolution& s) { return to_array(s.vm); })
        .def_property_readonly("va", [](const PowerFlowSolution& s) { return to_array(s.va); })
        .def_readonly("iterations", &PowerFlowSolution::iterations)
        .def_readonly("max_mismatch", &PowerFlowSolution::max_mismatch)
        .def_property_readonly("sg_p", [](const PowerFlowSolution& s) { return to_array(s.sg_p); })
        .def_property_readonly("sg_q", [](const PowerFlowSolution& s) { return to_array(s.sg_q); });

    py::class_<Scenario>(m, "Scenario")
        .def_readonly("case_path", &Scenario::case_path)
        .def_readonly("sys", &Scenario::sys)
        .def_readwrite("dt", &Scenario::dt)
        .def_readwrite("t_end", &Scenario::t_end)
        .def_readwrite("record_dt", &Scenario::record_dt)
        .def_readwrite("owf_t0", &Scenario::owf_t0)
        .def_readwrite("channels", &Scenario::channels);

    py::class_<Recording>(m, "Recording")
        .def_readonly("channels", &Recording::channels)
        .def_readonly("sample_period", &Recording::sample_period)
        .def_readonly("metadata", &Recording::metadata)
        .def_property_readonly("time", [](const Recording& r) { return to_array(r.time); })
        .def("channel",
             [](const Recording& r, const std::string& name) {
                 const int c = r.column(name);
                 if (c < 0) throw std::invalid_argument("unknown channel " + name);
                 return to_array(r.data[c]);
             })
        .def("at", &Recording::at, py::arg("channel"), py::arg("t"))
        .def("write_csv", [](const Recording& r, const std::string& path) { write_csv(r, path); })
        .def("to_csv_string", [](const Recording& r) { return csv_string(r); })
        .def("__repr__", [](const Recording& r) {
            return "<Recording: " + std::to_string(r.channels.size()) + " channels, " +
                   std::to_string(r.time.size()) + " samples>";
        });

    m.def("parse_case", &parse_case, py::arg("text"), "parse a case file from text");
    m.def("load_case", &load_case, py::arg("path"), "load and parse a case file");
    m.def("serialize_case", &serialize_case, py::arg("case"));
    m.def(
        "validate_case",
        [](const SystemCase& sys) {
            std::vector<std::pair<std::string, std::string>> out;
            for (const auto& v : validate_case(sys).violations) out.emplace_back(v.code, v.message);
            return out;
        },
        py::arg("case"), "list of (code, message) violations; empty means runnable");
    m.def(
        "rebase",
        [](double value, double from_mva, double to_mva, const std::string& kind) {
            return rebase(value, from_mva, to_mva, kind_from_string(kind));
        },
        py::arg("value"), py::arg("from_mva"), py::arg("to_mva"), py::arg("kind") = "power");
    m.def("solve_powerflow", &solve_powerflow, py::arg("case"), py::arg("tol") = 1e-10,
          py::arg("max_iter") = 20);
    m.def("load_scenario", &load_scenario, py::arg("path"));
    m.def("run_simulation", &run_simulation, py::arg("scenario"),
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "apply_wind_profile",
        [](const std::vector<std::pair<double, double>>& pts, double t) {
            std::vector<WindPoint> points;
            for (auto [a, b] : pts) points.push_back({a, b});
            return apply_wind_profile(points, t);
        },
        py::arg("points"), py::arg("t"));

    m.attr("__version__") = "0.1.0";
}
