#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fadesched/errors.hpp"
#include "fadesched/experiment.hpp"
#include "fadesched/region.hpp"

namespace py = pybind11;
using namespace fadesched;

namespace {

ExperimentConfig parse_config(const std::string& text) {
  return config_from_json(nlohmann::json::parse(text));
}

std::string run_csv(const std::string& config_text, std::optional<std::int64_t> horizon, std::size_t jobs) {
  auto config = parse_config(config_text);
  if (horizon) config.horizon = *horizon;
  config.validate();
  std::vector<SweepRow> rows;
  {
    py::gil_scoped_release release;
    rows = run_sweep(config, jobs);
  }
  std::ostringstream out;
  write_csv(out, config, rows);
  return out.str();
}

std::string analyze_json(const std::string& config_text, std::optional<std::vector<double>> lambda) {
  return analyze(parse_config(config_text), lambda).dump();
}

std::string membership_json(const std::string& model_text, const std::vector<double>& lambda) {
  const auto stats = derive_all_stats(model_from_json(nlohmann::json::parse(model_text)));
  return certificate_to_json(membership(lambda, stats)).dump();
}

double boundary(const std::string& model_text, const std::vector<double>& direction) {
  const auto stats = derive_all_stats(model_from_json(nlohmann::json::parse(model_text)));
  return boundary_scale(direction, stats);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  // the module keeps both type objects alive
  static PyObject* base = py::exception<Error>(m, "FadeschedError").ptr();
  static PyObject* validation = py::exception<Error>(m, "ValidationError", base).ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.is_validation()) {
        py::set_error(validation, e.what());
      } else {
        py::set_error(base, e.what());
      }
    } catch (const nlohmann::json::exception& e) {
      py::set_error(validation, e.what());
    }
  });

  m.def("preset_names", &preset_names);
  m.def("preset_json", [](const std::string& name, bool full) { return config_to_json(preset(name, full)).dump(); },
        py::arg("name"), py::arg("full") = false);
  m.def("run_csv", &run_csv, py::arg("config"), py::arg("horizon") = py::none(), py::arg("jobs") = 1);
  m.def("analyze_json", &analyze_json, py::arg("config"), py::arg("lam") = py::none());
  m.def("membership_json", &membership_json, py::arg("model"), py::arg("lam"));
  m.def("boundary_scale", &boundary, py::arg("model"), py::arg("direction"));
}
