#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vsdm/datasets.hpp"
#include "vsdm/errors.hpp"
#include "vsdm/kernel_check.hpp"
#include "vsdm/metrics.hpp"
#include "vsdm/oracles.hpp"
#include "vsdm/pipeline.hpp"
#include "vsdm/transition_kernel.hpp"

namespace py = pybind11;
using namespace vsdm;

namespace {

DriftMatrixGrid diagonal_grid(const Eigen::VectorXd& d, int steps) {
  auto g = DriftMatrixGrid::identity(static_cast<int>(d.size()), DriftMode::diagonal_invariant, steps);
  g.set_d_slot(0, d.asDiagonal().toDenseMatrix());
  return g;
}

std::vector<Eigen::MatrixXd> split_states(const Eigen::Ref<const Eigen::MatrixXd>& stacked, int dim) {
  if (dim < 1 || stacked.rows() % dim != 0) throw DomainError("rows must be a multiple of the dimension");
  std::vector<Eigen::MatrixXd> states;
  for (Eigen::Index k = 0; k < stacked.rows() / dim; ++k) states.emplace_back(stacked.middleRows(k * dim, dim));
  return states;
}

}  // namespace

PYBIND11_MODULE(_vsdm, m) {
  m.doc() = "Diffusion models with an adaptive linear forward drift";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<KernelError>(m, "KernelError", PyExc_ArithmeticError);
  py::register_exception<SamplerError>(m, "SamplerError", PyExc_RuntimeError);

  py::class_<BetaSchedule>(m, "BetaSchedule")
      .def(py::init([](double beta_min, double beta_max, double horizon, double alpha, int steps) {
             BetaSchedule s{beta_min, beta_max, horizon, alpha, steps};
             s.validate();
             return s;
           }),
           py::arg("beta_min") = 0.1, py::arg("beta_max") = 10.0, py::arg("horizon") = 1.0,
           py::arg("alpha") = 1.0, py::arg("steps") = 100)
      .def_readonly("beta_min", &BetaSchedule::beta_min)
      .def_readonly("beta_max", &BetaSchedule::beta_max)
      .def_readonly("horizon", &BetaSchedule::horizon)
      .def_readonly("steps", &BetaSchedule::steps)
      .def("beta", [](const BetaSchedule& s, double t) { return beta_at(s, t); })
      .def("sigma2", [](const BetaSchedule& s, double t) { return sigma2_at(s, t); })
      .def("time_at", &BetaSchedule::time_at);

  m.def(
      "kernel",
      [](const BetaSchedule& s, const Eigen::VectorXd& drift_diagonal, double t) {
        const TransitionKernel k = build_kernel(s, diagonal_grid(drift_diagonal, s.steps), t);
        return py::make_tuple(k.mean_map, k.covariance);
      },
      py::arg("schedule"), py::arg("drift_diagonal"), py::arg("t"),
      "Mean map and covariance of x_t given x_0 for a constant diagonal drift.");

  m.def(
      "gaussian_marginal",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const BetaSchedule& s,
         const Eigen::VectorXd& drift_diagonal, double t) {
        const GaussianMarginal g = propagate_gaussian(mean, cov, s, diagonal_grid(drift_diagonal, s.steps), t);
        return py::make_tuple(g.mean, g.covariance);
      },
      py::arg("mean"), py::arg("covariance"), py::arg("schedule"), py::arg("drift_diagonal"), py::arg("t"));

  m.def(
      "straightness",
      [](const Eigen::Ref<const Eigen::MatrixXd>& stacked, int dim, double h) {
        return straightness(split_states(stacked, dim), h);
      },
      py::arg("states"), py::arg("dim"), py::arg("h"),
      "Per-axis straightness; `states` stacks the (dim x chains) blocks of each time.");
  m.def("energy_distance", &energy_distance, py::arg("a"), py::arg("b"));
  m.def(
      "energy_permutation_test",
      [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int permutations, std::uint64_t seed) {
        Rng rng = make_stream(seed, 0);
        const PermutationTest t = energy_permutation_test(a, b, permutations, rng);
        return py::make_tuple(t.statistic, t.threshold, t.p_value);
      },
      py::arg("a"), py::arg("b"), py::arg("permutations") = 200, py::arg("seed") = 0);
  m.def("outer_fraction", &outer_fraction, py::arg("samples"), py::arg("axis"), py::arg("lo"), py::arg("hi"),
        py::arg("fraction") = 0.1);

  m.def(
      "generate",
      [](const std::string& kind, int count, std::vector<double> stretch, std::uint64_t seed) {
        Dataset d;
        d.kind = parse_dataset_kind(kind);
        d.stretch = Eigen::Map<Eigen::VectorXd>(stretch.data(), static_cast<Eigen::Index>(stretch.size()));
        d.validate();
        Rng rng = make_stream(seed, 0);
        return generate(d, count, rng);
      },
      py::arg("kind"), py::arg("count"), py::arg("stretch") = std::vector<double>{1.0, 1.0}, py::arg("seed") = 0);

  m.def(
      "kernel_check",
      [](int instances, std::uint64_t seed) {
        const KernelCheckReport r = run_kernel_check(instances, seed);
        py::dict errors;
        for (const auto& c : r.checks) errors[py::str(c.name)] = py::make_tuple(c.max_error, c.tolerance);
        return py::make_tuple(r.passed(), errors);
      },
      py::arg("instances") = 50, py::arg("seed") = 7);

  py::class_<TrainingRun>(m, "TrainingRun")
      .def(py::init([](const std::string& config_text) { return TrainingRun(RunConfig::parse(config_text)); }),
           py::arg("config"))
      .def_static("load", [](const std::string& path) { return TrainingRun::load(path); })
      .def("run_stage", &TrainingRun::run_stage)
      .def("run", &TrainingRun::run)
      .def("save", [](const TrainingRun& r, const std::string& path) { r.save(path); })
      .def_property_readonly("stages_done", &TrainingRun::stages_done)
      .def_property_readonly("finished", &TrainingRun::finished)
      .def_property_readonly("config_hash", [](const TrainingRun& r) { return r.config().hash_hex(); })
      .def_property_readonly("drift_scale",
                             [](const TrainingRun& r) { return drift_scale(r.drift_grid(), r.config().schedule.beta_max); })
      .def_property_readonly("dsm_losses",
                             [](const TrainingRun& r) {
                               std::vector<double> out;
                               for (const auto& s : r.stage_log()) out.push_back(s.dsm_loss);
                               return out;
                             })
      .def(
          "sample",
          [](const TrainingRun& r, int count, const std::string& mode, int nfe, std::uint64_t seed) {
            const SampleBatch b = r.sample(count, SamplerConfig{parse_sampler_mode(mode), nfe, seed, false});
            return b.samples;
          },
          py::arg("count"), py::arg("mode") = "sde", py::arg("nfe") = 0, py::arg("seed") = 0);
}
