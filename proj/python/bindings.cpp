#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mqf/core.hpp"
#include "mqf/estimator.hpp"
#include "mqf/kernel.hpp"
#include "mqf/selection.hpp"
#include "mqf/simulate.hpp"

namespace py = pybind11;
using namespace mqf;

namespace {

using Cube = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolCube = py::array_t<bool, py::array::c_style | py::array::forcecast>;

MatrixPanel to_panel(const Cube& values, const std::optional<BoolCube>& mask) {
  if (values.ndim() != 3) throw DimensionMismatch("panel must be a (T, p1, p2) array");
  const auto T = values.shape(0), p1 = values.shape(1), p2 = values.shape(2);
  auto v = values.unchecked<3>();
  std::vector<Eigen::MatrixXd> slices(T, Eigen::MatrixXd(p1, p2));
  std::vector<Mask> masks(T, Mask::Constant(p1, p2, true));
  for (py::ssize_t t = 0; t < T; ++t)
    for (py::ssize_t i = 0; i < p1; ++i)
      for (py::ssize_t j = 0; j < p2; ++j) slices[t](i, j) = v(t, i, j);
  if (mask) {
    if (mask->ndim() != 3 || mask->shape(0) != T || mask->shape(1) != p1 || mask->shape(2) != p2)
      throw DimensionMismatch("mask shape must match the panel");
    auto m = mask->unchecked<3>();
    for (py::ssize_t t = 0; t < T; ++t)
      for (py::ssize_t i = 0; i < p1; ++i)
        for (py::ssize_t j = 0; j < p2; ++j) masks[t](i, j) = m(t, i, j);
  }
  return MatrixPanel(std::move(slices), std::move(masks));
}

py::tuple from_panel(const MatrixPanel& p) {
  Cube values({p.T(), p.p1(), p.p2()});
  BoolCube mask({p.T(), p.p1(), p.p2()});
  auto v = values.mutable_unchecked<3>();
  auto m = mask.mutable_unchecked<3>();
  for (int t = 0; t < p.T(); ++t)
    for (int i = 0; i < p.p1(); ++i)
      for (int j = 0; j < p.p2(); ++j) {
        v(t, i, j) = p.slice(t)(i, j);
        m(t, i, j) = p.observed(t, i, j);
      }
  return py::make_tuple(values, mask);
}

FitConfig make_config(int k1, int k2, std::uint64_t seed, int max_outer_iters, double obj_rel_tol,
                      double param_tol, int n_restarts, int threads) {
  FitConfig c;
  c.k1 = k1;
  c.k2 = k2;
  c.seed = seed;
  c.max_outer_iters = max_outer_iters;
  c.obj_rel_tol = obj_rel_tol;
  c.param_tol = param_tol;
  c.n_restarts = n_restarts;
  c.threads = threads;
  return c;
}

}  // namespace

PYBIND11_MODULE(_mqf, m) {
  m.doc() = "Quantile factor models for matrix-valued panels";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", PyExc_ValueError);
  py::register_exception<Degenerate>(m, "Degenerate", PyExc_RuntimeError);

  py::class_<FactorParams>(m, "FactorParams")
      .def(py::init<>())
      .def(py::init([](Eigen::MatrixXd R, Eigen::MatrixXd C, std::vector<Eigen::MatrixXd> F) {
             return FactorParams{std::move(R), std::move(C), std::move(F)};
           }),
           py::arg("R"), py::arg("C"), py::arg("F"))
      .def_readwrite("R", &FactorParams::R)
      .def_readwrite("C", &FactorParams::C)
      .def_readwrite("F", &FactorParams::F);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("params", &FitResult::params)
      .def_readonly("objective", &FitResult::objective)
      .def_readonly("objective_trace", &FitResult::objective_trace)
      .def_readonly("sigma1", &FitResult::sigma1)
      .def_readonly("sigma2", &FitResult::sigma2)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("tied_spectrum", &FitResult::tied_spectrum)
      .def_readonly("ridge_used", &FitResult::ridge_used);

  py::class_<KernelSpec>(m, "KernelSpec")
      .def_readonly("order_m", &KernelSpec::order_m)
      .def_readonly("poly_coeffs", &KernelSpec::poly_coeffs)
      .def_readonly("h", &KernelSpec::h)
      .def("k", &KernelSpec::k)
      .def("K", &KernelSpec::K);

  py::class_<SelectionResult>(m, "SelectionResult")
      .def_readonly("k1_hat", &SelectionResult::k1_hat)
      .def_readonly("k2_hat", &SelectionResult::k2_hat)
      .def_readonly("sigma1_full", &SelectionResult::sigma1_full)
      .def_readonly("sigma2_full", &SelectionResult::sigma2_full)
      .def_readonly("threshold_used", &SelectionResult::threshold_used);

  py::class_<SimTruth>(m, "SimTruth")
      .def_readonly("params", &SimTruth::params)
      .def_readonly("effective_k1", &SimTruth::effective_k1)
      .def_readonly("effective_k2", &SimTruth::effective_k2)
      .def_readonly("q_tau", &SimTruth::q_tau);

  m.def("check_loss", [](double u, double tau) { return check_loss(u, QuantileLevel(tau)); },
        py::arg("u"), py::arg("tau"));
  m.def("rate_L", [](int p1, int p2, int T) { return rate_L(p1, p2, T).value; });
  m.def(
      "objective",
      [](const Cube& x, const FactorParams& theta, double tau, std::optional<BoolCube> mask) {
        return objective(to_panel(x, mask), theta, QuantileLevel(tau));
      },
      py::arg("panel"), py::arg("theta"), py::arg("tau"), py::arg("mask") = py::none());
  m.def("theta_distance", &theta_distance);
  m.def("loading_distance", &loading_distance);
  m.def("space_similarity", &space_similarity);
  m.def("common_component", &common_component);
  m.def("normalize", &normalize);
  m.def("init_random", &init_random, py::arg("p1"), py::arg("p2"), py::arg("T"), py::arg("k1"),
        py::arg("k2"), py::arg("seed"));
  m.def("build_kernel", &build_kernel, py::arg("order_m"), py::arg("h"));
  m.def("default_bandwidth", &default_bandwidth, py::arg("T"), py::arg("order_m"),
        py::arg("c_exponent"), py::arg("scale") = 1.0);

  m.def(
      "fit",
      [](const Cube& x, double tau, int k1, int k2, std::uint64_t seed, int max_outer_iters,
         double obj_rel_tol, double param_tol, int n_restarts, int threads,
         std::optional<BoolCube> mask, std::optional<KernelSpec> kernel) {
        const MatrixPanel panel = to_panel(x, mask);
        const FitConfig cfg = make_config(k1, k2, seed, max_outer_iters, obj_rel_tol, param_tol,
                                          n_restarts, threads);
        py::gil_scoped_release release;
        return kernel ? smoothed_fit(panel, QuantileLevel(tau), cfg, *kernel)
                      : fit(panel, QuantileLevel(tau), cfg);
      },
      py::arg("panel"), py::arg("tau"), py::arg("k1"), py::arg("k2"), py::arg("seed") = 0,
      py::arg("max_outer_iters") = 100, py::arg("obj_rel_tol") = 1e-6, py::arg("param_tol") = 1e-5,
      py::arg("n_restarts") = 1, py::arg("threads") = 0, py::arg("mask") = py::none(),
      py::arg("kernel") = py::none());

  m.def(
      "select",
      [](const Cube& x, double tau, const std::string& method, int K1, int K2, double c0,
         std::uint64_t seed, double obj_rel_tol, std::optional<BoolCube> mask) {
        const MatrixPanel panel = to_panel(x, mask);
        FitConfig cfg = make_config(1, 1, seed, 100, obj_rel_tol, 1e-5, 1, 0);
        const QuantileLevel q(tau);
        py::gil_scoped_release release;
        if (method == "RM") return select_rm(panel, q, K1, K2, cfg);
        if (method == "IC") return select_ic(panel, q, K1, K2, cfg);
        if (method == "ER") return select_er(panel, q, K1, K2, c0, cfg);
        throw InvalidArgument("unknown selection method '" + method + "'");
      },
      py::arg("panel"), py::arg("tau"), py::arg("method") = "ER", py::arg("K1") = 6,
      py::arg("K2") = 6, py::arg("c0") = 1e-4, py::arg("seed") = 0, py::arg("obj_rel_tol") = 1e-6,
      py::arg("mask") = py::none());

  m.def(
      "impute",
      [](const Cube& x, const BoolCube& mask, const FitResult& res) {
        return from_panel(impute(to_panel(x, mask), res));
      },
      py::arg("panel"), py::arg("mask"), py::arg("fit"));

  m.def(
      "gen_panel",
      [](int T, int p1, int p2, int k1, int k2, double theta_star, const std::string& noise,
         bool dependent_errors, double tau, std::uint64_t seed) {
        DgpConfig cfg;
        cfg.T = T;
        cfg.p1 = p1;
        cfg.p2 = p2;
        cfg.k1 = k1;
        cfg.k2 = k2;
        cfg.theta_star = theta_star;
        cfg.noise = NoiseLaw::parse(noise);
        cfg.dependent_errors = dependent_errors;
        cfg.seed = seed;
        auto [panel, truth] = gen_panel(cfg, QuantileLevel(tau));
        return py::make_tuple(from_panel(panel)[0], truth);
      },
      py::arg("T"), py::arg("p1"), py::arg("p2"), py::arg("k1") = 2, py::arg("k2") = 3,
      py::arg("theta_star") = 3.0, py::arg("noise") = "normal", py::arg("dependent_errors") = false,
      py::arg("tau") = 0.5, py::arg("seed") = 0);

  m.def(
      "noise_quantile",
      [](const std::string& noise, double tau, bool dependent) {
        return noise_quantile(NoiseLaw::parse(noise), tau, dependent);
      },
      py::arg("noise"), py::arg("tau"), py::arg("dependent_errors") = false);
}
