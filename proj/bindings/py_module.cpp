#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <stdexcept>

#include "cresp/config.hpp"
#include "cresp/runner.hpp"
#include "cresp/spectral.hpp"
#include "cresp/tabular.hpp"

namespace py = pybind11;
using namespace cresp;

namespace {

using Rows = std::vector<std::vector<double>>;

nn::Tensor to_tensor(const Rows& rows, const char* what) {
  if (rows.empty()) throw std::invalid_argument(std::string(what) + " is empty");
  const int r = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows[0].size());
  nn::Tensor t = nn::Tensor::zeros({r, c});
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      throw std::invalid_argument(std::string(what) + " rows differ in length");
    for (int j = 0; j < c; ++j) t.data()[i * static_cast<int64_t>(c) + j] = rows[i][j];
  }
  return t;
}

Rows from_tensor(const nn::Tensor& t) {
  Rows out(t.rows(), std::vector<double>(t.cols()));
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) out[i][j] = t.data()[i * static_cast<int64_t>(t.cols()) + j];
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "characteristic-function representation lab, C++ core";

  m.def("discounted_inner", &discounted_inner, py::arg("omega"), py::arg("rewards"),
        py::arg("gamma"));

  m.def(
      "sample_omegas",
      [](int kappa, int t_len, uint64_t seed) {
        Rng rng(seed);
        return from_tensor(sample_omegas(kappa, t_len, rng).omegas);
      },
      py::arg("kappa"), py::arg("t_len"), py::arg("seed"));

  m.def(
      "cf_targets",
      [](const Rows& omegas, const Rows& rseqs, double gamma) {
        OmegaBatch om{to_tensor(omegas, "omegas")};
        CfTargets t = cf_targets(om, rseqs, gamma);
        return py::make_tuple(from_tensor(t.cos_t), from_tensor(t.sin_t));
      },
      py::arg("omegas"), py::arg("rseqs"), py::arg("gamma"));

  m.def(
      "cf_losses",
      [](const Rows& omegas, const Rows& rseqs, double gamma, const Rows& pred_cos,
         const Rows& pred_sin, double lam) {
        OmegaBatch om{to_tensor(omegas, "omegas")};
        CfTargets t = cf_targets(om, rseqs, gamma);
        nn::Tensor pc = to_tensor(pred_cos, "pred_cos"), ps = to_tensor(pred_sin, "pred_sin");
        py::dict d;
        d["wse"] = wse_loss(pc, ps, t).item();
        d["scs"] = scs_loss(pc, ps, t).item();
        d["combined"] = combined_loss(pc, ps, t, lam).item();
        return d;
      },
      py::arg("omegas"), py::arg("rseqs"), py::arg("gamma"), py::arg("pred_cos"),
      py::arg("pred_sin"), py::arg("lam") = 0.5);

  py::class_<TabularPOMDP>(m, "Pomdp")
      .def_readonly("n_states", &TabularPOMDP::n_states)
      .def_readonly("n_actions", &TabularPOMDP::n_actions)
      .def_readonly("gamma", &TabularPOMDP::gamma)
      .def_readonly("reward_support", &TabularPOMDP::reward_support)
      .def(
          "exact_cf",
          [](const TabularPOMDP& s, int state, const std::vector<int>& aseq,
             const std::vector<double>& omega) {
            const std::complex<double> z = exact_cf(s, state, aseq, omega);
            return py::make_tuple(z.real(), z.imag());
          },
          py::arg("state"), py::arg("aseq"), py::arg("omega"))
      .def(
          "sample_reward_seqs",
          [](const TabularPOMDP& s, int state, const std::vector<int>& aseq, int n,
             uint64_t seed) {
            Rng rng(seed);
            return sample_reward_seqs(s, state, aseq, n, rng);
          },
          py::arg("state"), py::arg("aseq"), py::arg("n"), py::arg("seed"))
      .def("value_iteration", [](const TabularPOMDP& s) { return value_iteration(s); })
      .def(
          "partition", [](const TabularPOMDP& s, int t_len) { return t_level_partition(s, t_len); },
          py::arg("t_len"))
      .def(
          "gap_audit",
          [](const TabularPOMDP& s, int t_len) {
            GapAudit g = theorem1_gap(s, t_len);
            py::dict d;
            d["max_gap"] = g.max_gap;
            d["min_gap"] = g.min_gap;
            d["bound"] = g.bound;
            d["pass"] = g.pass;
            return d;
          },
          py::arg("t_len"));

  m.def(
      "random_pomdp",
      [](uint64_t seed, int n_states, int n_actions, int n_rewards, double gamma) {
        Rng rng(seed);
        return random_pomdp(rng, n_states, n_actions, n_rewards, gamma);
      },
      py::arg("seed"), py::arg("n_states") = 5, py::arg("n_actions") = 2, py::arg("n_rewards") = 3,
      py::arg("gamma") = 0.9);

  m.def(
      "oracle_verify",
      [](int instances, const std::vector<int>& t_values, uint64_t seed,
         const std::string& out_csv) {
        OracleVerifyResult r = run_oracle_verify(instances, t_values, seed, out_csv);
        return py::make_tuple(r.n_pass, r.n_total);
      },
      py::arg("instances") = 50, py::arg("t_values") = std::vector<int>{1, 2, 3},
      py::arg("seed") = 0, py::arg("out_csv") = "");

  m.def(
      "validate_config",
      [](const std::string& text) { return render_config(parse_config_text(text)); },
      py::arg("text"), "parse config text and return the canonical echo");

  m.def(
      "train",
      [](const std::string& config_text, uint64_t seed) {
        RunConfig cfg = parse_config_text(config_text);
        TrainResult r = run_train(cfg, seed);
        py::dict d;
        d["run_dir"] = r.run_dir;
        d["steps_done"] = r.steps_done;
        d["final_test_return"] = r.final_test_return;
        d["eval_test_returns"] = r.eval_test_returns;
        return d;
      },
      py::arg("config_text"), py::arg("seed") = 1);
}
