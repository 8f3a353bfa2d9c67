#include "cresp/spectral.hpp"

#include <cmath>
#include <stdexcept>

namespace cresp {

using nn::Tensor;

OmegaBatch sample_omegas(int kappa, int t_len, Rng& rng) {
  if (kappa < 1 || t_len < 1)
    throw std::invalid_argument("sample_omegas: kappa and t_len must be >= 1");
  Tensor om = Tensor::zeros({kappa, t_len});
  rng.fill_normal(om.data(), om.numel());
  return OmegaBatch{om};
}

double discounted_inner(const std::vector<double>& omega, const std::vector<double>& rewards,
                        double gamma) {
  if (omega.size() != rewards.size())
    throw std::invalid_argument("discounted_inner: omega and reward lengths differ");
  double acc = 0, g = gamma;
  for (size_t t = 0; t < omega.size(); ++t) {
    acc += g * omega[t] * rewards[t];
    g *= gamma;
  }
  return acc;
}

CfTargets cf_targets(const OmegaBatch& om, const std::vector<std::vector<double>>& rseqs,
                     double gamma) {
  const int b = static_cast<int>(rseqs.size());
  const int kappa = om.kappa();
  const int t_len = om.t_len();
  CfTargets out{Tensor::zeros({b, kappa}), Tensor::zeros({b, kappa})};
  for (int i = 0; i < b; ++i) {
    if (static_cast<int>(rseqs[i].size()) != t_len)
      throw std::invalid_argument("cf_targets: reward sequence length does not match omega rows");
    for (int k = 0; k < kappa; ++k) {
      double theta = 0, g = gamma;
      const double* w = om.omegas.data() + static_cast<int64_t>(k) * t_len;
      for (int t = 0; t < t_len; ++t) {
        theta += g * w[t] * rseqs[i][t];
        g *= gamma;
      }
      out.cos_t.data()[static_cast<int64_t>(i) * kappa + k] = std::cos(theta);
      out.sin_t.data()[static_cast<int64_t>(i) * kappa + k] = std::sin(theta);
    }
  }
  return out;
}

static void check_pred_shapes(const char* op, const Tensor& pc, const Tensor& ps,
                              const CfTargets& t) {
  if (pc.shape != ps.shape || pc.shape != t.cos_t.shape)
    throw std::invalid_argument(std::string(op) + ": prediction shape " + nn::shape_str(pc.shape) +
                                " does not match targets " + nn::shape_str(t.cos_t.shape));
}

Tensor wse_loss(const Tensor& pred_cos, const Tensor& pred_sin, const CfTargets& targets) {
  check_pred_shapes("wse_loss", pred_cos, pred_sin, targets);
  Tensor dc = nn::sub(pred_cos, targets.cos_t);
  Tensor ds = nn::sub(pred_sin, targets.sin_t);
  return nn::add(nn::mean(nn::mul(dc, dc)), nn::mean(nn::mul(ds, ds)));
}

Tensor scs_loss(const Tensor& pred_cos, const Tensor& pred_sin, const CfTargets& targets) {
  check_pred_shapes("scs_loss", pred_cos, pred_sin, targets);
  Tensor num = nn::mean_axis(
      nn::add(nn::mul(pred_cos, targets.cos_t), nn::mul(pred_sin, targets.sin_t)), 1);
  Tensor pow = nn::mean_axis(
      nn::add(nn::mul(pred_cos, pred_cos), nn::mul(pred_sin, pred_sin)), 1);
  Tensor den = nn::sqrt_t(nn::add_scalar(pow, kScsEpsDen * kScsEpsDen));
  return nn::neg(nn::mean(nn::div_t(num, den)));
}

Tensor combined_loss(const Tensor& pred_cos, const Tensor& pred_sin, const CfTargets& targets,
                     double lambda) {
  return nn::add(wse_loss(pred_cos, pred_sin, targets),
                 nn::scale(scs_loss(pred_cos, pred_sin, targets), lambda));
}

std::complex<double> empirical_cf(const std::vector<std::vector<double>>& samples,
                                  const std::vector<double>& omega, double gamma) {
  if (samples.empty()) throw std::invalid_argument("empirical_cf: empty sample set");
  double re = 0, im = 0;
  for (const auto& r : samples) {
    const double theta = discounted_inner(omega, r, gamma);
    re += std::cos(theta);
    im += std::sin(theta);
  }
  const double n = static_cast<double>(samples.size());
  return {re / n, im / n};
}

}  // namespace cresp
