#pragma once
#include <complex>
#include <vector>

#include "cresp/rng.hpp"
#include "cresp/tensor.hpp"

namespace cresp {

// Frequency rows for characteristic-function targets; one batch is shared by
// every instance of a minibatch and resampled per update.
struct OmegaBatch {
  nn::Tensor omegas;  // (kappa, t_len), standard normal entries
  int kappa() const { return omegas.shape[0]; }
  int t_len() const { return omegas.shape[1]; }
};

OmegaBatch sample_omegas(int kappa, int t_len, Rng& rng);

// sum_{t=1..T} gamma^t * omega_t * r_t  (the first term carries gamma^1)
double discounted_inner(const std::vector<double>& omega, const std::vector<double>& rewards,
                        double gamma);

// cos/sin of the discounted inner product for each (reward sequence, omega
// row) pair; constants for the loss graphs.
struct CfTargets {
  nn::Tensor cos_t, sin_t;  // (batch, kappa)
};

CfTargets cf_targets(const OmegaBatch& om, const std::vector<std::vector<double>>& rseqs,
                     double gamma);

// Denominator floor of the cosine-similarity loss: at the zero predictor the
// denominator evaluates to exactly this value.
inline constexpr double kScsEpsDen = 1e-8;

// mean over batch and omega rows of (pred_cos - cos)^2 + (pred_sin - sin)^2
nn::Tensor wse_loss(const nn::Tensor& pred_cos, const nn::Tensor& pred_sin,
                    const CfTargets& targets);

// mean over batch of -<pred, target>_omega / sqrt(<pred, pred>_omega + eps^2),
// with <.,.>_omega the mean over omega rows of cos*cos + sin*sin terms.
// Scale-invariant in the predictor; equals -1 when the predictor matches
// deterministic unit-modulus targets.
nn::Tensor scs_loss(const nn::Tensor& pred_cos, const nn::Tensor& pred_sin,
                    const CfTargets& targets);

// wse + lambda * scs
nn::Tensor combined_loss(const nn::Tensor& pred_cos, const nn::Tensor& pred_sin,
                         const CfTargets& targets, double lambda);

// Monte Carlo characteristic function of sampled reward sequences at one
// omega; errors on an empty sample set.
std::complex<double> empirical_cf(const std::vector<std::vector<double>>& samples,
                                  const std::vector<double>& omega, double gamma);

}  // namespace cresp
