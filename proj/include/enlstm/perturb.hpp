#pragma once

// Two perturbations keep ensemble training alive:
//
//  * kernel smoothing of the parameter ensemble, which contracts every member
//    toward the ensemble mean and adds noise proportional to the current
//    per-coordinate spread, so realizations neither collapse nor diverge;
//
//  * high-fidelity observation perturbation, which perturbs normalized targets
//    so that the disturbance has the same relative size it would have on the
//    real-world scale. The additive (mu / sigma) * eps term compensates for the
//    mean removed by z-score normalization.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "enlstm/error.hpp"
#include "enlstm/linalg.hpp"
#include "enlstm/rng.hpp"

namespace enlstm {

// Real-scale mean and standard deviation of one channel.
struct ChannelScale {
  double mean = 0.0;
  double stddev = 1.0;
  friend bool operator==(const ChannelScale&, const ChannelScale&) = default;
};

struct PerturbationConfig {
  double alpha = 0.99;         // contraction toward the ensemble mean, (0, 1]
  double h = 0.1;              // smoothing factor: noise variance = h * ensemble variance
  double h_decay = 1.0;        // optional geometric decay of h per iteration (1 = off)
  double eps_real_std = 0.02;  // std of the real-scale relative observation disturbance
  std::vector<ChannelScale> channel_stats;  // per target channel

  void validate() const {
    detail::require(alpha > 0.0 && alpha <= 1.0, "perturb: alpha must lie in (0, 1]");
    detail::require(h >= 0.0, "perturb: h must be >= 0");
    detail::require(h_decay > 0.0 && h_decay <= 1.0, "perturb: h_decay must lie in (0, 1]");
    detail::require(eps_real_std >= 0.0, "perturb: eps_real_std must be >= 0");
    for (std::size_t c = 0; c < channel_stats.size(); ++c) {
      if (!(channel_stats[c].stddev > 0.0)) throw InvalidArgument("degenerate channel " + std::to_string(c));
    }
  }

  // Smoothing factor in effect at a given iteration.
  double h_at(std::size_t iteration) const { return h * std::pow(h_decay, static_cast<double>(iteration)); }
};

// Kernel-smoothing perturbation of an ensemble (one member per column):
//   m'_jk = alpha * m_jk + (1 - alpha) * mean_k + tau_jk,  tau_jk ~ N(0, h * var_k)
// where mean_k and var_k are the pre-perturbation ensemble mean and sample
// variance of coordinate k. Noise for member j comes from its own stream.
inline Matrix smooth_perturb(const Matrix& ensemble, double alpha, double h, std::uint64_t seed) {
  if (ensemble.cols() < 2) throw InvalidArgument("smooth_perturb: variance undefined for fewer than 2 members");
  detail::require(alpha > 0.0 && alpha <= 1.0, "smooth_perturb: alpha must lie in (0, 1]");
  detail::require(h >= 0.0, "smooth_perturb: h must be >= 0");
  const Vector mean = ensemble_mean(ensemble);
  const Eigen::Index p = ensemble.rows();
  const Eigen::Index n = ensemble.cols();

  Vector noise_std = Vector::Zero(p);
  if (h > 0.0) {
    for (Eigen::Index k = 0; k < p; ++k) {
      long double ss = 0.0L;
      for (Eigen::Index j = 0; j < n; ++j) {
        const long double d = static_cast<long double>(ensemble(k, j)) - mean[k];
        ss += d * d;
      }
      noise_std[k] = std::sqrt(h * static_cast<double>(ss / (n - 1)));
    }
  }

  Matrix out(p, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.col(j) = alpha * ensemble.col(j) + (1.0 - alpha) * mean;
    if (h > 0.0) {
      Engine eng = make_engine(seed, {static_cast<std::uint64_t>(j)});
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index k = 0; k < p; ++k) out(k, j) += noise_std[k] * normal(eng);
    }
  }
  return out;
}

inline Matrix smooth_perturb(const Matrix& ensemble, const PerturbationConfig& cfg, std::uint64_t seed,
                             std::size_t iteration = 0) {
  return smooth_perturb(ensemble, cfg.alpha, cfg.h_at(iteration), seed);
}

// Disturbance compensation term (mu / sigma) * eps_real: the reciprocal of the
// channel's coefficient of variation times the real-scale disturbance.
inline double compensation_term(double eps_real, const ChannelScale& channel) {
  if (!(channel.stddev > 0.0)) throw InvalidArgument("degenerate channel");
  return channel.mean / channel.stddev * eps_real;
}

// One normalized observation perturbed by a given real-scale disturbance:
//   d* = (1 + eps) d + (mu / sigma) eps
inline double perturb_normalized(double d_obs, double eps_real, const ChannelScale& channel) {
  return (1.0 + eps_real) * d_obs + compensation_term(eps_real, channel);
}

// Perturbs a normalized observation vector for realization `member`.
// `channels[i]` indexes cfg.channel_stats for element i. eps_real is drawn
// independently per element from N(0, eps_real_std^2) on a stream fixed by
// (seed, member).
inline std::vector<double> perturb_observations(std::span<const double> d_obs, std::span<const std::size_t> channels,
                                                const PerturbationConfig& cfg, std::size_t member,
                                                std::uint64_t seed) {
  detail::require(d_obs.size() == channels.size(), "perturb_observations: one channel tag per element required");
  std::vector<double> out(d_obs.size());
  Engine eng = make_engine(seed, {static_cast<std::uint64_t>(member)});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < d_obs.size(); ++i) {
    if (channels[i] >= cfg.channel_stats.size())
      throw InvalidArgument("perturb_observations: missing statistics for channel " + std::to_string(channels[i]));
    const double z = normal(eng);
    const double eps = cfg.eps_real_std * z;
    out[i] = perturb_normalized(d_obs[i], eps, cfg.channel_stats[channels[i]]);
  }
  return out;
}

}  // namespace enlstm
