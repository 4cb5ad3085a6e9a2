#pragma once

// Air-to-ground channel: FSPL plus LoS/NLoS excess loss, ULA steering vector,
// Rician small-scale fading and the composite SISO/MISO gains.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "uavtraj/environment.hpp"
#include "uavtraj/geometry.hpp"
#include "uavtraj/rng.hpp"

namespace uavtraj {

inline constexpr double kSpeedOfLight = 2.998e8;

// All configuration is in dB/dBm; everything downstream works in linear units.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double amplitude_from_loss_db(double loss_db) { return std::pow(10.0, -loss_db / 20.0); }

struct ChannelParams {
  double carrier_hz = 2e9;
  double eta_los_db = 0.1;
  double eta_nlos_db = 21.0;
  double rician_factor = db_to_linear(15.0);  // linear
  int num_antennas = 12;
  double noise_dbm = -75.0;
  double tx_power_dbm = 10.0;

  void validate() const {
    if (!(carrier_hz > 0.0)) throw std::invalid_argument("carrier frequency must be positive");
    if (!(eta_los_db <= eta_nlos_db)) throw std::invalid_argument("eta_los must not exceed eta_nlos");
    if (!(rician_factor >= 0.0)) throw std::invalid_argument("Rician factor must be non-negative");
    if (num_antennas < 1) throw std::invalid_argument("at least one antenna is required");
  }

  /// P / sigma^2 as a linear ratio.
  double tx_to_noise() const { return db_to_linear(tx_power_dbm - noise_dbm); }
};

inline double free_space_pathloss_db(double d, double carrier_hz) {
  if (!(d > 0.0)) throw std::domain_error("free-space pathloss needs a positive distance");
  return 20.0 * std::log10(d) + 20.0 * std::log10(carrier_hz) +
         20.0 * std::log10(4.0 * std::numbers::pi / kSpeedOfLight);
}

struct Pathloss {
  double db;
  bool los;
};

inline Pathloss pathloss(const Vec3& uav, const Vec3& gt, const UrbanMap& map, const ChannelParams& params) {
  const double d = distance(uav, gt);
  if (!(d > 0.0)) throw std::domain_error("UAV and GT positions coincide");
  const bool los = is_los(uav, gt, map);
  return {free_space_pathloss_db(d, params.carrier_hz) + (los ? params.eta_los_db : params.eta_nlos_db), los};
}

inline Pathloss pathloss(const Vec3& uav, std::size_t gt_index, const UrbanMap& map, const ChannelParams& params) {
  return pathloss(uav, map.gts.at(gt_index), map, params);
}

/// Direction cosine of the GT seen from a ULA whose axis is fixed along +x.
inline double los_phase(const Vec3& uav, const Vec3& gt) {
  const double d = distance(uav, gt);
  if (!(d > 0.0)) throw std::domain_error("UAV and GT positions coincide");
  return std::clamp((gt.x - uav.x) / d, -1.0, 1.0);
}

inline Eigen::VectorXcd steering_vector(double theta_bar, int num_antennas) {
  Eigen::VectorXcd v(num_antennas);
  for (int m = 0; m < num_antennas; ++m) v[m] = std::polar(1.0, std::numbers::pi * m * theta_bar);
  return v;
}

/// Rician mixture sqrt(G/(G+1)) steering + sqrt(1/(G+1)) CN(0, I).
inline Eigen::VectorXcd small_scale(double theta_bar, const ChannelParams& params, Rng& rng) {
  const int n = params.num_antennas;
  const double g = params.rician_factor;
  double los_w = 1.0;
  double nlos_w = 0.0;
  if (std::isfinite(g)) {
    los_w = std::sqrt(g / (g + 1.0));
    nlos_w = std::sqrt(1.0 / (g + 1.0));
  }
  Eigen::VectorXcd out = steering_vector(theta_bar, n) * los_w;
  for (int m = 0; m < n; ++m) out[m] += nlos_w * rng.complex_normal();
  return out;
}

struct ChannelVector {
  Eigen::VectorXcd gains;
  double pathloss_db = 0.0;
  bool los = false;
};

inline ChannelVector miso_channel(const Vec3& uav, const Vec3& gt, const UrbanMap& map,
                                  const ChannelParams& params, Rng& rng) {
  const Pathloss pl = pathloss(uav, gt, map, params);
  ChannelVector ch;
  ch.pathloss_db = pl.db;
  ch.los = pl.los;
  ch.gains = small_scale(los_phase(uav, gt), params, rng) * amplitude_from_loss_db(pl.db);
  return ch;
}

inline ChannelVector miso_channel(const Vec3& uav, std::size_t gt_index, const UrbanMap& map,
                                  const ChannelParams& params, Rng& rng) {
  return miso_channel(uav, map.gts.at(gt_index), map, params, rng);
}

/// Single-antenna broadcast gain: the reference (first) element of a full draw.
inline std::complex<double> broadcast_channel(const Vec3& uav, const Vec3& gt, const UrbanMap& map,
                                              const ChannelParams& params, Rng& rng) {
  return miso_channel(uav, gt, map, params, rng).gains[0];
}

inline std::complex<double> broadcast_channel(const Vec3& uav, std::size_t gt_index, const UrbanMap& map,
                                              const ChannelParams& params, Rng& rng) {
  return broadcast_channel(uav, map.gts.at(gt_index), map, params, rng);
}

inline double broadcast_snr(std::complex<double> h, const ChannelParams& params) {
  return params.tx_to_noise() * std::norm(h);
}

/// Stage tags for the keyed fading streams.
enum class FadingStage : std::uint64_t { initial = 0, broadcast = 1, transmission = 2, transmission_retry = 3 };

/// Fading draws keyed by (episode seed, step index, stage, GT index) so any
/// single draw can be reproduced without replaying the episode.
struct FadingSource {
  std::uint64_t seed = 0;

  Rng stream(std::uint64_t step, FadingStage stage, std::uint64_t gt) const {
    return Rng(derive_seed(seed, {step, static_cast<std::uint64_t>(stage), gt}));
  }
};

}  // namespace uavtraj
