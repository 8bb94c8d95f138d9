// SPDX-License-Identifier: Apache-2.0
//
// mbisac - multi-band cooperative ISAC beamforming and simulation library
// Copyright (C) 2026 mbisac contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef MBISAC_CHANNEL_HPP
#define MBISAC_CHANNEL_HPP

#include <cmath>
#include <random>
#include <vector>

#include "mbisac/config.hpp"
#include "mbisac/linalg.hpp"

namespace mbisac {

/// Thermal noise power k_B * T * bandwidth * noise_figure.
inline double noise_variance(double temperature_k, double bandwidth_hz, double noise_figure)
{
    if (temperature_k <= 0 || bandwidth_hz <= 0 || noise_figure <= 0)
        throw std::invalid_argument("noise_variance: inputs must be positive");
    return kBoltzmann * temperature_k * bandwidth_hz * noise_figure;
}

/// Free-space power gain (lambda / 4 pi d)^2.
inline double path_loss(double wavelength_m, double distance_m)
{
    if (wavelength_m <= 0 || distance_m <= 0)
        throw std::invalid_argument("path_loss: wavelength and distance must be positive");
    const double x = wavelength_m / (4.0 * M_PI * distance_m);
    return x * x;
}

/// ULA response, unit Euclidean norm; element m carries phase
/// m * 2*pi*spacing/wavelength * sin(angle).
inline VecC steering_vector(int n_elems, double spacing_m, double wavelength_m, double angle_rad)
{
    if (n_elems < 1)
        throw std::invalid_argument("steering_vector: n_elems must be >= 1");
    VecC a(n_elems);
    const double phase_step = 2.0 * M_PI * spacing_m / wavelength_m * std::sin(angle_rad);
    const double scale = 1.0 / std::sqrt(double(n_elems));
    for (int m = 0; m < n_elems; ++m)
        a[m] = std::polar(scale, m * phase_step);
    return a;
}

/// Sparse multipath channel, sqrt(Nt*Nk/P) * sum_p beta_p a_R(aoa_p) a_T(aod_p)^H.
/// Angles and gains are supplied so tests can pin individual paths.
inline MatC assemble_comm_channel(const BandParams &band, int n_rx, double rx_spacing_m,
                                  int n_tx, const std::vector<double> &aoa,
                                  const std::vector<double> &aod, const std::vector<cplx> &gain)
{
    const std::size_t paths = gain.size();
    if (paths == 0 || aoa.size() != paths || aod.size() != paths)
        throw std::invalid_argument("assemble_comm_channel: path arrays must be nonempty and equal-sized");
    MatC h = MatC::Zero(n_rx, n_tx);
    for (std::size_t p = 0; p < paths; ++p)
    {
        const VecC ar = steering_vector(n_rx, rx_spacing_m, band.wavelength_m, aoa[p]);
        const VecC at = steering_vector(n_tx, band.tx_spacing_m, band.wavelength_m, aod[p]);
        h += gain[p] * (ar * at.adjoint());
    }
    return std::sqrt(double(n_tx) * double(n_rx) / double(paths)) * h;
}

/// Draws one unnormalized channel realization for (band, user distance).
inline MatC gen_comm_channel(const BandParams &band, int n_rx, double rx_spacing_m, int n_tx,
                             double distance_m, std::mt19937_64 &rng)
{
    if (band.path_count < 1)
        throw std::invalid_argument("gen_comm_channel: path_count must be >= 1");
    const double f = path_loss(band.wavelength_m, distance_m);
    std::uniform_real_distribution<double> uang(-M_PI / 2.0, M_PI / 2.0);
    std::normal_distribution<double> ngauss(0.0, 1.0);
    std::vector<double> aoa(band.path_count), aod(band.path_count);
    std::vector<cplx> gain(band.path_count);
    const double sigma_gain = std::sqrt(f / 2.0);
    for (int p = 0; p < band.path_count; ++p)
    {
        aoa[p] = uang(rng);
        aod[p] = uang(rng);
        gain[p] = cplx(sigma_gain * ngauss(rng), sigma_gain * ngauss(rng));
    }
    return assemble_comm_channel(band, n_rx, rx_spacing_m, n_tx, aoa, aod, gain);
}

/// Noise-normalized target response covariance
/// Rbar = gamma * Nt * Nr * (a_R(phi)* kron a_T(phi)) (.)^H / sigma^2,
/// with gamma = rcs * lambda^2 / ((4 pi)^3 d^4).
inline MatC target_response_covariance(const BandParams &band, double sensing_angle_rad,
                                       double distance_m, int n_tx, int n_rx, double rcs)
{
    if (distance_m <= 0)
        throw std::invalid_argument("target_response_covariance: distance must be positive");
    const double lam = band.wavelength_m;
    const double gamma = rcs * lam * lam / (std::pow(4.0 * M_PI, 3) * std::pow(distance_m, 4));
    const VecC ar = steering_vector(n_rx, band.tx_spacing_m, lam, sensing_angle_rad);
    const VecC at = steering_vector(n_tx, band.tx_spacing_m, lam, sensing_angle_rad);
    VecC v(n_tx * n_rx);
    for (int r = 0; r < n_rx; ++r)
        v.segment(r * n_tx, n_tx) = std::conj(ar[r]) * at;
    const double scale = gamma * double(n_tx) * double(n_rx) / band.noise_variance_w;
    return scale * (v * v.adjoint());
}

/// Pilot matrix S (N_tot x L). Orthogonal mode scales DFT rows so that
/// S S^H = L I exactly; random mode draws iid unit-power QPSK symbols.
enum class PilotMode
{
    Orthogonal,
    RandomQpsk
};

inline MatC gen_pilot_symbols(int l_slots, int n_tot, PilotMode mode, std::mt19937_64 &rng)
{
    if (mode == PilotMode::Orthogonal && l_slots < n_tot)
        throw std::invalid_argument("gen_pilot_symbols: orthogonal mode requires L >= N_tot");
    MatC s(n_tot, l_slots);
    if (mode == PilotMode::Orthogonal)
    {
        for (int m = 0; m < n_tot; ++m)
            for (int l = 0; l < l_slots; ++l)
                s(m, l) = std::polar(1.0, -2.0 * M_PI * double(m) * double(l) / double(l_slots));
        return s;
    }
    std::uniform_int_distribution<int> quad(0, 3);
    for (int m = 0; m < n_tot; ++m)
        for (int l = 0; l < l_slots; ++l)
            s(m, l) = std::polar(1.0, M_PI / 4.0 + quad(rng) * M_PI / 2.0);
    return s;
}

/// Geometry draw and per-band path metadata for one Monte Carlo realization.
struct PathMeta
{
    std::vector<double> aoa, aod; // per path
    std::vector<cplx> gain;
};

struct ChannelSet
{
    // Noise-normalized channels Hbar[b][k] (N_k x N_t) and covariances Rbar[b].
    std::vector<std::vector<MatC>> Hbar;
    std::vector<MatC> Rbar;

    std::vector<double> user_z;                // drawn user positions
    double target_z = 0.0;
    std::vector<std::vector<double>> user_distance; // [b][k]
    std::vector<double> sensing_angle;              // [b]
    std::vector<double> sensing_distance;           // [b]
    std::vector<double> sensing_gain_var;           // gamma per band
    std::vector<std::vector<PathMeta>> paths;       // [b][k]

    int num_bands() const { return static_cast<int>(Rbar.size()); }
    int num_users() const { return Hbar.empty() ? 0 : static_cast<int>(Hbar[0].size()); }
};

/// Angle of a point relative to a ULA (measured from array broadside):
/// sin(angle) = <unit(point - midpoint), axis>.
inline double ula_angle(const Eigen::Vector3d &midpoint, const Eigen::Vector3d &axis,
                        const Eigen::Vector3d &point)
{
    const Eigen::Vector3d d = (point - midpoint).normalized();
    double s = d.dot(axis);
    s = std::min(1.0, std::max(-1.0, s));
    return std::asin(s);
}

/// Pure function of (config, seed): draws geometry, channels and target
/// covariances for one trial.
inline ChannelSet generate_channels(const SystemConfig &cfg, std::uint64_t seed)
{
    cfg.validate();
    std::mt19937_64 rng(seed);
    ChannelSet ch;

    std::uniform_real_distribution<double> uz(cfg.user_z_min, cfg.user_z_max);
    std::uniform_real_distribution<double> tz(cfg.target_z_min, cfg.target_z_max);
    ch.user_z.resize(cfg.num_users);
    for (int k = 0; k < cfg.num_users; ++k)
        ch.user_z[k] = uz(rng);
    ch.target_z = tz(rng);
    const Eigen::Vector3d target(cfg.target_x, cfg.target_y, ch.target_z);

    const int bcount = cfg.num_bands();
    ch.Hbar.resize(bcount);
    ch.Rbar.resize(bcount);
    ch.user_distance.resize(bcount);
    ch.sensing_angle.resize(bcount);
    ch.sensing_distance.resize(bcount);
    ch.sensing_gain_var.resize(bcount);
    ch.paths.resize(bcount);

    for (int b = 0; b < bcount; ++b)
    {
        const BandParams &band = cfg.bands[b];
        const double sigma = std::sqrt(band.noise_variance_w);
        ch.Hbar[b].resize(cfg.num_users);
        ch.user_distance[b].resize(cfg.num_users);
        ch.paths[b].resize(cfg.num_users);
        for (int k = 0; k < cfg.num_users; ++k)
        {
            const Eigen::Vector3d user(cfg.user_x, cfg.user_y, ch.user_z[k]);
            const double d = (user - band.bs_position).norm();
            ch.user_distance[b][k] = d;

            const double f = path_loss(band.wavelength_m, d);
            std::uniform_real_distribution<double> uang(-M_PI / 2.0, M_PI / 2.0);
            std::normal_distribution<double> ngauss(0.0, 1.0);
            PathMeta pm;
            pm.aoa.resize(band.path_count);
            pm.aod.resize(band.path_count);
            pm.gain.resize(band.path_count);
            const double sigma_gain = std::sqrt(f / 2.0);
            for (int p = 0; p < band.path_count; ++p)
            {
                pm.aoa[p] = uang(rng);
                pm.aod[p] = uang(rng);
                pm.gain[p] = cplx(sigma_gain * ngauss(rng), sigma_gain * ngauss(rng));
            }
            const MatC h = assemble_comm_channel(band, cfg.user_antennas, cfg.rx_spacing_m,
                                                 cfg.num_tx_antennas, pm.aoa, pm.aod, pm.gain);
            ch.Hbar[b][k] = h / sigma;
            ch.paths[b][k] = std::move(pm);
        }

        const double phi = ula_angle(band.bs_position, band.bs_axis, target);
        const double d_t = (target - band.bs_position).norm();
        ch.sensing_angle[b] = phi;
        ch.sensing_distance[b] = d_t;
        ch.sensing_gain_var[b] =
            cfg.rcs * band.wavelength_m * band.wavelength_m /
            (std::pow(4.0 * M_PI, 3) * std::pow(d_t, 4));
        ch.Rbar[b] = target_response_covariance(band, phi, d_t, cfg.num_tx_antennas,
                                                cfg.num_rx_antennas, cfg.rcs);
    }
    return ch;
}

} // namespace mbisac

#endif // MBISAC_CHANNEL_HPP
