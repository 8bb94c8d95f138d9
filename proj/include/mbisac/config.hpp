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

#ifndef MBISAC_CONFIG_HPP
#define MBISAC_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbisac/linalg.hpp"

namespace mbisac {

constexpr double kBoltzmann = 1.381e-23; // J/K
constexpr double kSpeedOfLight = 2.998e8; // m/s
constexpr double kLn2 = 0.6931471805599453;

inline double nats_to_bits(double r) { return r / kLn2; }
inline double bits_to_nats(double r) { return r * kLn2; }

/// One base station / frequency band. Each BS operates in its own band.
struct BandParams
{
    double center_frequency_hz = 0.0;
    double wavelength_m = 0.0; // c / f
    double bandwidth_hz = 0.0;
    int path_count = 1;
    double tx_spacing_m = 0.0; // half wavelength by default
    double noise_variance_w = 0.0;
    bool high_frequency = false; // hybrid (RF + baseband) precoding band
    Eigen::Vector3d bs_position{0, 0, 0};
    Eigen::Vector3d bs_axis{0, 0, 1}; // ULA orientation, unit vector
};

struct SystemConfig
{
    std::vector<BandParams> bands;

    int num_users = 2;
    int user_antennas = 2;    // N_k, identical for all users
    double rx_spacing_m = 0.0; // user ULA spacing (half of band-1 wavelength)

    int num_tx_antennas = 8; // N_t per BS
    int num_rx_antennas = 2; // N_r per BS

    double total_power_w = 0.1; // P_max
    double min_rate_bits = 1e5; // r_min, bits/s, summed over bands per user
    int symbol_slots = 30;      // L

    double slack_penalty = 1.0;     // rho
    double feasibility_eps = 1e-5;  // epsilon, relative slack threshold
    double sr_rel_tol = 1e-3;       // outer loop termination
    double rcs = 1.0;               // beta_RCS

    double temperature_k = 290.0;
    double noise_figure = 7.94;

    // User ULA midpoints at (x, y, z_k), z_k uniform in [z_min, z_max].
    double user_x = 25.0, user_y = 1.5;
    double user_z_min = 25.0, user_z_max = 275.0;
    // Point target at (x, y, z_t), z_t uniform in the same range.
    double target_x = -25.0, target_y = 1.0;
    double target_z_min = 25.0, target_z_max = 275.0;

    double kkt_tol = 1e-7;
    int max_newton_iters = 200;
    int feasibility_cap = 50;
    int main_cap = 100;

    std::uint64_t seed = 1;

    int num_bands() const { return static_cast<int>(bands.size()); }
    int total_user_antennas() const { return num_users * user_antennas; }

    void validate() const;
    static SystemConfig defaults(int num_bands = 3);
};

inline double band_wavelength(double center_frequency_hz)
{
    return kSpeedOfLight / center_frequency_hz;
}

inline void SystemConfig::validate() const
{
    if (bands.empty())
        throw std::invalid_argument("config: at least one band required");
    for (const auto &b : bands)
    {
        if (b.center_frequency_hz <= 0 || b.bandwidth_hz <= 0 || b.wavelength_m <= 0 ||
            b.tx_spacing_m <= 0 || b.noise_variance_w <= 0 || b.path_count < 1)
            throw std::invalid_argument("config: band parameters must be strictly positive");
        const double rel = std::abs(b.wavelength_m * b.center_frequency_hz - kSpeedOfLight) / kSpeedOfLight;
        if (rel > 1e-6)
            throw std::invalid_argument("config: wavelength inconsistent with center frequency");
        if (std::abs(b.bs_axis.norm() - 1.0) > 1e-9)
            throw std::invalid_argument("config: bs_axis must be a unit vector");
    }
    if (total_power_w <= 0)
        throw std::invalid_argument("config: total_power_w must be positive");
    if (symbol_slots < 1)
        throw std::invalid_argument("config: symbol_slots must be >= 1");
    if (slack_penalty <= 0 || feasibility_eps <= 0)
        throw std::invalid_argument("config: slack_penalty and feasibility_eps must be positive");
    if (num_users < 1 || user_antennas < 1 || num_tx_antennas < 1 || num_rx_antennas < 1)
        throw std::invalid_argument("config: antenna/user counts must be >= 1");
    if (min_rate_bits < 0)
        throw std::invalid_argument("config: min_rate_bits must be nonnegative");
}

inline SystemConfig SystemConfig::defaults(int num_bands)
{
    if (num_bands < 1 || num_bands > 3)
        throw std::invalid_argument("defaults: num_bands must be in [1,3]");
    SystemConfig c;

    struct BandSeed
    {
        double f, bw;
        int paths;
        bool high;
        Eigen::Vector3d pos, axis;
    };
    const BandSeed seeds[3] = {
        {6.0e9, 1.0e6, 8, false, {0, 5, 0}, {0, 0, 1}},
        {26.0e9, 4.0e6, 4, true, {0, 5, 300}, {0, 0, 1}},
        {26.5e9, 4.0e6, 4, true, {210, 5, -80}, {1, 0, 0}},
    };
    for (int i = 0; i < num_bands; ++i)
    {
        BandParams b;
        b.center_frequency_hz = seeds[i].f;
        b.wavelength_m = band_wavelength(seeds[i].f);
        b.bandwidth_hz = seeds[i].bw;
        b.path_count = seeds[i].paths;
        b.tx_spacing_m = b.wavelength_m / 2.0;
        b.noise_variance_w = kBoltzmann * c.temperature_k * b.bandwidth_hz * c.noise_figure;
        b.high_frequency = seeds[i].high;
        b.bs_position = seeds[i].pos;
        b.bs_axis = seeds[i].axis;
        c.bands.push_back(b);
    }
    // Users keep the band-1 half-wavelength spacing on every band to avoid
    // antenna coupling at the low frequency.
    c.rx_spacing_m = band_wavelength(6.0e9) / 2.0;
    return c;
}

// ---------------------------------------------------------------------------
// JSON (de)serialization. The schema is documented in the README.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SystemConfig &c)
{
    nlohmann::json j;
    j["bs"] = {{"tx_antennas", c.num_tx_antennas}, {"rx_antennas", c.num_rx_antennas}};
    j["users"] = {{"count", c.num_users},
                  {"antennas", c.user_antennas},
                  {"rx_spacing_m", c.rx_spacing_m},
                  {"position_xy", {c.user_x, c.user_y}},
                  {"z_range", {c.user_z_min, c.user_z_max}}};
    j["target"] = {{"position_xy", {c.target_x, c.target_y}},
                   {"z_range", {c.target_z_min, c.target_z_max}},
                   {"rcs", c.rcs}};
    j["power"] = {{"total_w", c.total_power_w}};
    j["rates"] = {{"min_rate_bits", c.min_rate_bits}};
    j["sim"] = {{"symbol_slots", c.symbol_slots},
                {"slack_penalty", c.slack_penalty},
                {"feasibility_eps", c.feasibility_eps},
                {"sr_rel_tol", c.sr_rel_tol},
                {"temperature_k", c.temperature_k},
                {"noise_figure", c.noise_figure},
                {"seed", c.seed}};
    j["solver"] = {{"kkt_tol", c.kkt_tol},
                   {"max_newton_iters", c.max_newton_iters},
                   {"feasibility_cap", c.feasibility_cap},
                   {"main_cap", c.main_cap}};
    j["bands"] = nlohmann::json::array();
    for (const auto &b : c.bands)
    {
        nlohmann::json jb;
        jb["center_frequency_hz"] = b.center_frequency_hz;
        jb["wavelength_m"] = b.wavelength_m;
        jb["bandwidth_hz"] = b.bandwidth_hz;
        jb["path_count"] = b.path_count;
        jb["tx_spacing_m"] = b.tx_spacing_m;
        jb["noise_variance_w"] = b.noise_variance_w;
        jb["high_frequency"] = b.high_frequency;
        jb["bs_position"] = {b.bs_position.x(), b.bs_position.y(), b.bs_position.z()};
        jb["bs_axis"] = {b.bs_axis.x(), b.bs_axis.y(), b.bs_axis.z()};
        j["bands"].push_back(jb);
    }
    return j;
}

inline SystemConfig config_from_json(const nlohmann::json &j)
{
    SystemConfig c = SystemConfig::defaults(3);
    c.bands.clear();

    if (j.contains("bs"))
    {
        c.num_tx_antennas = j["bs"].value("tx_antennas", c.num_tx_antennas);
        c.num_rx_antennas = j["bs"].value("rx_antennas", c.num_rx_antennas);
    }
    if (j.contains("users"))
    {
        const auto &u = j["users"];
        c.num_users = u.value("count", c.num_users);
        c.user_antennas = u.value("antennas", c.user_antennas);
        c.rx_spacing_m = u.value("rx_spacing_m", c.rx_spacing_m);
        if (u.contains("position_xy"))
        {
            c.user_x = u["position_xy"][0];
            c.user_y = u["position_xy"][1];
        }
        if (u.contains("z_range"))
        {
            c.user_z_min = u["z_range"][0];
            c.user_z_max = u["z_range"][1];
        }
    }
    if (j.contains("target"))
    {
        const auto &t = j["target"];
        if (t.contains("position_xy"))
        {
            c.target_x = t["position_xy"][0];
            c.target_y = t["position_xy"][1];
        }
        if (t.contains("z_range"))
        {
            c.target_z_min = t["z_range"][0];
            c.target_z_max = t["z_range"][1];
        }
        c.rcs = t.value("rcs", c.rcs);
    }
    if (j.contains("power"))
        c.total_power_w = j["power"].value("total_w", c.total_power_w);
    if (j.contains("rates"))
        c.min_rate_bits = j["rates"].value("min_rate_bits", c.min_rate_bits);
    if (j.contains("sim"))
    {
        const auto &s = j["sim"];
        c.symbol_slots = s.value("symbol_slots", c.symbol_slots);
        c.slack_penalty = s.value("slack_penalty", c.slack_penalty);
        c.feasibility_eps = s.value("feasibility_eps", c.feasibility_eps);
        c.sr_rel_tol = s.value("sr_rel_tol", c.sr_rel_tol);
        c.temperature_k = s.value("temperature_k", c.temperature_k);
        c.noise_figure = s.value("noise_figure", c.noise_figure);
        c.seed = s.value("seed", c.seed);
    }
    if (j.contains("solver"))
    {
        const auto &s = j["solver"];
        c.kkt_tol = s.value("kkt_tol", c.kkt_tol);
        c.max_newton_iters = s.value("max_newton_iters", c.max_newton_iters);
        c.feasibility_cap = s.value("feasibility_cap", c.feasibility_cap);
        c.main_cap = s.value("main_cap", c.main_cap);
    }
    if (!j.contains("bands"))
        throw std::invalid_argument("config: missing 'bands' section");
    for (const auto &jb : j["bands"])
    {
        BandParams b;
        b.center_frequency_hz = jb.at("center_frequency_hz");
        b.wavelength_m = jb.value("wavelength_m", band_wavelength(b.center_frequency_hz));
        b.bandwidth_hz = jb.at("bandwidth_hz");
        b.path_count = jb.value("path_count", 1);
        b.tx_spacing_m = jb.value("tx_spacing_m", b.wavelength_m / 2.0);
        b.noise_variance_w = jb.value(
            "noise_variance_w", kBoltzmann * c.temperature_k * b.bandwidth_hz * c.noise_figure);
        b.high_frequency = jb.value("high_frequency", false);
        if (jb.contains("bs_position"))
            b.bs_position = Eigen::Vector3d(jb["bs_position"][0], jb["bs_position"][1], jb["bs_position"][2]);
        if (jb.contains("bs_axis"))
            b.bs_axis = Eigen::Vector3d(jb["bs_axis"][0], jb["bs_axis"][1], jb["bs_axis"][2]);
        c.bands.push_back(b);
    }
    c.validate();
    return c;
}

inline SystemConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

} // namespace mbisac

#endif // MBISAC_CONFIG_HPP
