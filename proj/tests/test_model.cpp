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

#include <catch2/catch_amalgamated.hpp>

#include "mbisac/channel.hpp"
#include "test_util.hpp"

using namespace mbisac;

TEST_CASE("noise_variance matches kB*T*B*F")
{
    // 290 K, 1 MHz, 9 dB noise figure
    CHECK(test::rel_err(noise_variance(290.0, 1e6, 7.94), 3.180e-14) < 1e-3);
    // exactly linear in bandwidth
    CHECK(noise_variance(290.0, 4e6, 7.94) == Catch::Approx(4.0 * noise_variance(290.0, 1e6, 7.94)));
    // unit noise figure reduces to kB*T*B
    CHECK(noise_variance(300.0, 2e6, 1.0) == Catch::Approx(1.381e-23 * 300.0 * 2e6));
    CHECK_THROWS_AS(noise_variance(-1.0, 1e6, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(noise_variance(290.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("path_loss free-space law")
{
    CHECK(test::rel_err(path_loss(0.05, 25.0), 2.533e-8) < 1e-3);
    const double f = path_loss(0.05, 10.0);
    CHECK(path_loss(0.05, 20.0) == Catch::Approx(f / 4.0));
    CHECK(path_loss(0.10, 10.0) == Catch::Approx(4.0 * f));
    CHECK_THROWS_AS(path_loss(0.05, 0.0), std::invalid_argument);
}

TEST_CASE("steering_vector phases and normalization")
{
    const double lam = 0.05;
    SECTION("broadside")
    {
        const VecC a = steering_vector(4, lam / 2, lam, 0.0);
        for (int i = 0; i < 4; ++i)
            CHECK(std::abs(a[i] - cplx(0.5, 0.0)) < 1e-14);
    }
    SECTION("endfire with half-wavelength spacing")
    {
        const VecC a = steering_vector(2, lam / 2, lam, M_PI / 2);
        CHECK(std::abs(a[0] - cplx(1 / std::sqrt(2.0), 0)) < 1e-14);
        CHECK(std::abs(a[1] - cplx(-1 / std::sqrt(2.0), 0)) < 1e-12);
    }
    SECTION("unit norm for random parameters")
    {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-M_PI / 2, M_PI / 2);
        for (int i = 0; i < 20; ++i)
        {
            const VecC a = steering_vector(1 + int(rng() % 16), 0.01 + 0.01 * (rng() % 5), lam, u(rng));
            CHECK(std::abs(a.norm() - 1.0) < 1e-12);
        }
    }
    CHECK_THROWS_AS(steering_vector(0, 0.01, lam, 0.0), std::invalid_argument);
}

TEST_CASE("single-path channel is a scaled steering outer product")
{
    SystemConfig cfg = SystemConfig::defaults(1);
    BandParams band = cfg.bands[0];
    band.path_count = 1;
    const double aoa = 0.3, aod = -0.7;
    const MatC h = assemble_comm_channel(band, 2, cfg.rx_spacing_m, 8, {aoa}, {aod}, {cplx(1.0, 0.0)});
    const VecC ar = steering_vector(2, cfg.rx_spacing_m, band.wavelength_m, aoa);
    const VecC at = steering_vector(8, band.tx_spacing_m, band.wavelength_m, aod);
    const MatC expect = std::sqrt(16.0) * ar * at.adjoint();
    CHECK((h - expect).norm() < 1e-12);
    // rank one
    Eigen::JacobiSVD<MatC> svd(h);
    CHECK(svd.singularValues()(1) < 1e-12 * svd.singularValues()(0));
}

TEST_CASE("channel Frobenius energy matches Nt*Nk*F on average")
{
    SystemConfig cfg = SystemConfig::defaults(1);
    const BandParams &band = cfg.bands[0];
    const double d = 60.0;
    const double expect = 8.0 * 2.0 * path_loss(band.wavelength_m, d);
    std::mt19937_64 rng(42);
    double acc = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i)
        acc += gen_comm_channel(band, 2, cfg.rx_spacing_m, 8, d, rng).squaredNorm();
    CHECK(test::rel_err(acc / draws, expect) < 0.05);
}

TEST_CASE("channel generation is deterministic in the seed")
{
    const SystemConfig cfg = SystemConfig::defaults(3);
    const ChannelSet a = generate_channels(cfg, 123);
    const ChannelSet b = generate_channels(cfg, 123);
    const ChannelSet c = generate_channels(cfg, 124);
    for (int band = 0; band < 3; ++band)
    {
        CHECK((a.Rbar[band] - b.Rbar[band]).norm() == 0.0);
        for (int k = 0; k < cfg.num_users; ++k)
            CHECK((a.Hbar[band][k] - b.Hbar[band][k]).norm() == 0.0);
    }
    CHECK((a.Hbar[0][0] - c.Hbar[0][0]).norm() > 0.0);
}

TEST_CASE("target response covariance structure")
{
    const SystemConfig cfg = SystemConfig::defaults(3);
    const ChannelSet ch = generate_channels(cfg, 5);
    for (int b = 0; b < 3; ++b)
    {
        const MatC &r = ch.Rbar[b];
        CHECK((r - r.adjoint()).cwiseAbs().maxCoeff() < 1e-12 * r.cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<MatC> es(r);
        const VecR ev = es.eigenvalues();
        const int n = static_cast<int>(ev.size());
        CHECK(ev[n - 1] > 0.0);
        CHECK(ev[n - 2] < 1e-10 * ev[n - 1]);         // numerical rank one
        CHECK(ev.minCoeff() > -1e-12 * ev[n - 1]);    // PSD
        const double expect_trace = ch.sensing_gain_var[b] * 8.0 * 2.0 / cfg.bands[b].noise_variance_w;
        CHECK(test::rel_err(r.trace().real(), expect_trace) < 1e-12);
    }
}

TEST_CASE("target response trace follows the d^-4 law")
{
    const SystemConfig cfg = SystemConfig::defaults(1);
    const BandParams &band = cfg.bands[0];
    const MatC r1 = target_response_covariance(band, 0.4, 50.0, 8, 2, 1.0);
    const MatC r2 = target_response_covariance(band, 0.4, 100.0, 8, 2, 1.0);
    CHECK(test::rel_err(r1.trace().real(), 16.0 * r2.trace().real()) < 1e-12);
    CHECK_THROWS_AS(target_response_covariance(band, 0.4, 0.0, 8, 2, 1.0), std::invalid_argument);
}

TEST_CASE("pilot symbols")
{
    std::mt19937_64 rng(3);
    SECTION("orthogonal pilots satisfy S S^H = L I exactly")
    {
        const MatC s = gen_pilot_symbols(30, 8, PilotMode::Orthogonal, rng);
        const MatC g = s * s.adjoint() - 30.0 * MatC::Identity(8, 8);
        CHECK(g.norm() < 1e-10);
    }
    SECTION("orthogonal mode requires L >= N_tot")
    {
        CHECK_THROWS_AS(gen_pilot_symbols(4, 8, PilotMode::Orthogonal, rng), std::invalid_argument);
    }
    SECTION("random QPSK entries have unit modulus")
    {
        const MatC s = gen_pilot_symbols(64, 4, PilotMode::RandomQpsk, rng);
        for (int i = 0; i < s.rows(); ++i)
            for (int j = 0; j < s.cols(); ++j)
                CHECK(std::abs(std::abs(s(i, j)) - 1.0) < 1e-14);
    }
    SECTION("QPSK pilots concentrate by the law of large numbers")
    {
        const int l = 10000;
        const MatC s = gen_pilot_symbols(l, 4, PilotMode::RandomQpsk, rng);
        CHECK((s * s.adjoint() / double(l) - MatC::Identity(4, 4)).norm() < 0.1);
    }
}

TEST_CASE("sensing angle geometry")
{
    // target along the array axis -> pi/2; broadside -> 0
    const Eigen::Vector3d mid(0, 0, 0), axis(0, 0, 1);
    CHECK(ula_angle(mid, axis, {0, 0, 10}) == Catch::Approx(M_PI / 2));
    CHECK(ula_angle(mid, axis, {10, 0, 0}) == Catch::Approx(0.0).margin(1e-15));
    CHECK(ula_angle(mid, axis, {10, 0, 10}) == Catch::Approx(M_PI / 4));
}

TEST_CASE("config round trip and validation")
{
    SystemConfig cfg = SystemConfig::defaults(3);
    cfg.validate();
    const nlohmann::json j = to_json(cfg);
    const SystemConfig back = config_from_json(j);
    CHECK(back.num_bands() == 3);
    CHECK(back.bands[2].center_frequency_hz == Catch::Approx(26.5e9));
    CHECK(back.bands[1].high_frequency);
    CHECK(back.total_power_w == Catch::Approx(cfg.total_power_w));
    CHECK(back.min_rate_bits == Catch::Approx(cfg.min_rate_bits));
    CHECK(back.bands[0].noise_variance_w == Catch::Approx(noise_variance(290.0, 1e6, 7.94)));

    SystemConfig bad = cfg;
    bad.bands[0].wavelength_m *= 1.01; // inconsistent with frequency
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.total_power_w = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("hermitian vectorization is an isometry")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial)
    {
        const MatC a = test::random_hermitian(6, rng), b = test::random_hermitian(6, rng);
        CHECK((unhvec(hvec(a)) - a).norm() < 1e-14);
        CHECK(test::rel_err(hvec(a).dot(hvec(b)), herm_inner(a, b)) < 1e-12);
    }
}

TEST_CASE("congruence block implements D -> W D W")
{
    std::mt19937_64 rng(13);
    const MatC w = test::random_hermitian(5, rng);
    const MatR k = congruence_block(w);
    CHECK((k - k.transpose()).norm() < 1e-10 * k.norm());
    for (int trial = 0; trial < 5; ++trial)
    {
        const MatC d = test::random_hermitian(5, rng);
        CHECK((VecR(k * hvec(d)) - hvec(w * d * w)).norm() < 1e-10 * hvec(w * d * w).norm());
    }
    const MatC c = test::random_complex(3, 5, rng);
    const MatR k2 = congruence_block_rect(c);
    for (int trial = 0; trial < 5; ++trial)
    {
        const MatC d = test::random_hermitian(3, rng);
        CHECK((VecR(k2 * hvec(d)) - hvec(c.adjoint() * d * c)).norm() < 1e-10);
    }
}
