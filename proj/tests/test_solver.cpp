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
#include "mbisac/solver.hpp"
#include "test_util.hpp"

using namespace mbisac;

namespace {

// Rank-one sensing band from a steering geometry, as produced by the model.
SensingObjectiveBand steering_band(int n_tx, int n_r, double c_gain, double bandwidth,
                                   double angle)
{
    const double lam = 0.05;
    const VecC at = steering_vector(n_tx, lam / 2, lam, angle);
    const VecC ar = steering_vector(n_r, lam / 2, lam, angle);
    VecC v(n_tx * n_r);
    for (int r = 0; r < n_r; ++r)
        v.segment(r * n_tx, n_tx) = std::conj(ar[r]) * at;
    const MatC rbar = c_gain * (v * v.adjoint());
    return make_sensing_band(rbar, n_tx, bandwidth);
}

std::vector<std::vector<MatC>> uniform_start(int bands, int users, int n_tx, double total)
{
    std::vector<std::vector<MatC>> q(bands);
    for (int b = 0; b < bands; ++b)
        q[b].assign(users, (total / (bands * users * n_tx)) * MatC::Identity(n_tx, n_tx));
    return q;
}

// Random multi-band spec with surrogate rate constraints, O(1) scales.
SubproblemSpec random_spec(std::mt19937_64 &rng, int bands = 2, int users = 2, int n_tx = 3,
                           double r_min = 0.5, bool slacks = false)
{
    SubproblemSpec spec;
    spec.num_bands = bands;
    spec.num_users = users;
    spec.n_tx = n_tx;
    spec.l_slots = 8.0;
    spec.slacks = slacks;
    for (int b = 0; b < bands; ++b)
    {
        VecC v = test::random_complex(n_tx * 2, 1, rng).col(0);
        v.normalize();
        spec.sensing.push_back(make_sensing_band(MatC(2.0 * (v * v.adjoint())), n_tx, 1.0 + 0.5 * b));
    }
    TraceConstraint tc;
    tc.budget = 1.0;
    for (int b = 0; b < bands; ++b)
        for (int k = 0; k < users; ++k)
            tc.members.push_back({b, k});
    spec.traces.push_back(tc);
    for (int k = 0; k < users; ++k)
    {
        CrConstraint cr;
        cr.user = k;
        cr.r_min = r_min;
        cr.lin_const = 0.1;
        for (int b = 0; b < bands; ++b)
        {
            CrConstraint::BandTerm bt;
            bt.bandwidth = 0.5 + 0.5 * b;
            bt.hbar = test::random_complex(2, n_tx, rng, 2.0);
            MatC g = test::random_psd(n_tx, rng, 0.2);
            bt.g_lin = hermitian_part(g);
            cr.bands.push_back(bt);
        }
        spec.crs.push_back(cr);
    }
    return spec;
}

} // namespace

TEST_CASE("rank-one sensing-only problem matches the closed form")
{
    const int n_tx = 4, n_r = 2;
    const double c = 3.0, bw = 1.0, p_max = 0.7, l = 16.0, angle = 0.35;

    SubproblemSpec spec;
    spec.num_bands = 1;
    spec.num_users = 1;
    spec.n_tx = n_tx;
    spec.l_slots = l;
    spec.sensing.push_back(steering_band(n_tx, n_r, c, bw, angle));
    spec.traces.push_back({{{0, 0}}, p_max});

    const auto res = solve_subproblem(spec, uniform_start(1, 1, n_tx, 0.5 * p_max));
    CHECK(res.status == SolveStatus::Optimal);

    const double expect = bw / l * std::log1p(l * c * p_max);
    CHECK(test::rel_err(res.objective, expect) < 1e-6);

    const double lam05 = 0.05;
    const VecC at = steering_vector(n_tx, lam05 / 2, lam05, angle);
    const MatC qstar = p_max * (at * at.adjoint());
    CHECK((res.Q[0][0] - qstar).norm() < 1e-4 * p_max);

    // full budget used
    CHECK(test::rel_err(res.Q[0][0].trace().real(), p_max) < 1e-5);
}

TEST_CASE("kkt_residual accepts the hand-computed certificate of the toy problem")
{
    const int n_tx = 4, n_r = 2;
    const double c = 3.0, bw = 1.0, p_max = 0.7, l = 16.0, angle = 0.35;

    SubproblemSpec spec;
    spec.num_bands = 1;
    spec.num_users = 1;
    spec.n_tx = n_tx;
    spec.l_slots = l;
    spec.sensing.push_back(steering_band(n_tx, n_r, c, bw, angle));
    spec.traces.push_back({{{0, 0}}, p_max});

    const double lam05 = 0.05;
    const VecC at = steering_vector(n_tx, lam05 / 2, lam05, angle);

    SolveResult cand;
    cand.Q = {{p_max * (at * at.adjoint())}};
    cand.slack = VecR::Zero(1);
    cand.objective = bw / l * std::log1p(l * c * p_max);
    const double nu = bw * c / (1.0 + l * c * p_max);
    cand.trace_duals = {nu};
    cand.cr_duals = VecR::Zero(0);
    cand.psd_duals = {{nu * (MatC::Identity(n_tx, n_tx) - at * at.adjoint())}};
    cand.slack_duals = VecR::Zero(1);

    const KktResidual r = kkt_residual(spec, cand);
    CHECK(r.stationarity < 1e-7);
    CHECK(r.primal < 1e-7);
    CHECK(r.dual < 1e-7);
    CHECK(r.complementarity < 1e-7);

    SECTION("scaled duals break the stationarity certificate")
    {
        SolveResult bad = cand;
        bad.trace_duals[0] *= 2.0;
        CHECK(kkt_residual(spec, bad).stationarity > 1e-3);
    }
    SECTION("an infeasible point reports a positive primal residual without throwing")
    {
        SolveResult over = cand;
        over.Q[0][0] *= 3.0; // trace above budget
        const KktResidual rr = kkt_residual(spec, over);
        CHECK(rr.primal > 0.1);
    }
}

TEST_CASE("objective gradient matches finite differences")
{
    std::mt19937_64 rng(21);
    int instances = 0;
    while (instances < 30)
    {
        const int bands = 1 + int(rng() % 2), users = 1 + int(rng() % 2), n_tx = 3;
        SubproblemSpec spec = random_spec(rng, bands, users, n_tx, 0.0);
        spec.crs.clear();
        // mix in a genuinely full-rank sensing term every few instances
        if (instances % 3 == 0)
        {
            const MatC r = test::random_psd(n_tx * 2, rng, 2.0);
            spec.sensing[0] = make_sensing_band(r, n_tx, 1.2);
        }
        auto q = uniform_start(bands, users, n_tx, 0.8);
        std::vector<std::vector<MatC>> qr(bands);
        for (int b = 0; b < bands; ++b)
            for (int k = 0; k < users; ++k)
                qr[b].push_back(test::random_psd(n_tx, rng, 0.3));

        const auto grad = objective_gradient(spec, qr);
        for (int b = 0; b < bands; ++b)
            for (int k = 0; k < users; ++k)
            {
                const MatC d = test::random_hermitian(n_tx, rng);
                const double step = 1e-6;
                auto perturbed = [&](double t) {
                    auto qq = qr;
                    qq[b][k] += t * d;
                    return sensing_objective_value(spec, qq);
                };
                const double fd = (perturbed(step) - perturbed(-step)) / (2 * step);
                const double an = herm_inner(grad[b][k], d);
                CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(fd)));
            }
        ++instances;
    }
}

TEST_CASE("objective gradient scalar calculus oracle")
{
    // d/dp (1/L) ln(1 + L c p) = c / (1 + L c p)
    SubproblemSpec spec;
    spec.num_bands = 1;
    spec.num_users = 1;
    spec.n_tx = 1;
    spec.l_slots = 8.0;
    spec.sensing.push_back(make_sensing_band(MatC::Constant(1, 1, 2.5), 1, 1.0));
    spec.traces.push_back({{{0, 0}}, 1.0});
    const double p = 0.3;
    const auto g = objective_gradient(spec, {{MatC::Constant(1, 1, p)}});
    CHECK(test::rel_err(g[0][0](0, 0).real(), 2.5 / (1.0 + 8.0 * 2.5 * p)) < 1e-12);
}

TEST_CASE("cr constraint gradient matches finite differences")
{
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial)
    {
        SubproblemSpec spec = random_spec(rng, 2, 2, 3, 0.4);
        std::vector<std::vector<MatC>> q(2);
        for (int b = 0; b < 2; ++b)
            for (int k = 0; k < 2; ++k)
                q[b].push_back(test::random_psd(3, rng, 0.3));
        for (int kc = 0; kc < 2; ++kc)
            for (int b = 0; b < 2; ++b)
                for (int i = 0; i < 2; ++i)
                {
                    const MatC d = test::random_hermitian(3, rng);
                    const double step = 1e-6;
                    auto perturbed = [&](double t) {
                        auto qq = q;
                        qq[b][i] += t * d;
                        return cr_surrogate_margin(spec, kc, qq);
                    };
                    const double fd = (perturbed(step) - perturbed(-step)) / (2 * step);
                    const double an = herm_inner(cr_constraint_gradient(spec, kc, b, i, q), d);
                    CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(fd)));
                }
    }
}

TEST_CASE("slack solution equals the constraint gap at the rate-maximizing point")
{
    // Scalar toy: SR(p) = (bws/L) ln(1+L c p), CR(p) = bwc ln(1+g p), budget P.
    const double c = 2.0, g = 5.0, p_max = 1.0, l = 8.0, bws = 1.0, bwc = 1.0;
    const double r_min = 5.0; // far above bwc*ln(1+g*P) ~ 1.79

    SubproblemSpec spec;
    spec.num_bands = 1;
    spec.num_users = 1;
    spec.n_tx = 1;
    spec.l_slots = l;
    spec.slacks = true;
    spec.rho = 1.0;
    spec.sensing.push_back(make_sensing_band(MatC::Constant(1, 1, c), 1, bws));
    spec.traces.push_back({{{0, 0}}, p_max});
    CrConstraint cr;
    cr.user = 0;
    cr.r_min = r_min;
    cr.lin_const = 0.0;
    cr.bands.push_back({bwc, MatC::Constant(1, 1, std::sqrt(g)), MatC::Zero(1, 1)});
    spec.crs.push_back(cr);

    const auto res = solve_subproblem(spec, {{MatC::Constant(1, 1, 0.3)}});
    CHECK(res.status == SolveStatus::Optimal);

    // 1-D oracle over the power: maximize SR(p) - rho*max(0, r_min - CR(p)).
    double best = -1e300, best_p = 0.0;
    for (int i = 0; i <= 200000; ++i)
    {
        const double p = p_max * double(i) / 200000.0;
        const double val = bws / l * std::log1p(l * c * p) -
                           std::max(0.0, r_min - bwc * std::log1p(g * p));
        if (val > best)
        {
            best = val;
            best_p = p;
        }
    }
    CHECK(test::rel_err(best_p, p_max) < 1e-3); // oracle confirms full power
    const double gap = r_min - bwc * std::log1p(g * p_max);
    CHECK(test::rel_err(res.slack[0], gap) < 1e-4);
    CHECK(test::rel_err(res.objective, best) < 1e-4);
}

TEST_CASE("zero sensing channels give a zero optimal objective")
{
    SubproblemSpec spec;
    spec.num_bands = 1;
    spec.num_users = 2;
    spec.n_tx = 3;
    spec.l_slots = 4.0;
    spec.sensing.push_back(make_sensing_band(MatC::Zero(6, 6), 3, 1.0));
    spec.traces.push_back({{{0, 0}, {0, 1}}, 1.0});
    const auto res = solve_subproblem(spec, uniform_start(1, 2, 3, 0.5));
    CHECK(res.status == SolveStatus::Optimal);
    CHECK(std::abs(res.objective) < 1e-12);
    // still a feasible PSD point
    for (const auto &q : res.Q[0])
        CHECK(min_eigenvalue(q) > -1e-12);
}

TEST_CASE("solver is deterministic")
{
    std::mt19937_64 rng(23);
    SubproblemSpec spec = random_spec(rng, 2, 2, 3, 0.3, false);
    auto start = uniform_start(2, 2, 3, 0.6);
    const auto a = solve_subproblem(spec, start);
    const auto b = solve_subproblem(spec, start);
    CHECK(a.objective == b.objective);
    for (int band = 0; band < 2; ++band)
        for (int k = 0; k < 2; ++k)
            CHECK((a.Q[band][k] - b.Q[band][k]).norm() == 0.0);
}

TEST_CASE("constrained solve satisfies surrogate constraints and KKT")
{
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 5; ++trial)
    {
        SubproblemSpec spec = random_spec(rng, 2, 2, 3, 0.4, false);
        const auto res = solve_subproblem(spec, uniform_start(2, 2, 3, 0.6));
        REQUIRE(res.status == SolveStatus::Optimal);
        for (int kc = 0; kc < 2; ++kc)
            CHECK(cr_surrogate_margin(spec, kc, res.Q) > -1e-7);
        double total = 0.0;
        for (int b = 0; b < 2; ++b)
            for (int k = 0; k < 2; ++k)
                total += res.Q[b][k].trace().real();
        CHECK(total <= spec.traces[0].budget * (1 + 1e-8));
        CHECK(res.kkt.stationarity < 1e-6);
        CHECK(res.kkt.complementarity < 1e-6);
    }
}

TEST_CASE("per-band trace constraints are honored in split mode")
{
    std::mt19937_64 rng(25);
    SubproblemSpec spec = random_spec(rng, 2, 2, 3, 0.0, false);
    spec.crs.clear();
    spec.traces.clear();
    for (int b = 0; b < 2; ++b)
    {
        TraceConstraint tc;
        tc.budget = 0.5;
        tc.members = {{b, 0}, {b, 1}};
        spec.traces.push_back(tc);
    }
    const auto res = solve_subproblem(spec, uniform_start(2, 2, 3, 0.6));
    CHECK(res.status == SolveStatus::Optimal);
    for (int b = 0; b < 2; ++b)
    {
        const double t = res.Q[b][0].trace().real() + res.Q[b][1].trace().real();
        CHECK(t <= 0.5 * (1 + 1e-8));
        CHECK(t >= 0.5 * (1 - 1e-5)); // nonzero sensing gain pulls full budget
    }
}

TEST_CASE("unreachable rate without slacks is detected as infeasible")
{
    std::mt19937_64 rng(26);
    SubproblemSpec spec = random_spec(rng, 1, 1, 2, 0.0, false);
    spec.crs.clear();
    CrConstraint cr;
    cr.user = 0;
    cr.r_min = 1e4; // far above any achievable surrogate value
    cr.lin_const = 0.0;
    cr.bands.push_back({1.0, test::random_complex(2, 2, rng), MatC::Zero(2, 2)});
    spec.crs.push_back(cr);
    const auto res = solve_subproblem(spec, uniform_start(1, 1, 2, 0.5));
    CHECK(res.status == SolveStatus::InfeasibleDetected);
}
