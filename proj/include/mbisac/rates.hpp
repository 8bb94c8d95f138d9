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

#ifndef MBISAC_RATES_HPP
#define MBISAC_RATES_HPP

#include <vector>

#include "mbisac/channel.hpp"
#include "mbisac/linalg.hpp"

namespace mbisac {

/// Eigenvalue-ratio gate below which a covariance is treated as rank one.
constexpr double kRankOneGate = 1e-10;

/// Optimization variables: one Hermitian PSD transmit covariance per
/// (user, band), all in watts.
struct CovarianceSolution
{
    std::vector<std::vector<MatC>> Q; // [band][user], N_t x N_t

    int num_bands() const { return static_cast<int>(Q.size()); }
    int num_users() const { return Q.empty() ? 0 : static_cast<int>(Q[0].size()); }

    double total_power() const
    {
        double p = 0.0;
        for (const auto &band : Q)
            for (const auto &q : band)
                p += q.trace().real();
        return p;
    }

    MatC band_sum(int b) const
    {
        MatC s = MatC::Zero(Q[b][0].rows(), Q[b][0].cols());
        for (const auto &q : Q[b])
            s += q;
        return s;
    }

    static CovarianceSolution zero(int bands, int users, int n_tx)
    {
        CovarianceSolution s;
        s.Q.assign(bands, std::vector<MatC>(users, MatC::Zero(n_tx, n_tx)));
        return s;
    }
};

inline void check_covariance(const MatC &q)
{
    const double tr = std::max(q.trace().real(), 0.0);
    if (min_eigenvalue(q) < -1e-9 * std::max(tr, 1e-300))
        throw std::invalid_argument("covariance matrix is not positive semidefinite");
}

/// Rates are clamped at zero from below; slightly negative values are
/// floating-point residue of cancelling log-determinants.
inline double clamp_rate(double r) { return r < 0.0 ? 0.0 : r; }

namespace detail {

// ln det(I + Hbar * Qsum * Hbar^H) for the interference set `Qsum`.
inline double log_det_i_plus(const MatC &hbar, const MatC &qsum)
{
    const int nk = static_cast<int>(hbar.rows());
    return log_det_hpd(MatC::Identity(nk, nk) + hbar * qsum * hbar.adjoint());
}

} // namespace detail

/// Exact covariance-form communication rate of user k on band b, nats/s.
inline double comm_rate_covariance(int k, int b, const CovarianceSolution &q,
                                   const ChannelSet &ch, double bandwidth_hz)
{
    const MatC &hbar = ch.Hbar[b][k];
    for (const auto &qi : q.Q[b])
        check_covariance(qi);
    MatC interf = MatC::Zero(hbar.cols(), hbar.cols());
    for (int j = 0; j < q.num_users(); ++j)
        if (j != k)
            interf += q.Q[b][j];
    const double with_user = detail::log_det_i_plus(hbar, interf + q.Q[b][k]);
    const double without_user = detail::log_det_i_plus(hbar, interf);
    return clamp_rate(bandwidth_hz * (with_user - without_user));
}

/// Precoder-form rate, the direct evaluation of the achievable-rate
/// determinant with explicit interference inverse. Kept on an independent
/// floating-point path from the covariance form for cross-checking.
inline double comm_rate_precoder(int k, int b, const std::vector<std::vector<MatC>> &w,
                                 const ChannelSet &ch, double bandwidth_hz)
{
    const MatC &hbar = ch.Hbar[b][k];
    const int nk = static_cast<int>(hbar.rows());
    if (w[b][k].rows() != hbar.cols())
        throw std::invalid_argument("comm_rate_precoder: precoder/channel dimension mismatch");
    MatC interf = MatC::Identity(nk, nk);
    for (std::size_t i = 0; i < w[b].size(); ++i)
        if (static_cast<int>(i) != k)
        {
            const MatC hw = hbar * w[b][i];
            interf += hw * hw.adjoint();
        }
    const MatC hwk = hbar * w[b][k];
    const MatC m = MatC::Identity(nk, nk) + (hwk * hwk.adjoint()) * interf.inverse();
    const cplx det = Eigen::PartialPivLU<MatC>(m).determinant();
    return clamp_rate(bandwidth_hz * std::log(std::abs(det)));
}

/// Sensing rate of band b in covariance form, nats/s:
/// (B/L) ln det(L (I kron sum_k Q_k) Rbar + I).
/// Uses the rank-one reduction of Rbar when its spectrum allows, otherwise
/// evaluates the full determinant through a symmetric square-root split.
inline double sensing_rate_covariance(int b, const CovarianceSolution &q, const ChannelSet &ch,
                                      int l_slots, double bandwidth_hz)
{
    for (const auto &qi : q.Q[b])
        check_covariance(qi);
    const MatC qsum = q.band_sum(b);
    const MatC &rbar = ch.Rbar[b];
    const int n_tx = static_cast<int>(qsum.rows());
    const int nr = static_cast<int>(rbar.rows()) / n_tx;

    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(rbar));
    const VecR ev = es.eigenvalues();
    const double emax = ev.maxCoeff();
    if (emax <= 0.0)
        return 0.0;

    const int last = static_cast<int>(ev.size()) - 1;
    const bool rank_one = (ev.size() < 2) || (ev[last - 1] < kRankOneGate * emax);
    if (rank_one)
    {
        const VecC v = es.eigenvectors().col(last);
        double quad = 0.0;
        for (int r = 0; r < nr; ++r)
        {
            const VecC vr = v.segment(r * n_tx, n_tx);
            quad += (vr.adjoint() * qsum * vr).value().real();
        }
        return clamp_rate(bandwidth_hz / double(l_slots) *
                          std::log1p(double(l_slots) * emax * quad));
    }

    // General case: ln det(L X Rbar + I) == ln det(L R^(1/2) X R^(1/2) + I).
    const VecR sq = ev.cwiseMax(0.0).cwiseSqrt();
    const MatC rhalf = es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().adjoint();
    MatC x = MatC::Zero(rbar.rows(), rbar.cols());
    for (int r = 0; r < nr; ++r)
        x.block(r * n_tx, r * n_tx, n_tx, n_tx) = qsum;
    const MatC arg = MatC::Identity(rbar.rows(), rbar.cols()) +
                     double(l_slots) * rhalf * x * rhalf;
    return clamp_rate(bandwidth_hz / double(l_slots) * log_det_hpd(arg));
}

/// Lifted-form sensing rate evaluated with explicit pilots, nats/s:
/// (B/L) ln det(Rbar (I kron (W S)(W S)^H) + I).
/// For pilots with S S^H = L I this equals the covariance form exactly.
inline double sensing_rate_lifted(int b, const std::vector<std::vector<MatC>> &w, const MatC &pilots,
                                  const ChannelSet &ch, int l_slots, double bandwidth_hz)
{
    const MatC &rbar = ch.Rbar[b];
    const int n_tx = static_cast<int>(w[b][0].rows());
    const int nr = static_cast<int>(rbar.rows()) / n_tx;
    int n_tot = 0;
    for (const auto &wk : w[b])
        n_tot += static_cast<int>(wk.cols());
    if (pilots.rows() != n_tot || pilots.cols() != l_slots)
        throw std::invalid_argument("sensing_rate_lifted: pilot dimensions mismatch");

    MatC stacked(n_tx, n_tot);
    int col = 0;
    for (const auto &wk : w[b])
    {
        stacked.middleCols(col, wk.cols()) = wk;
        col += static_cast<int>(wk.cols());
    }
    const MatC xs = stacked * pilots;       // N_t x L
    const MatC m = xs * xs.adjoint();       // ~ L * W W^H for orthogonal pilots

    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(rbar));
    const VecR sq = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const MatC rhalf = es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().adjoint();
    MatC x = MatC::Zero(rbar.rows(), rbar.cols());
    for (int r = 0; r < nr; ++r)
        x.block(r * n_tx, r * n_tx, n_tx, n_tx) = m;
    const MatC arg = MatC::Identity(rbar.rows(), rbar.cols()) + rhalf * x * rhalf;
    return clamp_rate(bandwidth_hz / double(l_slots) * log_det_hpd(arg));
}

/// Expansion-point state for the concave lower bound of the rate of one
/// (user, band): interference-plus-noise matrix B^n, its log-determinant and
/// the gradient matrix G^n = Hbar^H (B^n)^-1 Hbar.
struct LinearizationPoint
{
    std::vector<std::vector<MatC>> Qn;        // [band][user]
    std::vector<std::vector<MatC>> Bn;        // [band][user], N_k x N_k
    std::vector<std::vector<double>> logdetBn;
    std::vector<std::vector<MatC>> Gn;        // [band][user], N_t x N_t
};

inline LinearizationPoint linearize(const CovarianceSolution &qn, const ChannelSet &ch)
{
    LinearizationPoint lin;
    const int bands = qn.num_bands(), users = qn.num_users();
    lin.Qn = qn.Q;
    lin.Bn.assign(bands, std::vector<MatC>(users));
    lin.logdetBn.assign(bands, std::vector<double>(users));
    lin.Gn.assign(bands, std::vector<MatC>(users));
    for (int b = 0; b < bands; ++b)
        for (int k = 0; k < users; ++k)
        {
            const MatC &hbar = ch.Hbar[b][k];
            const int nk = static_cast<int>(hbar.rows());
            MatC interf = MatC::Zero(hbar.cols(), hbar.cols());
            for (int j = 0; j < users; ++j)
                if (j != k)
                    interf += qn.Q[b][j];
            const MatC bn = hermitian_part(MatC::Identity(nk, nk) + hbar * interf * hbar.adjoint());
            lin.Bn[b][k] = bn;
            lin.logdetBn[b][k] = log_det_hpd(bn);
            lin.Gn[b][k] = hermitian_part(hbar.adjoint() * bn.llt().solve(hbar));
        }
    return lin;
}

/// Concave lower bound on the communication rate of (k, b), tight at Q = Qn.
inline double cr_lower_bound(int k, int b, const CovarianceSolution &q,
                             const LinearizationPoint &lin, const ChannelSet &ch,
                             double bandwidth_hz)
{
    const MatC &hbar = ch.Hbar[b][k];
    MatC qsum = q.Q[b][k];
    for (int j = 0; j < q.num_users(); ++j)
        if (j != k)
            qsum += q.Q[b][j];
    const double lead = detail::log_det_i_plus(hbar, qsum);
    double affine = lin.logdetBn[b][k];
    for (int i = 0; i < q.num_users(); ++i)
        if (i != k)
            affine += herm_inner(lin.Gn[b][k], q.Q[b][i] - lin.Qn[b][i]);
    return bandwidth_hz * (lead - affine);
}

/// Per-trial rate summary. Internal values are nats/s; bits/s mirrors are
/// derived at the reporting boundary.
struct RateReport
{
    std::vector<double> band_sr_nats;  // per band
    std::vector<double> user_cr_nats;  // per user, summed over bands
    double sum_sr_nats = 0.0;

    double sum_sr_bits() const { return nats_to_bits(sum_sr_nats); }
    double user_cr_bits(int k) const { return nats_to_bits(user_cr_nats[k]); }
    double min_user_cr_bits() const
    {
        double m = std::numeric_limits<double>::infinity();
        for (double r : user_cr_nats)
            m = std::min(m, nats_to_bits(r));
        return user_cr_nats.empty() ? 0.0 : m;
    }
};

inline RateReport evaluate_rates(const CovarianceSolution &q, const ChannelSet &ch,
                                 const SystemConfig &cfg)
{
    RateReport r;
    r.band_sr_nats.assign(cfg.num_bands(), 0.0);
    r.user_cr_nats.assign(cfg.num_users, 0.0);
    for (int b = 0; b < cfg.num_bands(); ++b)
    {
        r.band_sr_nats[b] =
            sensing_rate_covariance(b, q, ch, cfg.symbol_slots, cfg.bands[b].bandwidth_hz);
        r.sum_sr_nats += r.band_sr_nats[b];
        for (int k = 0; k < cfg.num_users; ++k)
            r.user_cr_nats[k] += comm_rate_covariance(k, b, q, ch, cfg.bands[b].bandwidth_hz);
    }
    return r;
}

} // namespace mbisac

#endif // MBISAC_RATES_HPP
