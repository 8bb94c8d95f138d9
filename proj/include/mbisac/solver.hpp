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
//
// Logarithmic-barrier interior-point solver for the convex inner
// subproblems: maximize the concave sum sensing rate over Hermitian PSD
// covariances under trace budgets and concave rate-surrogate constraints,
// optionally with penalized nonnegative slack variables.
//
// The variables are the isometric vectorizations of the Hermitian
// matrices, so every iterate is Hermitian by construction. Damped Newton
// steps run on a barrier objective; the Newton system is solved per band
// block with rank-one Woodbury corrections for the constraints that
// couple bands.

#ifndef MBISAC_SOLVER_HPP
#define MBISAC_SOLVER_HPP

#include <optional>
#include <string>
#include <vector>

#include "mbisac/linalg.hpp"

namespace mbisac {

enum class SolveStatus
{
    Optimal,
    MaxIters,
    InfeasibleDetected
};

inline std::string to_string(SolveStatus s)
{
    switch (s)
    {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIters: return "max-iters";
    default: return "infeasible-detected";
    }
}

/// Sum of traces over `members` bounded by `budget`. One global constraint
/// in joint mode, or one per band in the equal-power-split mode.
struct TraceConstraint
{
    std::vector<std::pair<int, int>> members; // (band, user)
    double budget = 0.0;
};

/// Sensing-rate term of one band, built from the eigenstructure of Rbar:
/// SR(Q) = (bw/L) ln det(I_m + L sum_r U_r^H Qsum U_r) with U_r carrying the
/// eigenvalue weights. A point target gives m = 1 and the scalar fast path.
struct SensingObjectiveBand
{
    double bandwidth = 0.0; // in solver units
    bool rank_one = true;
    double c_gain = 0.0;           // trace of Rbar (rank-one eigenvalue)
    MatC m_dir;                    // sum_r v_r v_r^H, trace 1
    std::vector<MatC> u_factors;   // general rank: U_r, N_t x m
};

inline SensingObjectiveBand make_sensing_band(const MatC &rbar, int n_tx, double bandwidth)
{
    SensingObjectiveBand sb;
    sb.bandwidth = bandwidth;
    const int nr = static_cast<int>(rbar.rows()) / n_tx;
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(rbar));
    const VecR ev = es.eigenvalues();
    const double emax = ev.maxCoeff();
    if (emax <= 0.0)
    {
        sb.rank_one = true;
        sb.c_gain = 0.0;
        sb.m_dir = MatC::Zero(n_tx, n_tx);
        return sb;
    }
    const int n = static_cast<int>(ev.size());
    if (n < 2 || ev[n - 2] < 1e-10 * emax)
    {
        sb.rank_one = true;
        sb.c_gain = emax;
        const VecC v = es.eigenvectors().col(n - 1);
        sb.m_dir = MatC::Zero(n_tx, n_tx);
        for (int r = 0; r < nr; ++r)
        {
            const VecC vr = v.segment(r * n_tx, n_tx);
            sb.m_dir += vr * vr.adjoint();
        }
        sb.m_dir = hermitian_part(sb.m_dir);
        return sb;
    }
    sb.rank_one = false;
    int m = 0;
    for (int i = 0; i < n; ++i)
        if (ev[i] > 1e-14 * emax)
            ++m;
    MatC v_modes(rbar.rows(), m);
    VecR sqrt_ev(m);
    int c = 0;
    for (int i = 0; i < n; ++i)
        if (ev[i] > 1e-14 * emax)
        {
            v_modes.col(c) = es.eigenvectors().col(i);
            sqrt_ev[c] = std::sqrt(ev[i]);
            ++c;
        }
    sb.u_factors.resize(nr);
    for (int r = 0; r < nr; ++r)
        sb.u_factors[r] = v_modes.middleRows(r * n_tx, n_tx) * sqrt_ev.asDiagonal();
    return sb;
}

/// Linearized communication-rate constraint of one user:
///   sum_b bw_b [ ln det(I + Hbar_b Qsum_b Hbar_b^H)
///                - sum_{i != k} <Glin_b, Q_i^(b)> ] - lin_const + s_k >= r_min.
struct CrConstraint
{
    double r_min = 0.0;
    double lin_const = 0.0;
    struct BandTerm
    {
        double bandwidth = 0.0;
        MatC hbar; // N_k x N_t
        MatC g_lin; // N_t x N_t Hermitian
    };
    std::vector<BandTerm> bands; // size num_bands
    int user = 0;                // index k whose own term is not linearized
};

struct SubproblemSpec
{
    int num_bands = 0;
    int num_users = 0;
    int n_tx = 0;
    double l_slots = 1.0;

    std::vector<SensingObjectiveBand> sensing; // size num_bands
    std::vector<TraceConstraint> traces;
    std::vector<CrConstraint> crs; // empty when r_min = 0

    bool slacks = false;
    double rho = 1.0;

    double kkt_tol = 1e-7;
    int max_newton = 200;
    double psd_jitter = 0.0; // delta; derived from budgets when 0

    double total_budget() const
    {
        double t = 0.0;
        for (const auto &tc : traces)
            t += tc.budget;
        return t;
    }
    double jitter() const
    {
        return psd_jitter > 0.0 ? psd_jitter : 1e-12 * total_budget() / std::max(1, n_tx);
    }
    void validate() const
    {
        if (num_bands < 1 || num_users < 1 || n_tx < 1 || l_slots < 1)
            throw std::invalid_argument("subproblem: bad dimensions");
        if (static_cast<int>(sensing.size()) != num_bands)
            throw std::invalid_argument("subproblem: sensing terms must cover all bands");
        if (traces.empty())
            throw std::invalid_argument("subproblem: at least one trace constraint required");
        for (const auto &t : traces)
            if (t.budget <= 0.0)
                throw std::invalid_argument("subproblem: budgets must be positive");
        if (rho <= 0.0)
            throw std::invalid_argument("subproblem: rho must be positive");
    }
};

struct KktResidual
{
    double stationarity = 0.0;
    double primal = 0.0;
    double dual = 0.0;
    double complementarity = 0.0;
    double max() const
    {
        return std::max(std::max(stationarity, primal), std::max(dual, complementarity));
    }
};

struct SolveResult
{
    std::vector<std::vector<MatC>> Q; // [band][user]
    VecR slack;                       // size K (zero when slacks disabled)
    double objective = 0.0;           // includes -rho * sum(s) in slack mode

    std::vector<double> trace_duals;
    VecR cr_duals;
    std::vector<std::vector<MatC>> psd_duals; // [band][user]
    VecR slack_duals;

    SolveStatus status = SolveStatus::MaxIters;
    int iterations = 0;
    KktResidual kkt;
};

// ---------------------------------------------------------------------------
// Objective and constraint evaluation helpers (shared with tests).
// ---------------------------------------------------------------------------

inline double sensing_objective_value(const SubproblemSpec &spec,
                                      const std::vector<std::vector<MatC>> &q)
{
    double f = 0.0;
    for (int b = 0; b < spec.num_bands; ++b)
    {
        MatC qsum = MatC::Zero(spec.n_tx, spec.n_tx);
        for (const auto &qk : q[b])
            qsum += qk;
        const auto &sb = spec.sensing[b];
        if (sb.rank_one)
        {
            if (sb.c_gain <= 0.0)
                continue;
            const double quad = herm_inner(sb.m_dir, qsum);
            const double arg = spec.l_slots * sb.c_gain * quad;
            if (arg <= -1.0)
                throw std::domain_error("sensing objective outside domain");
            f += sb.bandwidth / spec.l_slots * std::log1p(arg);
        }
        else
        {
            const int m = static_cast<int>(sb.u_factors[0].cols());
            MatC y = MatC::Identity(m, m);
            for (const auto &u : sb.u_factors)
                y += spec.l_slots * (u.adjoint() * qsum * u);
            f += sb.bandwidth / spec.l_slots * log_det_hpd(y);
        }
    }
    return f;
}

/// Hermitian gradient matrices of the sensing objective, one per (band, user)
/// (identical across users of a band since only the band sum enters).
inline std::vector<std::vector<MatC>> objective_gradient(const SubproblemSpec &spec,
                                                         const std::vector<std::vector<MatC>> &q)
{
    std::vector<std::vector<MatC>> g(spec.num_bands);
    for (int b = 0; b < spec.num_bands; ++b)
    {
        MatC qsum = MatC::Zero(spec.n_tx, spec.n_tx);
        for (const auto &qk : q[b])
            qsum += qk;
        const auto &sb = spec.sensing[b];
        MatC gb;
        if (sb.rank_one)
        {
            if (sb.c_gain <= 0.0)
                gb = MatC::Zero(spec.n_tx, spec.n_tx);
            else
            {
                const double quad = herm_inner(sb.m_dir, qsum);
                const double denom = 1.0 + spec.l_slots * sb.c_gain * quad;
                if (denom <= 0.0)
                    throw std::domain_error("objective_gradient: argument not positive definite");
                gb = (sb.bandwidth * sb.c_gain / denom) * sb.m_dir;
            }
        }
        else
        {
            const int m = static_cast<int>(sb.u_factors[0].cols());
            MatC y = MatC::Identity(m, m);
            for (const auto &u : sb.u_factors)
                y += spec.l_slots * (u.adjoint() * qsum * u);
            Eigen::LLT<MatC> llt(hermitian_part(y));
            if (llt.info() != Eigen::Success)
                throw std::domain_error("objective_gradient: argument not positive definite");
            const MatC yinv = llt.solve(MatC::Identity(m, m));
            gb = MatC::Zero(spec.n_tx, spec.n_tx);
            for (const auto &u : sb.u_factors)
                gb += sb.bandwidth * (u * yinv * u.adjoint());
        }
        g[b].assign(spec.num_users, hermitian_part(gb));
    }
    return g;
}

/// Value of the surrogate communication-rate constraint k (without slack):
/// g_k(Q) such that the constraint reads g_k + s_k >= 0.
inline double cr_surrogate_margin(const SubproblemSpec &spec, int k,
                                  const std::vector<std::vector<MatC>> &q)
{
    const auto &cr = spec.crs[k];
    double v = -cr.lin_const - cr.r_min;
    for (int b = 0; b < spec.num_bands; ++b)
    {
        MatC qsum = MatC::Zero(spec.n_tx, spec.n_tx);
        for (const auto &qk : q[b])
            qsum += qk;
        const auto &bt = cr.bands[b];
        const int nk = static_cast<int>(bt.hbar.rows());
        v += bt.bandwidth * log_det_hpd(MatC::Identity(nk, nk) + bt.hbar * qsum * bt.hbar.adjoint());
        for (int i = 0; i < spec.num_users; ++i)
            if (i != cr.user)
                v -= bt.bandwidth * herm_inner(bt.g_lin, q[b][i]);
    }
    return v;
}

/// Hermitian gradient of g_k with respect to Q_i^(b).
inline MatC cr_constraint_gradient(const SubproblemSpec &spec, int k, int b, int i,
                                   const std::vector<std::vector<MatC>> &q)
{
    const auto &bt = spec.crs[k].bands[b];
    MatC qsum = MatC::Zero(spec.n_tx, spec.n_tx);
    for (const auto &qk : q[b])
        qsum += qk;
    const int nk = static_cast<int>(bt.hbar.rows());
    const MatC x = hermitian_part(MatC::Identity(nk, nk) + bt.hbar * qsum * bt.hbar.adjoint());
    MatC g = bt.bandwidth * hermitian_part(bt.hbar.adjoint() * x.llt().solve(bt.hbar));
    if (i != spec.crs[k].user)
        g -= bt.bandwidth * bt.g_lin;
    return g;
}

// ---------------------------------------------------------------------------
// Barrier engine.
// ---------------------------------------------------------------------------

namespace detail {

class BarrierEngine
{
public:
    explicit BarrierEngine(const SubproblemSpec &spec)
        : spec_(spec), n2_(spec.n_tx * spec.n_tx),
          nq_(spec.num_bands * spec.num_users * n2_),
          nv_(nq_ + (spec.slacks ? spec.num_users : 0)), delta_(spec.jitter())
    {
    }

    int var_offset(int b, int k) const { return (b * spec_.num_users + k) * n2_; }
    int slack_offset(int k) const { return nq_ + k; }

    struct Eval
    {
        bool feasible = false;
        double f = 0.0;
        double barrier = 0.0;
        std::vector<std::vector<MatC>> q;  // [b][k]
        std::vector<MatC> qtot;            // [b]
        VecR s;
        std::vector<double> logdet_q;      // flattened (b,k)
        std::vector<double> sr_quad;       // per band (rank-one)
        std::vector<MatC> sr_yinv;         // per band (general)
        std::vector<double> g_cr;          // per constraint
        std::vector<double> g_tr;          // per trace constraint
        std::vector<std::vector<MatC>> g_t_mat; // [cr][band]: Hbar^H X^-1 Hbar
        std::vector<std::vector<MatC>> p_inv;   // [b][k]
        double phi(double mu) const { return f + mu * barrier; }
    };

    VecR pack(const std::vector<std::vector<MatC>> &q, const VecR &s) const
    {
        VecR x(nv_);
        for (int b = 0; b < spec_.num_bands; ++b)
            for (int k = 0; k < spec_.num_users; ++k)
                x.segment(var_offset(b, k), n2_) = hvec(q[b][k]);
        if (spec_.slacks)
            x.tail(spec_.num_users) = s;
        return x;
    }

    Eval evaluate(const VecR &x, bool derivs) const
    {
        Eval e;
        e.q.assign(spec_.num_bands, std::vector<MatC>(spec_.num_users));
        e.qtot.assign(spec_.num_bands, MatC::Zero(spec_.n_tx, spec_.n_tx));
        e.logdet_q.assign(spec_.num_bands * spec_.num_users, 0.0);
        if (derivs)
            e.p_inv.assign(spec_.num_bands, std::vector<MatC>(spec_.num_users));
        const MatC eye = MatC::Identity(spec_.n_tx, spec_.n_tx);

        for (int b = 0; b < spec_.num_bands; ++b)
            for (int k = 0; k < spec_.num_users; ++k)
            {
                MatC q = unhvec(x.segment(var_offset(b, k), n2_));
                e.q[b][k] = q;
                e.qtot[b] += q;
                Eigen::LLT<MatC> llt(MatC(q + delta_ * eye));
                if (llt.info() != Eigen::Success)
                    return e; // infeasible
                const double ld =
                    2.0 * llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
                e.logdet_q[b * spec_.num_users + k] = ld;
                e.barrier += ld;
                if (derivs)
                    e.p_inv[b][k] = hermitian_part(llt.solve(eye));
            }

        // Sensing objective.
        e.sr_quad.assign(spec_.num_bands, 0.0);
        if (derivs)
            e.sr_yinv.assign(spec_.num_bands, MatC());
        for (int b = 0; b < spec_.num_bands; ++b)
        {
            const auto &sb = spec_.sensing[b];
            if (sb.rank_one)
            {
                if (sb.c_gain <= 0.0)
                    continue;
                const double quad = herm_inner(sb.m_dir, e.qtot[b]);
                const double arg = spec_.l_slots * sb.c_gain * quad;
                if (arg <= -1.0 + 1e-300)
                    return e;
                e.sr_quad[b] = quad;
                e.f += sb.bandwidth / spec_.l_slots * std::log1p(arg);
            }
            else
            {
                const int m = static_cast<int>(sb.u_factors[0].cols());
                MatC y = MatC::Identity(m, m);
                for (const auto &u : sb.u_factors)
                    y += spec_.l_slots * (u.adjoint() * e.qtot[b] * u);
                Eigen::LLT<MatC> llt(hermitian_part(y));
                if (llt.info() != Eigen::Success)
                    return e;
                e.f += sb.bandwidth / spec_.l_slots * 2.0 *
                       llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
                if (derivs)
                    e.sr_yinv[b] = llt.solve(MatC::Identity(m, m));
            }
        }

        // Communication-rate surrogate constraints.
        const int ncr = static_cast<int>(spec_.crs.size());
        e.g_cr.assign(ncr, 0.0);
        if (derivs)
            e.g_t_mat.assign(ncr, std::vector<MatC>(spec_.num_bands));
        for (int kc = 0; kc < ncr; ++kc)
        {
            const auto &cr = spec_.crs[kc];
            double g = -cr.lin_const - cr.r_min;
            for (int b = 0; b < spec_.num_bands; ++b)
            {
                const auto &bt = cr.bands[b];
                const int nk = static_cast<int>(bt.hbar.rows());
                Eigen::LLT<MatC> llt(hermitian_part(
                    MatC(MatC::Identity(nk, nk) + bt.hbar * e.qtot[b] * bt.hbar.adjoint())));
                if (llt.info() != Eigen::Success)
                    return e;
                g += bt.bandwidth * 2.0 *
                     llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
                for (int i = 0; i < spec_.num_users; ++i)
                    if (i != cr.user)
                        g -= bt.bandwidth * herm_inner(bt.g_lin, e.q[b][i]);
                if (derivs)
                    e.g_t_mat[kc][b] =
                        hermitian_part(bt.hbar.adjoint() *
                                       llt.solve(MatC(bt.hbar)));
            }
            if (spec_.slacks)
                g += x[slack_offset(cr.user)];
            if (g <= 0.0)
                return e;
            e.g_cr[kc] = g;
            e.barrier += std::log(g);
        }

        // Trace constraints.
        e.g_tr.assign(spec_.traces.size(), 0.0);
        for (std::size_t t = 0; t < spec_.traces.size(); ++t)
        {
            double g = spec_.traces[t].budget;
            for (const auto &[b, k] : spec_.traces[t].members)
                g -= e.q[b][k].trace().real();
            if (g <= 0.0)
                return e;
            e.g_tr[t] = g;
            e.barrier += std::log(g);
        }

        // Slacks.
        if (spec_.slacks)
        {
            e.s = x.tail(spec_.num_users);
            for (int k = 0; k < spec_.num_users; ++k)
            {
                if (e.s[k] <= 0.0)
                    return e;
                e.f -= spec_.rho * e.s[k];
                e.barrier += std::log(e.s[k]);
            }
        }
        e.feasible = true;
        return e;
    }

    // Gradient of the barrier objective phi_mu at an evaluated point.
    VecR gradient(const Eval &e, double mu) const
    {
        VecR g = VecR::Zero(nv_);
        for (int b = 0; b < spec_.num_bands; ++b)
        {
            const auto &sb = spec_.sensing[b];
            MatC gsr = MatC::Zero(spec_.n_tx, spec_.n_tx);
            if (sb.rank_one)
            {
                if (sb.c_gain > 0.0)
                {
                    const double denom = 1.0 + spec_.l_slots * sb.c_gain * e.sr_quad[b];
                    gsr = (sb.bandwidth * sb.c_gain / denom) * sb.m_dir;
                }
            }
            else
            {
                for (const auto &u : sb.u_factors)
                    gsr += sb.bandwidth * (u * e.sr_yinv[b] * u.adjoint());
                gsr = hermitian_part(gsr);
            }
            for (int k = 0; k < spec_.num_users; ++k)
            {
                MatC gm = gsr + mu * e.p_inv[b][k];
                for (std::size_t kc = 0; kc < spec_.crs.size(); ++kc)
                {
                    const auto &cr = spec_.crs[kc];
                    const auto &bt = cr.bands[b];
                    MatC dg = bt.bandwidth * e.g_t_mat[kc][b];
                    if (k != cr.user)
                        dg -= bt.bandwidth * bt.g_lin;
                    gm += (mu / e.g_cr[kc]) * dg;
                }
                g.segment(var_offset(b, k), n2_) = hvec(gm);
            }
        }
        for (std::size_t t = 0; t < spec_.traces.size(); ++t)
        {
            const double coef = mu / e.g_tr[t];
            for (const auto &[b, k] : spec_.traces[t].members)
            {
                // gradient of g_t is -I on each member
                for (int d = 0; d < spec_.n_tx; ++d)
                    g[var_offset(b, k) + d] -= coef;
            }
        }
        if (spec_.slacks)
            for (int k = 0; k < spec_.num_users; ++k)
            {
                double gs = -spec_.rho + mu / e.s[k];
                for (std::size_t kc = 0; kc < spec_.crs.size(); ++kc)
                    if (spec_.crs[kc].user == k)
                        gs += mu / e.g_cr[kc];
                g[slack_offset(k)] = gs;
            }
        return g;
    }

    // Newton system: (-Hessian of phi_mu) assembled as per-band dense blocks
    // plus rank-one cross terms. Returns the ascent direction.
    VecR newton_direction(const Eval &e, double mu, const VecR &grad) const
    {
        const int kb = spec_.num_users * n2_; // band block size
        std::vector<MatR> blocks(spec_.num_bands, MatR::Zero(kb, kb));

        for (int b = 0; b < spec_.num_bands; ++b)
        {
            MatR &blk = blocks[b];
            // PSD barrier curvature, diagonal per user.
            for (int k = 0; k < spec_.num_users; ++k)
                blk.block(k * n2_, k * n2_, n2_, n2_) += mu * congruence_block(e.p_inv[b][k]);

            // Sensing objective curvature, tiled over user pairs.
            const auto &sb = spec_.sensing[b];
            if (sb.rank_one)
            {
                if (sb.c_gain > 0.0)
                {
                    const double denom = 1.0 + spec_.l_slots * sb.c_gain * e.sr_quad[b];
                    const double coef =
                        sb.bandwidth * spec_.l_slots * sb.c_gain * sb.c_gain / (denom * denom);
                    VecR w = hvec(sb.m_dir);
                    VecR wt(kb);
                    for (int k = 0; k < spec_.num_users; ++k)
                        wt.segment(k * n2_, n2_) = w;
                    blk.noalias() += coef * (wt * wt.transpose());
                }
            }
            else
            {
                MatR ksr = MatR::Zero(n2_, n2_);
                const int nr = static_cast<int>(sb.u_factors.size());
                for (int r = 0; r < nr; ++r)
                    for (int s = 0; s < nr; ++s)
                    {
                        const MatC c = sb.u_factors[r] * e.sr_yinv[b] * sb.u_factors[s].adjoint();
                        ksr += congruence_block_rect(c);
                    }
                ksr = 0.5 * (ksr + ksr.transpose()) * (sb.bandwidth * spec_.l_slots);
                for (int i = 0; i < spec_.num_users; ++i)
                    for (int j = 0; j < spec_.num_users; ++j)
                        blk.block(i * n2_, j * n2_, n2_, n2_) += ksr;
            }

            // Curvature of the log-det terms of the rate constraints.
            for (std::size_t kc = 0; kc < spec_.crs.size(); ++kc)
            {
                const auto &bt = spec_.crs[kc].bands[b];
                const double coef = (mu / e.g_cr[kc]) * bt.bandwidth;
                if (coef <= 0.0)
                    continue;
                const MatR kw = congruence_block(e.g_t_mat[kc][b]);
                for (int i = 0; i < spec_.num_users; ++i)
                    for (int j = 0; j < spec_.num_users; ++j)
                        blk.block(i * n2_, j * n2_, n2_, n2_) += coef * kw;
            }
        }

        // Slack diagonal of -H.
        VecR sdiag;
        if (spec_.slacks)
        {
            sdiag.resize(spec_.num_users);
            for (int k = 0; k < spec_.num_users; ++k)
                sdiag[k] = mu / (e.s[k] * e.s[k]);
        }

        // Cross rank-one terms: trace and rate constraints.
        std::vector<VecR> cross;
        for (std::size_t t = 0; t < spec_.traces.size(); ++t)
        {
            VecR u = VecR::Zero(nv_);
            for (const auto &[b, k] : spec_.traces[t].members)
                for (int d = 0; d < spec_.n_tx; ++d)
                    u[var_offset(b, k) + d] = -1.0;
            cross.push_back(std::sqrt(mu) / e.g_tr[t] * u);
        }
        for (std::size_t kc = 0; kc < spec_.crs.size(); ++kc)
        {
            const auto &cr = spec_.crs[kc];
            VecR u = VecR::Zero(nv_);
            for (int b = 0; b < spec_.num_bands; ++b)
            {
                const auto &bt = cr.bands[b];
                for (int i = 0; i < spec_.num_users; ++i)
                {
                    MatC dg = bt.bandwidth * e.g_t_mat[kc][b];
                    if (i != cr.user)
                        dg -= bt.bandwidth * bt.g_lin;
                    u.segment(var_offset(b, i), n2_) += hvec(dg);
                }
            }
            if (spec_.slacks)
                u[slack_offset(cr.user)] = 1.0;
            cross.push_back(std::sqrt(mu) / e.g_cr[kc] * u);
        }

        // Factor per-band blocks (ridge fallback for hard numerical cases).
        std::vector<Eigen::LLT<MatR>> llts(spec_.num_bands);
        for (int b = 0; b < spec_.num_bands; ++b)
        {
            double ridge = 0.0;
            for (int attempt = 0; attempt < 8; ++attempt)
            {
                MatR m = blocks[b];
                if (ridge > 0.0)
                    m.diagonal().array() += ridge;
                llts[b].compute(m);
                if (llts[b].info() == Eigen::Success)
                    break;
                ridge = (ridge == 0.0)
                            ? 1e-14 * std::max(1.0, blocks[b].diagonal().maxCoeff())
                            : ridge * 100.0;
            }
            if (llts[b].info() != Eigen::Success)
                throw std::runtime_error("newton_direction: band block factorization failed");
        }

        auto solve_d = [&](const VecR &r) -> VecR {
            VecR out(nv_);
            for (int b = 0; b < spec_.num_bands; ++b)
                out.segment(b * kb, kb) = llts[b].solve(r.segment(b * kb, kb));
            if (spec_.slacks)
                for (int k = 0; k < spec_.num_users; ++k)
                    out[slack_offset(k)] = r[slack_offset(k)] / sdiag[k];
            return out;
        };

        const int m = static_cast<int>(cross.size());
        MatR dinv_u(nv_, std::max(m, 1));
        MatR cap;
        if (m > 0)
        {
            for (int j = 0; j < m; ++j)
                dinv_u.col(j) = solve_d(cross[j]);
            cap = MatR::Identity(m, m);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j)
                    cap(i, j) += cross[i].dot(dinv_u.col(j));
        }
        auto solve_m = [&](const VecR &r) -> VecR {
            VecR x = solve_d(r);
            if (m == 0)
                return x;
            VecR rhs(m);
            for (int j = 0; j < m; ++j)
                rhs[j] = cross[j].dot(x);
            const VecR y = cap.ldlt().solve(rhs);
            return x - dinv_u.leftCols(m) * y;
        };
        auto apply_m = [&](const VecR &v) -> VecR {
            VecR out(nv_);
            for (int b = 0; b < spec_.num_bands; ++b)
                out.segment(b * kb, kb).noalias() = blocks[b] * v.segment(b * kb, kb);
            if (spec_.slacks)
                for (int k = 0; k < spec_.num_users; ++k)
                    out[slack_offset(k)] = sdiag[k] * v[slack_offset(k)];
            for (int j = 0; j < m; ++j)
                out += cross[j] * cross[j].dot(v);
            return out;
        };

        // Stiff active-constraint rank-one terms cost digits in the Woodbury
        // correction; iterative refinement restores them.
        VecR x = solve_m(grad);
        for (int refine = 0; refine < 2; ++refine)
            x += solve_m(VecR(grad - apply_m(x)));
        return x;
    }

    // Fraction-to-boundary plus Armijo backtracking on phi_mu.
    // Returns the accepted evaluation, or nullopt when no progress is possible.
    std::optional<std::pair<double, Eval>> line_search(const VecR &x, const Eval &cur,
                                                       const VecR &dir, double mu,
                                                       double slope) const
    {
        double t = 1.0;
        int shrink = 0;
        for (; shrink < 120; ++shrink)
        {
            Eval trial = evaluate(x + t * dir, false);
            if (trial.feasible)
                break;
            t *= 0.7;
        }
        if (shrink == 120)
            return std::nullopt;
        if (shrink > 0)
            t *= 0.99; // stay strictly inside the boundary just crossed
        // Near convergence the Armijo increment dips below the evaluation
        // noise of phi; the floor keeps such steps acceptable.
        const double noise = 1e-13 * (1.0 + std::abs(cur.phi(mu)));
        for (int i = 0; i < 60; ++i)
        {
            Eval trial = evaluate(x + t * dir, false);
            if (trial.feasible && trial.phi(mu) >= cur.phi(mu) + 1e-4 * t * slope - noise)
                return std::make_pair(t, evaluate(x + t * dir, true));
            t *= 0.5;
        }
        return std::nullopt;
    }

    const SubproblemSpec &spec() const { return spec_; }
    int nv() const { return nv_; }
    double jitter() const { return delta_; }

    // Barrier complexity measure used for the duality-gap proxy.
    double cone_complexity() const
    {
        double nu = double(spec_.num_bands) * spec_.num_users * spec_.n_tx;
        nu += double(spec_.traces.size()) + double(spec_.crs.size());
        if (spec_.slacks)
            nu += spec_.num_users;
        return nu;
    }

private:
    const SubproblemSpec &spec_;
    int n2_, nq_, nv_;
    double delta_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// KKT residuals for a candidate solution with dual certificates.
// ---------------------------------------------------------------------------

inline KktResidual kkt_residual(const SubproblemSpec &spec, const SolveResult &cand)
{
    KktResidual r;
    double grad_scale = 1.0;

    // Stationarity: grad f + sum lambda_t grad g_t + sum lambda_k grad g_k + Lambda = 0.
    // Guarded: a candidate outside the objective domain has no finite gradient.
    try
    {
        const auto grad_obj = objective_gradient(spec, cand.Q);
        for (int b = 0; b < spec.num_bands; ++b)
            grad_scale = std::max(grad_scale, grad_obj[b][0].cwiseAbs().maxCoeff());
        for (int b = 0; b < spec.num_bands; ++b)
            for (int k = 0; k < spec.num_users; ++k)
            {
                MatC st = grad_obj[b][k] + cand.psd_duals[b][k];
                for (std::size_t t = 0; t < spec.traces.size(); ++t)
                    for (const auto &[tb, tk] : spec.traces[t].members)
                        if (tb == b && tk == k)
                            st -= cand.trace_duals[t] * MatC::Identity(spec.n_tx, spec.n_tx);
                for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
                    st += cand.cr_duals[kc] *
                          cr_constraint_gradient(spec, static_cast<int>(kc), b, k, cand.Q);
                r.stationarity = std::max(r.stationarity, st.cwiseAbs().maxCoeff() / grad_scale);
            }
        if (spec.slacks)
            for (int k = 0; k < spec.num_users; ++k)
            {
                double st = -spec.rho + cand.slack_duals[k];
                for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
                    if (spec.crs[kc].user == k)
                        st += cand.cr_duals[kc];
                r.stationarity = std::max(r.stationarity, std::abs(st) / std::max(1.0, spec.rho));
            }
    }
    catch (const std::domain_error &)
    {
        r.stationarity = std::numeric_limits<double>::infinity();
    }

    // Primal feasibility.
    for (std::size_t t = 0; t < spec.traces.size(); ++t)
    {
        double g = spec.traces[t].budget;
        for (const auto &[b, k] : spec.traces[t].members)
            g -= cand.Q[b][k].trace().real();
        r.primal = std::max(r.primal, -g / spec.traces[t].budget);
    }
    for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
    {
        double g = cr_surrogate_margin(spec, static_cast<int>(kc), cand.Q);
        if (spec.slacks)
            g += cand.slack[spec.crs[kc].user];
        r.primal = std::max(r.primal, -g / std::max(1.0, std::abs(spec.crs[kc].r_min)));
    }
    for (int b = 0; b < spec.num_bands; ++b)
        for (int k = 0; k < spec.num_users; ++k)
        {
            const double tr = std::max(cand.Q[b][k].trace().real(), 1e-300);
            r.primal = std::max(r.primal, -min_eigenvalue(cand.Q[b][k]) / tr);
        }
    if (spec.slacks)
        for (int k = 0; k < spec.num_users; ++k)
            r.primal = std::max(r.primal, -cand.slack[k]);

    // Dual feasibility.
    for (double l : cand.trace_duals)
        r.dual = std::max(r.dual, -l / grad_scale);
    for (int kc = 0; kc < cand.cr_duals.size(); ++kc)
        r.dual = std::max(r.dual, -cand.cr_duals[kc] / grad_scale);
    for (int b = 0; b < spec.num_bands; ++b)
        for (int k = 0; k < spec.num_users; ++k)
            r.dual = std::max(r.dual, -min_eigenvalue(cand.psd_duals[b][k]) / grad_scale);
    if (spec.slacks)
        for (int k = 0; k < spec.num_users; ++k)
            r.dual = std::max(r.dual, -cand.slack_duals[k] / grad_scale);

    // Complementarity, relative to the objective scale.
    const double fscale = std::max(1.0, std::abs(cand.objective));
    for (std::size_t t = 0; t < spec.traces.size(); ++t)
    {
        double g = spec.traces[t].budget;
        for (const auto &[b, k] : spec.traces[t].members)
            g -= cand.Q[b][k].trace().real();
        r.complementarity = std::max(r.complementarity, std::abs(cand.trace_duals[t] * g) / fscale);
    }
    for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
    {
        double g = cr_surrogate_margin(spec, static_cast<int>(kc), cand.Q);
        if (spec.slacks)
            g += cand.slack[spec.crs[kc].user];
        r.complementarity = std::max(r.complementarity, std::abs(cand.cr_duals[kc] * g) / fscale);
    }
    for (int b = 0; b < spec.num_bands; ++b)
        for (int k = 0; k < spec.num_users; ++k)
            r.complementarity = std::max(
                r.complementarity, std::abs(herm_inner(cand.psd_duals[b][k], cand.Q[b][k])) / fscale);
    if (spec.slacks)
        for (int k = 0; k < spec.num_users; ++k)
            r.complementarity =
                std::max(r.complementarity, std::abs(cand.slack_duals[k] * cand.slack[k]) / fscale);
    return r;
}

// ---------------------------------------------------------------------------
// solve_subproblem
// ---------------------------------------------------------------------------

namespace detail {

struct BarrierOutcome
{
    VecR x;
    BarrierEngine::Eval eval;
    double mu_final = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Path-following loop: mu0 = objective-scale/10, geometric reduction by 0.2
// until the duality-gap proxy nu*mu falls below the KKT tolerance.
inline BarrierOutcome run_barrier(const BarrierEngine &eng, VecR x)
{
    const SubproblemSpec &spec = eng.spec();
    BarrierOutcome out;
    auto cur = eng.evaluate(x, true);
    if (!cur.feasible)
        throw std::runtime_error("run_barrier: start point infeasible");

    const double nu = eng.cone_complexity();
    double mu = std::max(1.0, std::abs(cur.f)) / 10.0;

    for (int stage = 0; stage < 200; ++stage)
    {
        const double mu_target =
            spec.kkt_tol * std::max(1.0, std::abs(cur.f)) / nu;
        const bool final_stage = mu <= mu_target * 1.0000001;

        int it = 0;
        for (; it < spec.max_newton; ++it)
        {
            const VecR grad = eng.gradient(cur, mu);
            if (final_stage)
            {
                // Drive the exact stationarity residual of the dual estimates
                // (= the barrier gradient) below the KKT tolerance.
                const double gscale =
                    std::max(1.0, eng.gradient(cur, 0.0).cwiseAbs().maxCoeff());
                if (grad.cwiseAbs().maxCoeff() <= 0.5 * spec.kkt_tol * gscale)
                    break;
            }
            VecR dir;
            try
            {
                dir = eng.newton_direction(cur, mu, grad);
            }
            catch (const std::runtime_error &)
            {
                break;
            }
            const double slope = grad.dot(dir);
            if (slope <= 0.0)
                break; // numerical floor reached
            if (!final_stage && 0.5 * slope <= 0.05 * mu)
                break;
            auto step = eng.line_search(x, cur, dir, mu, slope);
            ++out.iterations;
            if (!step)
                break;
            x += step->first * dir;
            cur = std::move(step->second);
            if (final_stage && 0.5 * slope <= 1e-15 * (1.0 + std::abs(cur.phi(mu))))
                break;
        }
        if (it >= spec.max_newton)
        {
            out.x = x;
            out.eval = std::move(cur);
            out.mu_final = mu;
            return out; // max-iters
        }
        if (final_stage)
        {
            out.converged = true;
            break;
        }
        mu = std::max(mu * 0.2, mu_target);
    }
    out.x = x;
    out.eval = std::move(cur);
    out.mu_final = mu;
    return out;
}

// Prepares a strictly feasible start for the trace and PSD barriers.
inline void condition_start(const SubproblemSpec &spec, std::vector<std::vector<MatC>> &q)
{
    const double floor_scale = 1e-4 * spec.total_budget() /
                               (double(spec.num_bands) * spec.num_users * spec.n_tx);
    for (auto &band : q)
        for (auto &m : band)
        {
            Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(m));
            const VecR ev = es.eigenvalues().cwiseMax(floor_scale);
            m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
            m = hermitian_part(m);
        }
    for (const auto &tc : spec.traces)
    {
        double sum = 0.0;
        for (const auto &[b, k] : tc.members)
            sum += q[b][k].trace().real();
        if (sum >= tc.budget * (1.0 - 1e-9))
        {
            const double scale = tc.budget * (1.0 - 1e-6) / sum;
            for (const auto &[b, k] : tc.members)
                q[b][k] *= scale;
        }
    }
}

} // namespace detail

inline SolveResult solve_subproblem(const SubproblemSpec &spec,
                                    const std::vector<std::vector<MatC>> &start)
{
    spec.validate();
    detail::BarrierEngine eng(spec);

    std::vector<std::vector<MatC>> q0 = start;
    detail::condition_start(spec, q0);

    VecR s0;
    if (spec.slacks)
    {
        s0.resize(spec.num_users);
        s0.setZero();
        for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
        {
            const double margin = cr_surrogate_margin(spec, static_cast<int>(kc), q0);
            const int k = spec.crs[kc].user;
            s0[k] = std::max(s0[k], std::max(0.0, -margin));
        }
        const double pad = 0.1 * std::max(1.0, spec.crs.empty() ? 1.0 : spec.crs[0].r_min);
        s0.array() += pad;
    }
    else if (!spec.crs.empty())
    {
        // The slack-free problem needs a strictly interior start for the rate
        // constraints. Restore one with escalating exact-penalty solves.
        const double floor =
            1e-10 * std::max(1.0, std::abs(spec.crs[0].r_min));
        bool interior = true;
        for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
            interior = interior && cr_surrogate_margin(spec, static_cast<int>(kc), q0) > floor;
        if (!interior)
        {
            SubproblemSpec aux = spec;
            aux.slacks = true;
            aux.kkt_tol = 1e-5; // restoration needs an interior point, not precision
            int total_aux_iters = 0;
            aux.rho = std::max(10.0, 2.0 * spec.rho);
            bool repaired = false;
            for (int esc = 0; esc < 7 && !repaired; ++esc)
            {
                SolveResult r = solve_subproblem(aux, q0);
                total_aux_iters += r.iterations;
                q0 = r.Q;
                detail::condition_start(spec, q0);
                repaired = true;
                for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
                    repaired =
                        repaired && cr_surrogate_margin(spec, static_cast<int>(kc), q0) > floor;
                aux.rho *= 8.0;
            }
            if (!repaired)
            {
                SolveResult fail;
                fail.Q = q0;
                fail.slack = VecR::Zero(spec.num_users);
                fail.status = SolveStatus::InfeasibleDetected;
                fail.iterations = total_aux_iters;
                fail.objective = sensing_objective_value(spec, q0);
                return fail;
            }
        }
    }

    VecR x = eng.pack(q0, s0);
    detail::BarrierOutcome out = detail::run_barrier(eng, std::move(x));

    SolveResult res;
    res.Q = out.eval.q;
    for (auto &band : res.Q)
        for (auto &m : band)
            m = hermitian_part(m);
    res.slack = spec.slacks ? out.eval.s : VecR::Zero(spec.num_users);
    res.objective = out.eval.f;
    res.iterations = out.iterations;

    const double mu = out.mu_final;
    res.trace_duals.resize(spec.traces.size());
    for (std::size_t t = 0; t < spec.traces.size(); ++t)
        res.trace_duals[t] = mu / out.eval.g_tr[t];
    res.cr_duals.resize(static_cast<int>(spec.crs.size()));
    for (std::size_t kc = 0; kc < spec.crs.size(); ++kc)
        res.cr_duals[static_cast<int>(kc)] = mu / out.eval.g_cr[kc];
    res.psd_duals.assign(spec.num_bands, std::vector<MatC>(spec.num_users));
    for (int b = 0; b < spec.num_bands; ++b)
        for (int k = 0; k < spec.num_users; ++k)
            res.psd_duals[b][k] = mu * out.eval.p_inv[b][k];
    res.slack_duals = VecR::Zero(spec.num_users);
    if (spec.slacks)
        for (int k = 0; k < spec.num_users; ++k)
            res.slack_duals[k] = mu / out.eval.s[k];

    res.kkt = kkt_residual(spec, res);
    const bool kkt_ok = res.kkt.stationarity <= 2.0 * spec.kkt_tol &&
                        res.kkt.primal <= 1e-7 && res.kkt.dual <= spec.kkt_tol &&
                        res.kkt.complementarity <= 1.01 * spec.kkt_tol;
    res.status = (out.converged && kkt_ok) ? SolveStatus::Optimal : SolveStatus::MaxIters;
    return res;
}

} // namespace mbisac

#endif // MBISAC_SOLVER_HPP
