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

#ifndef MBISAC_LINALG_HPP
#define MBISAC_LINALG_HPP

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

namespace mbisac {

using cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

/// (A + A^H)/2, exact Hermitian result.
inline MatC hermitian_part(const MatC &a) { return 0.5 * (a + a.adjoint()); }

/// Real inner product <A,B> = Re tr(A^H B) on the Hermitian space.
inline double herm_inner(const MatC &a, const MatC &b)
{
    return (a.adjoint() * b).trace().real();
}

inline double min_eigenvalue(const MatC &h)
{
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(h), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// ln det of a Hermitian positive definite matrix via Cholesky.
/// The argument is symmetrized before factorization.
inline double log_det_hpd(const MatC &a)
{
    Eigen::LLT<MatC> llt(hermitian_part(a));
    if (llt.info() != Eigen::Success)
        throw std::domain_error("log_det_hpd: matrix is not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
}

/// True if A + A^H has a Cholesky factorization (strictly positive definite).
inline bool is_hpd(const MatC &a)
{
    Eigen::LLT<MatC> llt(hermitian_part(a));
    return llt.info() == Eigen::Success;
}

/// Clamp negative eigenvalues of a Hermitian matrix to zero.
inline MatC psd_project(const MatC &a)
{
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(a));
    VecR ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

// ---------------------------------------------------------------------------
// Isometric vectorization of the n x n Hermitian matrices onto R^(n^2).
//
// Ordering: the n diagonal entries first, then for each column j and row i<j
// the pair (sqrt(2) Re H_ij, sqrt(2) Im H_ij).  The map preserves the inner
// product: hvec(A).dot(hvec(B)) == Re tr(A B) for Hermitian A, B.
// ---------------------------------------------------------------------------

inline VecR hvec(const MatC &h)
{
    const int n = static_cast<int>(h.rows());
    VecR x(n * n);
    int p = 0;
    for (int i = 0; i < n; ++i)
        x[p++] = h(i, i).real();
    const double s = std::sqrt(2.0);
    for (int j = 1; j < n; ++j)
        for (int i = 0; i < j; ++i)
        {
            x[p++] = s * h(i, j).real();
            x[p++] = s * h(i, j).imag();
        }
    return x;
}

inline MatC unhvec(const VecR &x)
{
    const int n = static_cast<int>(std::lround(std::sqrt(double(x.size()))));
    if (n * n != x.size())
        throw std::invalid_argument("unhvec: length is not a perfect square");
    MatC h(n, n);
    int p = 0;
    for (int i = 0; i < n; ++i)
        h(i, i) = x[p++];
    const double s = 1.0 / std::sqrt(2.0);
    for (int j = 1; j < n; ++j)
        for (int i = 0; i < j; ++i)
        {
            const double re = x[p++] * s, im = x[p++] * s;
            h(i, j) = cplx(re, im);
            h(j, i) = cplx(re, -im);
        }
    return h;
}

namespace detail {

// Applies f(M) = hvec(M) to the images of all n^2 basis matrices under a
// congruence-type map, producing one column per basis element.
template <class ImageFn>
MatR hvec_block(int n, ImageFn &&image)
{
    MatR k(n * n, n * n);
    int p = 0;
    for (int i = 0; i < n; ++i)
        k.col(p++) = hvec(image(i, i, false));
    for (int j = 1; j < n; ++j)
        for (int i = 0; i < j; ++i)
        {
            k.col(p++) = hvec(image(i, j, false));
            k.col(p++) = hvec(image(i, j, true));
        }
    return k;
}

} // namespace detail

/// Symmetric-Kronecker style operator of a Hermitian W: the n^2 x n^2 real
/// matrix K with K * hvec(D) == hvec(W D W) for every Hermitian D.
inline MatR congruence_block(const MatC &w)
{
    const int n = static_cast<int>(w.rows());
    const double s = 1.0 / std::sqrt(2.0);
    const cplx im_unit(0.0, 1.0);
    return detail::hvec_block(n, [&](int i, int j, bool imag) -> MatC {
        const VecC wi = w.col(i), wj = w.col(j);
        if (i == j)
            return wi * wi.adjoint();
        if (!imag)
            return s * (wi * wj.adjoint() + wj * wi.adjoint());
        return im_unit * s * (wi * wj.adjoint() - wj * wi.adjoint());
    });
}

/// Generalization for a (possibly non-square or non-Hermitian) C:
/// K * hvec(D) == hvec(C^H D C) for Hermitian D of size rows(C).
inline MatR congruence_block_rect(const MatC &c)
{
    const int n = static_cast<int>(c.cols());
    const int m = static_cast<int>(c.rows());
    const double s = 1.0 / std::sqrt(2.0);
    const cplx im_unit(0.0, 1.0);
    // E_p lives in the m x m space (row space of C); the image C^H E_p C is n x n.
    MatR k(n * n, m * m);
    int p = 0;
    auto rowvec = [&](int i) -> VecC { return c.row(i).adjoint(); };
    for (int i = 0; i < m; ++i)
        k.col(p++) = hvec(MatC(rowvec(i) * rowvec(i).adjoint()));
    for (int j = 1; j < m; ++j)
        for (int i = 0; i < j; ++i)
        {
            const VecC ri = rowvec(i), rj = rowvec(j);
            k.col(p++) = hvec(MatC(s * (ri * rj.adjoint() + rj * ri.adjoint())));
            k.col(p++) = hvec(MatC(im_unit * s * (ri * rj.adjoint() - rj * ri.adjoint())));
        }
    return k;
}

} // namespace mbisac

#endif // MBISAC_LINALG_HPP
