"""Explicit Jacobian/Hessian assembly (the dense correctness oracle) and the
structured low-rank machinery: G + Z K Z^H decomposition, kernel inverse,
fast damped inverse, and the densities of the two small linear systems.

Dense paths are deliberately size-guarded: they exist to verify the fast
paths at desk scale, not to run at production scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .kruskal import GramCache, KruskalModel, build_gram_cache, gradient
from .tensor import (
    DenseTensor,
    commutation,
    khatri_rao_excl,
    mode_commutation,
)

ORACLE_MAX_ENTRIES = 10**7
ORACLE_MAX_RT = 3000


class OracleSizeError(ValueError):
    """Dense-oracle request exceeds the desk-scale guard."""


class SingularKernelError(np.linalg.LinAlgError):
    """The kernel matrix K is (numerically) singular; use the K-free path."""


def _guard(model: KruskalModel) -> None:
    j = int(np.prod(model.dims, dtype=np.int64))
    rt = model.rank * sum(model.dims)
    if j * rt > ORACLE_MAX_ENTRIES or rt > ORACLE_MAX_RT:
        raise OracleSizeError(
            f"dense oracle refused: J*RT = {j * rt}, RT = {rt}"
        )


def jacobian(model: KruskalModel) -> np.ndarray:
    """Dense Jacobian of vec(reconstruct) w.r.t. the stacked factor vector.

    Block n is Q_n ((KR_excl(n)) kron I_{I_n}) where Q_n maps mode-n
    vectorization to mode-1 vectorization.
    """
    _guard(model)
    blocks = []
    for n in range(1, model.order + 1):
        i_n = model.dims[n - 1]
        w = khatri_rao_excl(model.factors, n)
        q = mode_commutation(model.dims, n)
        blocks.append(q @ np.kron(w, np.eye(i_n)))
    return np.hstack(blocks)


def kernel_block(cache: GramCache, n: int, m: int) -> np.ndarray:
    """K^(n,m) = (1 - delta) P_R diag(vec(Gamma^(n,m))), R^2 x R^2, 1-based."""
    r = cache.gamma_full.shape[0]
    if n == m:
        return np.zeros((r * r, r * r), dtype=cache.gamma_full.dtype)
    d = cache.gamma_pair[n - 1][m - 1].reshape(-1, order="F")
    return commutation(r, r) * d[None, :]


def kernel_matrix(cache: GramCache) -> np.ndarray:
    n_modes = len(cache.C)
    return np.block(
        [
            [kernel_block(cache, n, m) for m in range(1, n_modes + 1)]
            for n in range(1, n_modes + 1)
        ]
    )


def kernel_is_invertible(cache: GramCache, rtol: float = 1e-10) -> bool:
    """Magnitude proxy for invertibility of K: every entry of every pairwise
    Gamma^(n,m) must be nonzero relative to the largest one."""
    n_modes = len(cache.C)
    mags = [
        np.abs(cache.gamma_pair[n][m])
        for n in range(n_modes)
        for m in range(n_modes)
        if n != m
    ]
    top = max(m.max() for m in mags)
    if top == 0.0:
        return False
    return all(m.min() > rtol * top for m in mags)


def kernel_inverse(cache: GramCache) -> np.ndarray:
    """Closed-form inverse of K: blocks (1/(N-1) - delta) diag(vec(C^(n) *
    C^(m) / Gamma)) P_R.  Requires nonzero pairwise Gamma entries and N >= 2."""
    n_modes = len(cache.C)
    if n_modes < 2:
        raise ValueError("kernel inverse needs at least two modes")
    if not kernel_is_invertible(cache):
        raise SingularKernelError(
            "a pairwise Gamma entry vanishes; K is singular"
        )
    r = cache.gamma_full.shape[0]
    p = commutation(r, r)
    blocks = []
    for n in range(n_modes):
        row = []
        for m in range(n_modes):
            coeff = 1.0 / (n_modes - 1) - (1.0 if n == m else 0.0)
            d = (cache.C[n] * cache.C[m] / cache.gamma_full).reshape(
                -1, order="F"
            )
            row.append(coeff * d[:, None] * p)
        blocks.append(row)
    return np.block(blocks)


def hessian_block(
    cache: GramCache, factors, n: int, m: int
) -> np.ndarray:
    """Approximate-Hessian sub-block (R I_n x R I_m), 1-based modes."""
    a_n, a_m = factors[n - 1], factors[m - 1]
    r = a_n.shape[1]
    block = np.kron(np.eye(r), a_n) @ kernel_block(cache, n, m) @ np.kron(
        np.eye(r), a_m.conj().T
    )
    if n == m:
        block = block + np.kron(cache.gamma_excl[n - 1], np.eye(a_n.shape[0]))
    return block


def assemble_hessian(model: KruskalModel, cache: GramCache | None = None):
    _guard(model)
    cache = cache or build_gram_cache(model)
    n_modes = model.order
    return np.block(
        [
            [
                hessian_block(cache, model.factors, n, m)
                for m in range(1, n_modes + 1)
            ]
            for n in range(1, n_modes + 1)
        ]
    )


@dataclass
class HessianParts:
    """The H = G + Z K Z^H decomposition, materialized densely for tests."""

    G: np.ndarray
    Z: np.ndarray
    K: np.ndarray
    T: int


def build_parts(cache: GramCache, factors) -> HessianParts:
    r = cache.gamma_full.shape[0]
    G = scipy.linalg.block_diag(
        *[
            np.kron(cache.gamma_excl[n], np.eye(factors[n].shape[0]))
            for n in range(len(factors))
        ]
    )
    Z = scipy.linalg.block_diag(
        *[np.kron(np.eye(r), f) for f in factors]
    )
    return HessianParts(G, Z, kernel_matrix(cache), sum(f.shape[0] for f in factors))


def dense_damped_solve(y: DenseTensor, model: KruskalModel, mu: float) -> np.ndarray:
    """Reference dGN step: solve (H + mu I) da = J^H vec(E) densely."""
    _guard(model)
    if mu <= 0:
        raise ValueError("mu must be positive")
    h = assemble_hessian(model)
    g = gradient(y, model)
    return np.linalg.solve(h + mu * np.eye(h.shape[0]), g)


def psi_blocks(cache: GramCache, mu: float) -> list:
    """Psi_mu diagonal blocks (Gamma^(n) + mu I)^{-1} kron C^(n), each R^2 x R^2."""
    r = cache.gamma_full.shape[0]
    eye = np.eye(r)
    out = []
    for n in range(len(cache.C)):
        gt = np.linalg.inv(cache.gamma_excl[n] + mu * eye)
        out.append(np.kron(gt, cache.C[n]))
    return out


def b_matrix(cache: GramCache, mu: float, use_kernel_inverse: bool) -> np.ndarray:
    """B_mu, the small NR^2 x NR^2 core of the damped inverse.

    ``use_kernel_inverse`` selects (K^{-1} + Psi)^{-1}; otherwise the always
    available K (I + Psi K)^{-1} form is used.  Solved by dense LU; NR^2 is
    small by assumption.
    """
    psi = scipy.linalg.block_diag(*psi_blocks(cache, mu))
    k = kernel_matrix(cache)
    eye = np.eye(k.shape[0])
    if use_kernel_inverse:
        return np.linalg.inv(kernel_inverse(cache) + psi)
    try:
        return k @ np.linalg.solve(eye + psi @ k, eye)
    except np.linalg.LinAlgError as exc:
        raise SingularKernelError(f"I + Psi K numerically singular: {exc}")


@dataclass
class StructuredInverse:
    """Memory-saving form of (H + mu I)^{-1}.

    Stores the N damped Gamma inverses (R x R each) and the N x N grid of
    R^2 x R^2 core blocks: exactly N R^2 + N^2 R^4 scalars.
    """

    gamma_tilde: list
    S: list
    mu: float

    def scalar_count(self) -> int:
        n = len(self.gamma_tilde)
        r2 = self.gamma_tilde[0].size
        return n * r2 + sum(b.size for row in self.S for b in row)


def fast_damped_inverse(
    cache: GramCache, factors, mu: float, use_kernel_inverse: bool | None = None
) -> StructuredInverse:
    """Structured (H + mu I)^{-1} from the low-rank adjustment.

    ``use_kernel_inverse=None`` picks the explicit-K^{-1} path exactly when the
    kernel invertibility proxy holds.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if use_kernel_inverse is None:
        use_kernel_inverse = kernel_is_invertible(cache)
    r = cache.gamma_full.shape[0]
    eye = np.eye(r)
    gamma_tilde = [
        np.linalg.inv(g + mu * eye) for g in cache.gamma_excl
    ]
    # The core grid is the congruence (Gt kron I) B (Gt kron I) with
    # Gt = (Gamma^(n) + mu I)^{-1}.  Forming B first and scaling afterwards
    # loses digits when mu is far below the top eigenvalue (Psi_mu ~ 1/mu), so
    # compute the scaled product directly from O(1)-conditioned systems.
    # With Sb = blkdiag((Gamma^(n)+muI) kron I) and Chat = blkdiag(I kron C^(n)):
    #   K^{-1} path: D = [Sb K^{-1} Sb + blkdiag((Gamma^(n)+muI) kron C^(n))]^{-1}
    #   K-free path: D = blkdiag(Gt kron I) K (Sb + Chat K)^{-1}
    damped = [cache.gamma_excl[n] + mu * eye for n in range(len(factors))]
    sb = scipy.linalg.block_diag(*[np.kron(g, eye) for g in damped])
    if use_kernel_inverse:
        diag = scipy.linalg.block_diag(
            *[np.kron(g, c) for g, c in zip(damped, cache.C)]
        )
        d = np.linalg.inv(sb @ kernel_inverse(cache) @ sb + diag)
    else:
        chat = scipy.linalg.block_diag(*[np.kron(eye, c) for c in cache.C])
        k = kernel_matrix(cache)
        gt = scipy.linalg.block_diag(*[np.kron(g, eye) for g in gamma_tilde])
        try:
            d = gt @ k @ np.linalg.solve(sb + chat @ k, np.eye(k.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise SingularKernelError(f"Sb + Chat K numerically singular: {exc}")
    r2 = r * r
    n_modes = len(factors)
    S = [
        [d[n * r2 : (n + 1) * r2, m * r2 : (m + 1) * r2] for m in range(n_modes)]
        for n in range(n_modes)
    ]
    return StructuredInverse(gamma_tilde, S, mu)


def materialize_inverse(sinv: StructuredInverse, factors) -> np.ndarray:
    """Dense (H + mu I)^{-1} from the block form; test scaffolding only."""
    r = sinv.gamma_tilde[0].shape[0]
    n_modes = len(factors)
    eye_r = np.eye(r)
    blocks = []
    for n in range(n_modes):
        row = []
        for m in range(n_modes):
            zn = np.kron(eye_r, factors[n])
            zm = np.kron(eye_r, factors[m])
            block = -zn @ sinv.S[n][m] @ zm.conj().T
            if n == m:
                block = block + np.kron(
                    sinv.gamma_tilde[n], np.eye(factors[n].shape[0])
                )
            row.append(block)
        blocks.append(row)
    return np.block(blocks)


def _split_blocks(vec: np.ndarray, factors) -> list:
    out = []
    offset = 0
    for f in factors:
        size = f.shape[0] * f.shape[1]
        out.append(vec[offset : offset + size].reshape(f.shape, order="F"))
        offset += size
    return out


def apply_damped_hessian(cache: GramCache, factors, vec: np.ndarray, mu: float):
    """(H + mu I) v without materializing H, via the G + Z K Z^H structure."""
    x = _split_blocks(vec, factors)
    w = [f.conj().T @ xn for f, xn in zip(factors, x)]
    blocks = []
    for n in range(len(factors)):
        acc = x[n] @ cache.gamma_excl[n].T + mu * x[n]
        corr = sum(
            (cache.gamma_pair[n][m] * w[m]).T
            for m in range(len(factors))
            if m != n
        )
        if not np.isscalar(corr):
            acc = acc + factors[n] @ corr
        blocks.append(acc.reshape(-1, order="F"))
    return np.concatenate(blocks)


def apply_damped_inverse(
    cache: GramCache, factors, b: np.ndarray, vec: np.ndarray, mu: float
):
    """(H + mu I)^{-1} v from the binomial-inverse pieces (b = B_mu)."""
    r = cache.gamma_full.shape[0]
    eye = np.eye(r)
    x = _split_blocks(vec, factors)
    gt_inv = [np.linalg.inv(g.T + mu * eye) for g in cache.gamma_excl]
    t = [xn @ gi for xn, gi in zip(x, gt_inv)]
    w = np.concatenate(
        [(f.conj().T @ tn).reshape(-1, order="F") for f, tn in zip(factors, t)]
    )
    y = b @ w
    r2 = r * r
    blocks = []
    for n in range(len(factors)):
        yn = y[n * r2 : (n + 1) * r2].reshape((r, r), order="F")
        out = t[n] - factors[n] @ yn @ gt_inv[n]
        blocks.append(out.reshape(-1, order="F"))
    return np.concatenate(blocks)


def phi_density(n_modes: int, rank: int, variant: str) -> Fraction:
    """Exact density of the small system matrix.

    ``variant`` is "phi1" (I + Psi K, the K-free path) or "phi2"
    (K^{-1} + Psi, requires invertible K).
    """
    if n_modes < 2 or rank < 1:
        raise ValueError("need N >= 2 and R >= 1")
    r2 = rank * rank
    if variant == "phi1":
        return Fraction((n_modes - 1) * r2 + 1, n_modes * r2)
    if variant == "phi2":
        return Fraction(r2 + n_modes - 1, n_modes * r2)
    raise ValueError(f"unknown variant {variant!r}")


def assemble_phi(cache: GramCache, mu: float, variant: str) -> np.ndarray:
    """Dense Phi_1 = I + Psi K or Phi_2 = K^{-1} + Psi, for density checks."""
    psi = scipy.linalg.block_diag(*psi_blocks(cache, mu))
    if variant == "phi1":
        k = kernel_matrix(cache)
        return np.eye(k.shape[0]) + psi @ k
    if variant == "phi2":
        return kernel_inverse(cache) + psi
    raise ValueError(f"unknown variant {variant!r}")
