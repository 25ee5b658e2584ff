"""Kruskal (CP) models: reconstruction, Gram caches, MTTKRP, gradient, ALS.

A model is a list of factor matrices A^(n) of shape (I_n, R) plus optional
per-component weights.  Complex models use the Hermitian Gram convention
C^(n) = A^(n)^H A^(n); all transpose placements below are chosen so the same
code path is exact for both scalar kinds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .tensor import (
    COMPLEX,
    DenseTensor,
    fold,
    khatri_rao_excl,
    kind_of,
    require_same_kind,
    unfold,
)


@dataclass
class KruskalModel:
    """Factor matrices A^(n) (I_n x R) with optional component weights."""

    factors: list
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.factors = [np.atleast_2d(np.asarray(f)) for f in self.factors]
        ranks = {f.shape[1] for f in self.factors}
        if len(ranks) != 1:
            raise ValueError("all factors must share the same column count")
        if self.weights is not None:
            self.weights = np.asarray(self.weights).reshape(-1)
            if self.weights.shape[0] != self.rank:
                raise ValueError("weights length must equal the rank")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def scalar_kind(self) -> str:
        return require_same_kind(*self.factors)

    def effective_weights(self) -> np.ndarray:
        if self.weights is None:
            dtype = self.factors[0].dtype
            return np.ones(self.rank, dtype=dtype)
        return self.weights

    def copy(self) -> "KruskalModel":
        w = None if self.weights is None else self.weights.copy()
        return KruskalModel([f.copy() for f in self.factors], w)

    def as_vector(self) -> np.ndarray:
        """Concatenated column-major vectorizations of all factors."""
        return np.concatenate([f.reshape(-1, order="F") for f in self.factors])


def model_from_vector(vec: np.ndarray, dims, rank: int) -> KruskalModel:
    factors = []
    offset = 0
    for d in dims:
        block = vec[offset : offset + d * rank]
        factors.append(np.asarray(block).reshape((d, rank), order="F"))
        offset += d * rank
    return KruskalModel(factors)


def reconstruct(model: KruskalModel) -> DenseTensor:
    """Sum of R weighted rank-one outer products, as a dense tensor."""
    a1 = model.factors[0] * model.effective_weights()[None, :]
    mat = a1 @ khatri_rao_excl(model.factors, 1).T
    return fold(mat, 1, model.dims)


@dataclass
class GramCache:
    """Per-iteration Gram products of a model's factors (all R x R).

    ``C[n]`` is A^(n)^H A^(n); ``gamma_excl[n]`` is the Hadamard product of all
    C^(k) except k = n; ``gamma_pair[n][m]`` excludes both n and m (and equals
    ``gamma_excl[n]`` on the diagonal); ``gamma_full`` includes every mode.
    """

    C: list
    gamma_excl: list
    gamma_pair: list
    gamma_full: np.ndarray


def build_gram_cache(model: KruskalModel) -> GramCache:
    n_modes = model.order
    r = model.rank
    C = [f.conj().T @ f for f in model.factors]

    def hprod(skip):
        rest = [C[k] for k in range(n_modes) if k not in skip]
        if not rest:
            return np.ones((r, r), dtype=C[0].dtype)
        return reduce(np.multiply, rest)

    gamma_excl = [hprod({n}) for n in range(n_modes)]
    gamma_pair = [
        [gamma_excl[n] if n == m else hprod({n, m}) for m in range(n_modes)]
        for n in range(n_modes)
    ]
    return GramCache(C, gamma_excl, gamma_pair, hprod(set()))


def mttkrp(y: DenseTensor, model: KruskalModel, n: int) -> np.ndarray:
    """Matricized tensor times Khatri-Rao product for mode n (1-based).

    For complex data the Khatri-Rao factors are conjugated, matching the
    Hermitian normal equations; for real data the conjugation is a no-op.
    """
    if y.dims != model.dims:
        raise ValueError(f"tensor dims {y.dims} do not match model {model.dims}")
    require_same_kind(y.data, *model.factors)
    return unfold(y, n) @ khatri_rao_excl(model.factors, n).conj()


def gradient(
    y: DenseTensor,
    model: KruskalModel,
    cache: GramCache | None = None,
    mttkrps: list | None = None,
) -> np.ndarray:
    """Stacked residual projection J^H vec(E) with E = Y - Yhat.

    Block n is vec(mttkrp(y, model, n) - A^(n) Gamma^(n)^T); the transpose is
    exact for the complex Hermitian Gamma and redundant for real data.
    """
    cache = cache or build_gram_cache(model)
    blocks = []
    for n in range(model.order):
        m = mttkrps[n] if mttkrps is not None else mttkrp(y, model, n + 1)
        blocks.append(
            (m - model.factors[n] @ cache.gamma_excl[n].T).reshape(-1, order="F")
        )
    return np.concatenate(blocks)


def residual_norm(y: DenseTensor, model: KruskalModel) -> float:
    return float(np.linalg.norm(y.data - reconstruct(model).data))


def relative_error(y: DenseTensor, model: KruskalModel) -> float:
    ynorm = y.norm()
    if ynorm == 0.0:
        raise ZeroDivisionError("relative error undefined for a zero tensor")
    return residual_norm(y, model) / ynorm


def normalize_equal_energy(model: KruskalModel) -> KruskalModel:
    """Rescale each component so its norm is identical in every mode.

    Weights are folded into the factors first; each mode-n vector of component
    r ends up with norm equal to the geometric mean of the component's mode
    norms (weight magnitude included).  The sign/phase is fixed by making the
    largest-magnitude entry of the first-mode vector real-positive, with the
    compensating phase folded into the last mode.  Reconstruction is unchanged.
    """
    n_modes = model.order
    factors = [f.copy() for f in model.factors]
    weights = model.effective_weights().copy()
    for r in range(model.rank):
        norms = np.array([np.linalg.norm(f[:, r]) for f in factors])
        if np.any(norms == 0.0):
            raise ZeroDivisionError(f"component {r} has a zero-norm vector")
        total = np.abs(weights[r]) * np.prod(norms)
        target = total ** (1.0 / n_modes)
        wphase = weights[r] / np.abs(weights[r]) if weights[r] != 0 else 1.0
        for n in range(n_modes):
            factors[n][:, r] *= target / norms[n]
        factors[-1][:, r] *= wphase
        if n_modes >= 2:
            lead = factors[0][:, r]
            top = lead[np.argmax(np.abs(lead))]
            phase = top / np.abs(top) if top != 0 else 1.0
            factors[0][:, r] /= phase
            factors[-1][:, r] *= phase
    return KruskalModel(factors, None)


def normalize_unit_modes(model: KruskalModel) -> KruskalModel:
    """Unit-norm components in modes 1..N-1; all magnitude in the last mode."""
    factors = [f.copy() for f in model.factors]
    weights = model.effective_weights().copy()
    for r in range(model.rank):
        scale = weights[r]
        for n in range(model.order - 1):
            nrm = np.linalg.norm(factors[n][:, r])
            if nrm == 0.0:
                raise ZeroDivisionError(f"component {r} has a zero-norm vector")
            factors[n][:, r] /= nrm
            scale = scale * nrm
        factors[-1][:, r] *= scale
    return KruskalModel(factors, None)


def random_init(dims, rank: int, rng, scalar_kind="real") -> KruskalModel:
    factors = []
    for d in dims:
        a = rng.standard_normal((d, rank))
        if scalar_kind == COMPLEX:
            a = a + 1j * rng.standard_normal((d, rank))
        factors.append(a)
    return KruskalModel(factors)


def svd_init(y: DenseTensor, rank: int, rng) -> KruskalModel:
    """Leading mode-n left singular vectors; extra columns (R > I_n) are random
    unit-norm draws from ``rng``."""
    factors = []
    for n in range(1, y.order + 1):
        u, _, _ = np.linalg.svd(unfold(y, n), full_matrices=False)
        k = min(rank, u.shape[1])
        cols = [u[:, :k]]
        if k < rank:
            extra = rng.standard_normal((u.shape[0], rank - k))
            if y.scalar_kind == COMPLEX:
                extra = extra + 1j * rng.standard_normal(extra.shape)
            extra = extra / np.linalg.norm(extra, axis=0, keepdims=True)
            cols.append(extra.astype(u.dtype))
        factors.append(np.hstack(cols))
    return KruskalModel(factors)


def pinv_psd(gamma: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a Hermitian PSD matrix via eigendecomposition.

    Eigenvalues below eps * R * lambda_max are truncated.
    """
    w, v = np.linalg.eigh(gamma)
    r = gamma.shape[0]
    cutoff = np.finfo(np.float64).eps * r * max(w.max(initial=0.0), 0.0)
    inv_w = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
    return (v * inv_w[None, :]) @ v.conj().T


def als_step(y: DenseTensor, model: KruskalModel) -> KruskalModel:
    """One ALS sweep, updating factors in ascending mode order."""
    factors = [f.copy() for f in model.factors]
    for n in range(model.order):
        work = KruskalModel(factors)
        cache = build_gram_cache(work)
        m = mttkrp(y, work, n + 1)
        factors[n] = m @ pinv_psd(cache.gamma_excl[n]).T
    return KruskalModel(factors)


def als_line_search_step(
    y: DenseTensor, model: KruskalModel, history: KruskalModel | None, t: int = 1
) -> KruskalModel:
    """ALS sweep with extrapolation against the previous iterate.

    Candidates A_prev + s (A_als - A_prev) for s in {1, 1.1, t^(1/3)} are
    scored by relative error; the best one wins.  With no history this is a
    plain ALS sweep.  The recipe is a documented stand-in: the classical
    "ALS with line search" baseline defers to toolbox internals.
    """
    stepped = als_step(y, model)
    if history is None:
        return stepped
    best = stepped
    best_err = relative_error(y, stepped)
    for s in (1.1, float(t) ** (1.0 / 3.0)):
        cand = KruskalModel(
            [
                hp + s * (ha - hp)
                for hp, ha in zip(history.factors, stepped.factors)
            ]
        )
        err = relative_error(y, cand)
        if err < best_err:
            best, best_err = cand, err
    return best
