"""Fast damped Gauss-Newton iteration for CP decomposition.

One iteration computes, per mode: the damped ALS factor, a small projected
residual w, the solution F of an NR^2 x NR^2 system, and a rank-R correction
to the factor.  The candidate is accepted only if it lowers the residual;
the damping parameter follows the Nielsen gain-ratio schedule.

The same code path serves real and complex tensors: Gram matrices are
Hermitian, and every place where a damped Gamma inverse right-multiplies a
factor uses (Gamma^(n)^T + mu I)^{-1}, which reduces to the symmetric form
for real data.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .hessian import (
    SingularKernelError,
    apply_damped_hessian,
    apply_damped_inverse,
    b_matrix,
    dense_damped_solve,
    kernel_is_invertible,
)
from .kruskal import (
    GramCache,
    KruskalModel,
    als_line_search_step,
    als_step,
    build_gram_cache,
    model_from_vector,
    mttkrp,
    normalize_equal_energy,
    normalize_unit_modes,
    random_init,
    relative_error,
    svd_init,
)
from .tensor import DenseTensor

VARIANTS = ("flm-a", "flm-b", "auto", "als", "als-ls", "dgn-oracle")

MU_OVERFLOW = 1e30
RHO_DENOM_GUARD = 1e-30


@dataclass
class LmState:
    """Damping parameter and Nielsen growth bookkeeping."""

    mu: float
    growth: float = 2.0
    err_history: list = field(default_factory=list)
    iter: int = 0
    accepted: bool = False


@dataclass
class FitConfig:
    rank: int
    variant: str = "auto"
    tau: float = 1e-3
    tol: float = 1e-8
    max_iters: int = 1000
    seed: int = 0
    init: str = "svd"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")


@dataclass
class IterRecord:
    iter: int
    relerr: float
    mu: float
    accepted: bool


@dataclass
class FitResult:
    model: KruskalModel
    trace: list
    stop_reason: str
    time_ms: float = 0.0

    @property
    def iters(self) -> int:
        return len(self.trace)

    @property
    def accepted_iters(self) -> int:
        return sum(1 for rec in self.trace if rec.accepted)

    @property
    def final_relerr(self) -> float:
        return self.trace[-1].relerr if self.trace else float("nan")


def damped_als_factor(
    y: DenseTensor,
    model: KruskalModel,
    cache: GramCache,
    n: int,
    mu: float,
    mttkrp_n: np.ndarray | None = None,
) -> np.ndarray:
    """Damped ALS update for mode n (1-based): mttkrp . (Gamma^(n)^T + mu I)^{-1}."""
    m = mttkrp_n if mttkrp_n is not None else mttkrp(y, model, n)
    r = model.rank
    gt = cache.gamma_excl[n - 1].T
    return m @ np.linalg.inv(gt + mu * np.eye(r))


def compute_w(
    model: KruskalModel, cache: GramCache, damped_factors, mu: float
) -> np.ndarray:
    """Projected residual w = L_mu^H g, stacked blocks of length R^2.

    Block n is vec(A^(n)^H A_mu^(n) - C^(n) Gamma^(n)^T (Gamma^(n)^T + mu I)^{-1}).
    """
    r = model.rank
    eye = np.eye(r)
    blocks = []
    for n in range(model.order):
        gt = cache.gamma_excl[n].T
        gt_damped_inv = np.linalg.inv(gt + mu * eye)
        w_n = (
            model.factors[n].conj().T @ damped_factors[n]
            - cache.C[n] @ gt @ gt_damped_inv
        )
        blocks.append(w_n.reshape(-1, order="F"))
    return np.concatenate(blocks)


def _core_matrix(cache: GramCache, mu: float, variant: str) -> np.ndarray:
    if variant == "auto":
        variant = "flm-b" if kernel_is_invertible(cache) else "flm-a"
    if variant == "flm-b" and not kernel_is_invertible(cache):
        raise SingularKernelError("flm-b requested but K is singular")
    return b_matrix(cache, mu, use_kernel_inverse=(variant == "flm-b"))


def _frontal_slices(cache: GramCache, f: np.ndarray) -> list:
    r = cache.gamma_full.shape[0]
    return [
        f[n * r * r : (n + 1) * r * r].reshape((r, r), order="F")
        for n in range(len(cache.C))
    ]


def solve_B(
    cache: GramCache, w: np.ndarray, mu: float, variant: str = "auto"
) -> list:
    """Solve vec(F) = B_mu w and return the N frontal R x R slices F_n.

    "flm-b" uses the explicit kernel inverse (errors if K is singular);
    "flm-a" uses the always-available K (I + Psi K)^{-1} form; "auto" picks
    "flm-b" exactly when the kernel invertibility proxy holds.
    """
    b = _core_matrix(cache, mu, variant)
    return _frontal_slices(cache, b @ w)


def flm_update(
    model: KruskalModel, damped_factors, F, cache: GramCache, mu: float
) -> KruskalModel:
    """Candidate factors A_mu^(n) + A^(n) (I - (F_n + Gamma^(n)^T) Gtilde^T)."""
    r = model.rank
    eye = np.eye(r)
    factors = []
    for n in range(model.order):
        gt = cache.gamma_excl[n].T
        gt_damped_inv = np.linalg.inv(gt + mu * eye)
        factors.append(
            damped_factors[n]
            + model.factors[n] @ (eye - (F[n] + gt) @ gt_damped_inv)
        )
    return KruskalModel(factors)


def flm_step(
    y: DenseTensor,
    model: KruskalModel,
    mu: float,
    variant: str = "auto",
    cache: GramCache | None = None,
    mttkrps: list | None = None,
    refine_steps: int = 2,
) -> KruskalModel:
    """One fast dGN candidate (all factors updated simultaneously).

    After the factored update, a few rounds of structured iterative refinement
    (residual recomputed through the G + Z K Z^H form, correction through the
    binomial inverse) remove the forward error the inverse-application route
    accumulates when mu is far below the top Hessian eigenvalue.
    """
    cache = cache or build_gram_cache(model)
    if mttkrps is None:
        mttkrps = [mttkrp(y, model, n) for n in range(1, model.order + 1)]
    damped = [
        damped_als_factor(y, model, cache, n + 1, mu, mttkrps[n])
        for n in range(model.order)
    ]
    w = compute_w(model, cache, damped, mu)
    b = _core_matrix(cache, mu, variant)
    F = _frontal_slices(cache, b @ w)
    candidate = flm_update(model, damped, F, cache, mu)
    if refine_steps:
        g = _gradient_from_mttkrps(model, cache, mttkrps)
        base = model.as_vector()
        delta = candidate.as_vector() - base
        for _ in range(refine_steps):
            resid = g - apply_damped_hessian(cache, model.factors, delta, mu)
            delta = delta + apply_damped_inverse(
                cache, model.factors, b, resid, mu
            )
        candidate = model_from_vector(base + delta, model.dims, model.rank)
    return candidate


def mu_init(cache: GramCache, tau: float) -> float:
    """Initial damping tau * max(1, max diag C^(N)).

    Assumes the unit-norm convention for modes 1..N-1, under which the stated
    maximum equals the largest diagonal entry of the approximate Hessian.
    """
    return float(tau * max(1.0, np.max(np.real(np.diag(cache.C[-1])))))


def nielsen_update(state: LmState, rho: float) -> LmState:
    """Nielsen gain-ratio damping control (classical multiplicative form)."""
    if rho > 0:
        mu = state.mu * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
        growth = 2.0
        accepted = True
    else:
        mu = state.mu * state.growth
        growth = 2.0 * state.growth
        accepted = False
    return LmState(mu, growth, state.err_history, state.iter, accepted)


def _gradient_from_mttkrps(model, cache, mttkrps) -> np.ndarray:
    blocks = []
    for n in range(model.order):
        e = mttkrps[n] - model.factors[n] @ cache.gamma_excl[n].T
        blocks.append(e.reshape(-1, order="F"))
    return np.concatenate(blocks)


def _gain_ratio(prev_sq, cand_sq, delta, g, mu) -> float:
    denom = np.real(np.vdot(delta, g + mu * delta))
    if abs(denom) < RHO_DENOM_GUARD:
        return -1.0
    return (prev_sq - cand_sq) / denom


def _init_model(y: DenseTensor, config: FitConfig, rng) -> KruskalModel:
    if config.init == "svd":
        return svd_init(y, config.rank, rng)
    if config.init == "random":
        return random_init(y.dims, config.rank, rng, y.scalar_kind)
    raise ValueError(f"unknown init {config.init!r}")


def _stop_on_tol(err_deltas, tol) -> bool:
    return len(err_deltas) >= 10 and all(d < tol for d in err_deltas[-10:])


def fit(y: DenseTensor, config: FitConfig) -> FitResult:
    """Decompose ``y`` with the configured algorithm.

    Stops when ten consecutive relative-error differences fall below
    ``config.tol``, the iteration budget runs out, or (LM family) the damping
    parameter overflows 1e30.
    """
    t0 = time.monotonic()
    if config.variant in ("als", "als-ls"):
        result = _fit_als(y, config)
    else:
        result = _fit_lm(y, config)
    result.time_ms = (time.monotonic() - t0) * 1e3
    return result


def _fit_als(y: DenseTensor, config: FitConfig) -> FitResult:
    rng = np.random.default_rng([config.seed, 0])
    model = _init_model(y, config, rng)
    trace = []
    deltas = []
    err = relative_error(y, model)
    history = None
    stop_reason = "max_iters"
    for t in range(1, config.max_iters + 1):
        prev = model
        if config.variant == "als-ls":
            model = als_line_search_step(y, model, history, t)
        else:
            model = als_step(y, model)
        history = prev
        new_err = relative_error(y, model)
        trace.append(IterRecord(t, new_err, 0.0, True))
        deltas.append(abs(err - new_err))
        err = new_err
        if _stop_on_tol(deltas, config.tol):
            stop_reason = "tol"
            break
    return FitResult(model, trace, stop_reason)


def _fit_lm(y: DenseTensor, config: FitConfig) -> FitResult:
    rng = np.random.default_rng([config.seed, 0])
    model = normalize_equal_energy(_init_model(y, config, rng))
    ynorm = y.norm()
    if ynorm == 0.0:
        raise ZeroDivisionError("cannot fit a zero tensor")

    cache = build_gram_cache(normalize_unit_modes(model))
    state = LmState(mu=mu_init(cache, config.tau))

    cache = build_gram_cache(model)
    mttkrps = [mttkrp(y, model, n) for n in range(1, model.order + 1)]
    err = relative_error(y, model)
    err_sq = (err * ynorm) ** 2

    trace = []
    deltas = []
    stop_reason = "max_iters"
    for t in range(1, config.max_iters + 1):
        try:
            if config.variant == "dgn-oracle":
                delta = dense_damped_solve(y, model, state.mu)
                candidate = model_from_vector(
                    model.as_vector() + delta, model.dims, model.rank
                )
            else:
                candidate = flm_step(
                    y, model, state.mu, config.variant, cache, mttkrps
                )
                delta = candidate.as_vector() - model.as_vector()
        except (np.linalg.LinAlgError, SingularKernelError) as exc:
            return FitResult(
                model, trace, f"error at iteration {t}: {exc}"
            )

        cand_err = relative_error(y, candidate)
        cand_sq = (cand_err * ynorm) ** 2
        g = _gradient_from_mttkrps(model, cache, mttkrps)
        rho = _gain_ratio(err_sq, cand_sq, delta, g, state.mu)
        state = nielsen_update(state, rho)
        state.iter = t

        if state.accepted and cand_err < err:
            model = normalize_equal_energy(candidate)
            cache = build_gram_cache(model)
            mttkrps = [
                mttkrp(y, model, n) for n in range(1, model.order + 1)
            ]
            deltas.append(abs(err - cand_err))
            err, err_sq = cand_err, cand_sq
            accepted = True
        else:
            state.accepted = False
            deltas.append(0.0)
            accepted = False

        trace.append(IterRecord(t, err, state.mu, accepted))
        state.err_history.append(err)

        if _stop_on_tol(deltas, config.tol):
            stop_reason = "tol"
            break
        if state.mu > MU_OVERFLOW:
            stop_reason = "mu_overflow"
            break
    return FitResult(model, trace, stop_reason)
