"""Dense tensor storage and the multilinear kernels used throughout the package.

Tensors are stored column-major (first index varies fastest), so
``vectorize(t)`` equals ``vectorize(unfold(t, 1))`` by construction.
Mode indices in the public API are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

REAL = "real"
COMPLEX = "complex"

_DTYPE_OF_KIND = {REAL: np.float64, COMPLEX: np.complex128}


class ScalarKindError(TypeError):
    """Raised when real and complex values are mixed in one operation."""


def kind_of(arr: np.ndarray) -> str:
    return COMPLEX if np.iscomplexobj(arr) else REAL


def require_same_kind(*arrays) -> str:
    kinds = {kind_of(np.asarray(a)) for a in arrays}
    if len(kinds) > 1:
        raise ScalarKindError("mixed real/complex operands are not supported")
    return kinds.pop()


@dataclass(frozen=True)
class DenseTensor:
    """N-way dense array of float64 or complex128 scalars.

    ``data`` is an N-dimensional numpy array; the flat storage convention is
    Fortran order (index along mode 1 varies fastest).
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asfortranarray(self.data)
        if arr.ndim < 1:
            arr = arr.reshape(1)
        if arr.dtype not in (np.float64, np.complex128):
            arr = arr.astype(
                np.complex128 if np.iscomplexobj(arr) else np.float64
            )
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def scalar_kind(self) -> str:
        return kind_of(self.data)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


def _check_mode(t_order: int, n: int) -> None:
    if not 1 <= n <= t_order:
        raise ValueError(f"mode {n} out of range for order-{t_order} tensor")


def unfold(t: DenseTensor, n: int) -> np.ndarray:
    """Mode-n unfolding: I_n x (J / I_n), remaining modes in ascending order."""
    _check_mode(t.order, n)
    return np.moveaxis(t.data, n - 1, 0).reshape(
        (t.dims[n - 1], -1), order="F"
    )


def fold(mat: np.ndarray, n: int, dims) -> DenseTensor:
    """Inverse of :func:`unfold` for the given target dimensions."""
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), n)
    shape = (dims[n - 1],) + dims[: n - 1] + dims[n:]
    arr = np.asarray(mat).reshape(shape, order="F")
    return DenseTensor(np.moveaxis(arr, 0, n - 1))


def vectorize(t: DenseTensor) -> np.ndarray:
    """vec(Y): column-major flattening; equals unfold(t, 1) read column-major."""
    return t.data.reshape(-1, order="F")


def tensor_from_vec(vec: np.ndarray, dims) -> DenseTensor:
    return DenseTensor(np.asarray(vec).reshape(tuple(dims), order="F"))


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product of I x R and K x R matrices."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"column count mismatch: {a.shape[1]} != {b.shape[1]}"
        )
    i, r = a.shape
    k = b.shape[0]
    return (a[:, None, :] * b[None, :, :]).reshape(i * k, r)


def khatri_rao_excl(factors, n: int) -> np.ndarray:
    """Khatri-Rao product over modes N..1 excluding mode n (descending order).

    With the column-major storage convention this is exactly the matrix W for
    which the mode-n unfolding of a Kruskal tensor is A^(n) W^T.
    """
    n_modes = len(factors)
    _check_mode(n_modes, n)
    ranks = {f.shape[1] for f in factors}
    if len(ranks) > 1:
        raise ValueError("factors disagree on column count")
    rest = [factors[k] for k in reversed(range(n_modes)) if k != n - 1]
    return reduce(khatri_rao, rest)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def elementwise_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if np.any(b == 0):
        raise ZeroDivisionError("division by zero entry")
    return a / b


def commutation(i: int, j: int) -> np.ndarray:
    """Permutation matrix P with P vec(X^T) = vec(X) for every I x J matrix X."""
    if i < 1 or j < 1:
        raise ValueError("commutation dimensions must be positive")
    p = np.zeros((i * j, i * j))
    rows = np.arange(i * j)
    # row index r = a + i*b addresses vec(X)[a, b]; source is vec(X^T)[b + j*a].
    a, b = rows % i, rows // i
    p[rows, b + j * a] = 1.0
    return p


def mode_commutation(dims, n: int) -> np.ndarray:
    """Permutation Q_n with Q_n vec(unfold(Y, n)) = vec(Y) for all Y of ``dims``."""
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), n)
    lead = int(np.prod(dims[: n - 1], dtype=np.int64))
    trail = int(np.prod(dims[n:], dtype=np.int64))
    return np.kron(np.eye(trail), commutation(lead, dims[n - 1]))
