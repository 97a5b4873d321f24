"""Dense float64 arrays and the linear algebra the rest of the package needs.

Tensors are plain ``numpy.ndarray`` values in float64, C-contiguous
(row-major), validated by :func:`tensor`.  Everything downstream treats
them as immutable: operations return fresh arrays and never write to
their inputs.

The symmetric eigensolver is a cyclic Jacobi iteration.  Rotations are
scheduled in round-robin rounds of pairwise-disjoint index pairs; the
rotations inside one round commute, so a whole round can be applied with
vectorized updates while remaining exactly equivalent to the sequential
sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError

SYMMETRY_TOL = 1e-9
DEFAULT_OFFDIAG_TOL = 1e-10
MAX_SWEEPS = 100


def tensor(data, shape=None) -> np.ndarray:
    """Build a float64 row-major tensor, validating the shape contract.

    Rejects rank-0 values and any zero-length extent.  Always copies, so
    the result never aliases caller memory.
    """
    arr = np.array(data, dtype=np.float64, order="C")
    if shape is not None:
        arr = arr.reshape(shape)
    if arr.ndim < 1:
        raise ShapeError("tensors must have rank >= 1, got a scalar")
    if arr.size == 0:
        raise ShapeError(f"zero-size tensor rejected: shape {arr.shape}")
    return arr


def check_tensor(arr: np.ndarray, rank: int | None = None, name: str = "tensor") -> np.ndarray:
    """Validate an existing array against the tensor contract."""
    if not isinstance(arr, np.ndarray):
        raise ShapeError(f"{name} must be an ndarray, got {type(arr).__name__}")
    if arr.ndim < 1 or arr.size == 0:
        raise ShapeError(f"{name} has invalid shape {arr.shape}")
    if rank is not None and arr.ndim != rank:
        raise ShapeError(f"{name} must have rank {rank}, got shape {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two rank-2 tensors."""
    check_tensor(a, rank=2, name="left operand")
    check_tensor(b, rank=2, name="right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    """Transposed copy of a rank-2 tensor."""
    check_tensor(a, rank=2, name="operand")
    return np.ascontiguousarray(a.T)


@dataclass(frozen=True)
class EighResult:
    """Eigendecomposition of a symmetric matrix.

    ``eigenvalues`` are sorted descending; column ``i`` of
    ``eigenvectors`` belongs to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _round_robin_rounds(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Round-robin schedule covering every index pair exactly once.

    Returns one (p, q) pair-array per round; pairs within a round are
    disjoint.  Odd n gets a dummy slot that is dropped from its round.
    """
    m = n if n % 2 == 0 else n + 1
    slots = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = slots[i], slots[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.asarray(p), np.asarray(q)))
        # rotate all slots but the first
        slots = [slots[0]] + [slots[-1]] + slots[1:-1]
    return rounds


def _max_offdiag(a: np.ndarray) -> float:
    off = np.abs(a).copy()
    np.fill_diagonal(off, 0.0)
    return float(off.max())


def eigh_symmetric(a: np.ndarray, tol: float = DEFAULT_OFFDIAG_TOL) -> EighResult:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps run until every off-diagonal magnitude drops below ``tol``
    (absolute), up to a cap of 100 sweeps.
    """
    check_tensor(a, rank=2, name="matrix")
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeError(f"expected a square matrix, got {a.shape}")
    if _max_asymmetry(a) > SYMMETRY_TOL:
        raise ShapeError(
            f"matrix is not symmetric within {SYMMETRY_TOL:g} per entry "
            f"(max deviation {_max_asymmetry(a):.3e})"
        )
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    work = (np.asarray(a, dtype=np.float64) + np.asarray(a, dtype=np.float64).T) / 2.0
    vecs_t = np.eye(n)  # holds V^T so the accumulation is a row update too
    if n > 1:
        rounds = _round_robin_rounds(n)
        for _ in range(MAX_SWEEPS):
            if _max_offdiag(work) < tol:
                break
            for p, q in rounds:
                _rotate_pairs(work, vecs_t, p, q)
        else:
            raise ConvergenceError(
                f"Jacobi did not reach off-diagonal tolerance {tol:g} "
                f"within {MAX_SWEEPS} sweeps (n={n})"
            )

    vals = np.diagonal(work).copy()
    order = np.argsort(-vals, kind="stable")
    return EighResult(eigenvalues=vals[order], eigenvectors=np.ascontiguousarray(vecs_t[order].T))


def _max_asymmetry(a: np.ndarray) -> float:
    return float(np.abs(a - a.T).max())


def _apply_left_rotations(m, p, q, c, s):
    """In-place m <- J^T m for the block rotation J built from (p, q, c, s)."""
    rows_p = m[p, :]
    rows_q = m[q, :]
    m[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
    m[q, :] = s[:, None] * rows_p + c[:, None] * rows_q


def _rotate_pairs(a: np.ndarray, vt: np.ndarray, p: np.ndarray, q: np.ndarray) -> None:
    """Apply one round of disjoint Jacobi rotations in place.

    Angles follow the symmetric Schur 2x2 solve; each rotation zeroes
    a[p_i, q_i].  Disjointness makes the batched update exactly equal to
    applying the rotations one by one.  The two-sided update J^T a J is
    computed as two row updates around a transpose, keeping every memory
    access row-contiguous (column gathers are an order of magnitude
    slower at ZCA-sized matrices).
    """
    apq = a[p, q]
    app = a[p, p]
    aqq = a[q, q]

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tau = (aqq - app) / (2.0 * apq)
        t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
        t = np.where(tau == 0.0, 1.0, t)  # equal diagonal: 45-degree rotation
        t = np.where(np.isfinite(t), t, 0.0)
        t = np.where(apq == 0.0, 0.0, t)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c

    _apply_left_rotations(a, p, q, c, s)   # a <- J^T a
    a[:] = a.T.copy()                      # a <- (J^T a)^T, so right mult is a row op
    _apply_left_rotations(a, p, q, c, s)   # a <- J^T a^T J^T^T = J^T (original) J

    # the rotation annihilates these entries analytically
    a[p, q] = 0.0
    a[q, p] = 0.0

    _apply_left_rotations(vt, p, q, c, s)  # V^T accumulates rotations on the left
