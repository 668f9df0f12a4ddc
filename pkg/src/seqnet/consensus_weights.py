"""Consensus weight matrices and their spectral diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .topology import Topology, laplacian

ROW_SUM_TOL = 1e-12
SYMMETRY_TOL = 1e-10


class WeightMatrixError(ValueError):
    """Raised when a weight matrix cannot drive the consensus detector."""


class ConvergenceError(RuntimeError):
    pass


def symmetric_eigenvalues(mat, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix, sorted descending.

    Cyclic Jacobi: every off-diagonal pair is annihilated once per sweep, and
    sweeps repeat until the off-diagonal Frobenius norm drops below ``tol``
    (relative to the matrix norm when that exceeds one).
    """
    a = np.array(mat, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    scale = max(1.0, float(np.linalg.norm(a)))

    def off_norm(x: np.ndarray) -> float:
        return float(np.linalg.norm(x - np.diag(np.diag(x))))

    for _ in range(max_sweeps + 1):
        if off_norm(a) < tol * scale:
            return np.sort(np.diag(a))[::-1].copy()
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-300:
                    a[p, q] = a[q, p] = 0.0
                    continue
                if abs(diff) > 1e18 * abs(apq):
                    # rotation angle ~ apq / diff: annihilate directly
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- R^T A R with R the (p, q) Givens rotation
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    raise ConvergenceError(f"Jacobi sweep did not converge in {max_sweeps} sweeps")


def averaging_matrix(k: int) -> np.ndarray:
    """J = (1/K) 1 1^T."""
    return np.full((k, k), 1.0 / k)


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: tuple[float, ...]
    sigma1: float
    sigma2: float
    condition1_ok: bool
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "eigenvalues": list(self.eigenvalues),
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "condition1_ok": self.condition1_ok,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class WeightMatrix:
    """A validated consensus matrix W.

    Attributes:
        w: K x K matrix, read-only.
        sigma2: second largest singular value of W.
        delta: step size of the equal-weight construction, None when supplied.
        report: full spectral report.
    """

    w: np.ndarray
    sigma2: float
    delta: float | None = None
    report: SpectralReport | None = field(default=None, compare=False)

    @property
    def n_sensors(self) -> int:
        return self.w.shape[0]


def _singular_values(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    symmetric = np.allclose(w, w.T, rtol=0.0, atol=SYMMETRY_TOL)
    if symmetric:
        eig = symmetric_eigenvalues(w)
        sv = np.sort(np.abs(eig))[::-1]
    else:
        eig = symmetric_eigenvalues(w.T @ w)
        sv = np.sqrt(np.clip(eig, 0.0, None))
    return eig, sv, symmetric


def validate_condition1(w) -> SpectralReport:
    """Check row sums, column sums and ``0 < sigma2 < 1``.

    Failures are reported in the returned structure rather than raised.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w.shape}")
    k = w.shape[0]
    notes: list[str] = []
    ones = np.ones(k)
    rows_ok = bool(np.max(np.abs(w @ ones - 1.0)) <= ROW_SUM_TOL * max(1, k))
    cols_ok = bool(np.max(np.abs(ones @ w - 1.0)) <= ROW_SUM_TOL * max(1, k))
    if not rows_ok:
        notes.append("row sums differ from 1")
    if not cols_ok:
        notes.append("column sums differ from 1")
    eig, sv, _ = _singular_values(w)
    sigma1 = float(sv[0])
    sigma2 = float(sv[1]) if k > 1 else 0.0
    if sigma2 < 1e-12:
        sigma2 = 0.0
    ok = rows_ok and cols_ok and sigma2 < 1.0
    if sigma2 >= 1.0:
        notes.append(f"sigma2 = {sigma2:.6g} is not below 1")
    elif sigma2 == 0.0:
        notes.append("sigma2 = 0: W equals the averaging matrix (boundary case, accepted)")
    return SpectralReport(
        eigenvalues=tuple(float(v) for v in eig),
        sigma1=sigma1,
        sigma2=sigma2,
        condition1_ok=ok,
        warnings=tuple(notes),
    )


def weight_matrix_from_array(w) -> WeightMatrix:
    """Wrap a user-supplied matrix, refusing it if Condition 1 fails."""
    arr = np.array(w, dtype=float)
    report = validate_condition1(arr)
    if not report.condition1_ok:
        raise WeightMatrixError("; ".join(report.warnings) or "invalid weight matrix")
    arr.setflags(write=False)
    return WeightMatrix(w=arr, sigma2=report.sigma2, delta=None, report=report)


def equal_weight_matrix(t: Topology) -> WeightMatrix:
    """W = I - delta L with delta = 2 / (lambda_1(L) + lambda_{K-1}(L)).

    This delta minimizes sigma2(W) = max(1 - delta lambda_{K-1}, delta lambda_1 - 1).
    """
    k = t.n_sensors
    if k < 2:
        raise WeightMatrixError("equal-weight construction needs at least two sensors")
    lam = symmetric_eigenvalues(laplacian(t))
    lam_max, lam_fiedler = float(lam[0]), float(lam[k - 2])
    if lam_fiedler <= 1e-12:
        raise WeightMatrixError("Laplacian has a repeated zero eigenvalue (disconnected graph)")
    delta = 2.0 / (lam_max + lam_fiedler)
    w = np.eye(k) - delta * laplacian(t)
    sigma2 = max(1.0 - delta * lam_fiedler, delta * lam_max - 1.0)
    if sigma2 < 1e-12:
        sigma2 = 0.0
    eig = np.sort(1.0 - delta * lam)[::-1]
    notes: tuple[str, ...] = ()
    if sigma2 == 0.0:
        notes = ("sigma2 = 0: W equals the averaging matrix (boundary case, accepted)",)
        warnings.warn(notes[0], stacklevel=2)
    report = SpectralReport(
        eigenvalues=tuple(float(v) for v in eig),
        sigma1=float(np.max(np.abs(eig))),
        sigma2=sigma2,
        condition1_ok=sigma2 < 1.0,
        warnings=notes,
    )
    w.setflags(write=False)
    return WeightMatrix(w=w, sigma2=sigma2, delta=delta, report=report)


def as_weight_matrix(obj) -> WeightMatrix:
    """Accept a WeightMatrix, a Topology (equal weights) or a raw array."""
    if isinstance(obj, WeightMatrix):
        return obj
    if isinstance(obj, Topology):
        if obj.n_sensors == 1:
            return weight_matrix_from_array(np.ones((1, 1)))
        return equal_weight_matrix(obj)
    return weight_matrix_from_array(obj)


def matrix_power(w, t: int) -> np.ndarray:
    """W**t by repeated squaring; W**0 = I."""
    w = np.asarray(w, dtype=float)
    if t < 0:
        raise ValueError("power must be non-negative")
    result = np.eye(w.shape[0])
    base = w.copy()
    while t:
        if t & 1:
            result = result @ base
        t >>= 1
        if t:
            base = base @ base
    return result


def delta_matrix(w, t: int, tol: float = 1e-10) -> np.ndarray:
    """Delta_t = W**t - J, cross-checked against (W - J)**t."""
    w = np.asarray(w, dtype=float)
    if t < 1:
        raise ValueError("t must be positive")
    j = averaging_matrix(w.shape[0])
    direct = matrix_power(w, t) - j
    via_difference = matrix_power(w - j, t)
    gap = float(np.max(np.abs(direct - via_difference)))
    if gap > tol:
        raise ArithmeticError(f"W^t - J and (W - J)^t disagree by {gap:.3g}")
    return direct


def default_t0(sigma2: float, q: int, floor: float = 1e-3) -> int:
    """Smallest t with sigma2**(q t) below ``floor``."""
    if sigma2 <= 0.0:
        return 1
    if sigma2 >= 1.0:
        raise WeightMatrixError("sigma2 must be below 1")
    return max(1, math.ceil(math.log(floor) / (q * math.log(sigma2)) - 1e-12))
