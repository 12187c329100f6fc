"""Lyapunov machinery: closed-form Jacobians, the descent matrix, checks.

All matrices here are small and dense. Linear systems go through Gaussian
elimination with partial pivoting so that a near-singular congested-link
combination is reported by name; eigenvalues of symmetric matrices use
cyclic Jacobi rotations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryCrossingError,
    DegenerateDelayError,
    ShapeError,
    SingularMatrixError,
    SingularRateError,
)

_PIVOT_EPS = 1e-12
_JACOBI_OFF_EPS = 1e-12


def lyapunov(f_values):
    """Half the squared norm of the error signal."""
    f = np.asarray(f_values, dtype=np.float64)
    return 0.5 * float(np.sum(f * f))


def gaussian_solve(matrix, rhs, labels=None):
    """Solve ``matrix @ X = rhs`` by elimination with partial pivoting.

    Raises :class:`SingularMatrixError` naming ``labels`` when a pivot falls
    below 1e-12.
    """
    m = np.asarray(matrix, dtype=np.float64).copy()
    r = np.asarray(rhs, dtype=np.float64).copy()
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError("matrix must be square")
    single = r.ndim == 1
    if single:
        r = r[:, None]
    n = m.shape[0]
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(m[col:, col])))
        if abs(m[pivot_row, col]) < _PIVOT_EPS:
            names = labels if labels is not None else tuple(range(n))
            raise SingularMatrixError(
                f"singular system: pivot below {_PIVOT_EPS} for links {tuple(names)}",
                links=names,
            )
        if pivot_row != col:
            m[[col, pivot_row]] = m[[pivot_row, col]]
            r[[col, pivot_row]] = r[[pivot_row, col]]
        for row in range(col + 1, n):
            factor = m[row, col] / m[col, col]
            if factor != 0.0:
                m[row, col:] -= factor * m[col, col:]
                r[row] -= factor * r[col]
    out = np.zeros_like(r)
    for row in range(n - 1, -1, -1):
        out[row] = (r[row] - m[row, row + 1 :] @ out[row + 1 :]) / m[row, row]
    return out[:, 0] if single else out


def _as_diag_vector(d, n, name):
    v = np.asarray(d, dtype=np.float64)
    if v.ndim == 2:
        v = np.diag(v)
    if v.shape != (n,):
        raise ShapeError(f"{name} must have length {n}")
    return v


def _inner_solve(a_b, x, dtot, rhs, labels):
    """Solve (A_B^T diag(x/D) A_B) @ out = rhs."""
    weighted = a_b * (x / dtot)[:, None]
    inner = a_b.T @ weighted
    return gaussian_solve(inner, rhs, labels=labels)


def jacobian_x(a_b, x, dtot, labels=None):
    """Sensitivity of equilibrium rates to windows over a fixed congested set.

    ``a_b`` has one column per congested link. With no congested links the
    result is ``diag(1/D)``.
    """
    a_b = np.asarray(a_b, dtype=np.float64)
    n = a_b.shape[0]
    x = _as_diag_vector(x, n, "x")
    dtot = _as_diag_vector(dtot, n, "D")
    if a_b.shape[1] == 0:
        return np.diag(1.0 / dtot)
    m1 = _inner_solve(a_b, x, dtot, a_b.T * (1.0 / dtot)[None, :], labels)
    return (np.eye(n) - (x[:, None] * a_b) @ m1) / dtot[:, None]


def jacobian_q(a_b, x, dtot, labels=None):
    """Sensitivity of congested-link queueing delays to windows."""
    a_b = np.asarray(a_b, dtype=np.float64)
    n = a_b.shape[0]
    x = _as_diag_vector(x, n, "x")
    dtot = _as_diag_vector(dtot, n, "D")
    if a_b.shape[1] == 0:
        return np.zeros((0, n))
    return _inner_solve(a_b, x, dtot, a_b.T * (1.0 / dtot)[None, :], labels)


def jacobian_f(a_b, x, dtot, d_trans, uprime, labels=None):
    """Closed-form sensitivity of the error signal to windows."""
    a_b = np.asarray(a_b, dtype=np.float64)
    n = a_b.shape[0]
    x = _as_diag_vector(x, n, "x")
    dtot = _as_diag_vector(dtot, n, "D")
    d_trans = _as_diag_vector(d_trans, n, "d_trans")
    uprime = _as_diag_vector(uprime, n, "uprime")
    if a_b.shape[1] == 0:
        return np.zeros((n, n))
    m1 = _inner_solve(a_b, x, dtot, a_b.T * (1.0 / dtot)[None, :], labels)
    pref = (d_trans + uprime) / dtot**2
    return pref[:, None] * (a_b @ m1)


def q_matrix(d_trans, uprime, dtot, x):
    """Diagonal descent matrix of the Lyapunov derivative.

    Entry ``i`` is ``(d_trans_i + U'_i) * d_trans_i / (x_i * D_i^3)``.
    """
    d_trans = np.asarray(d_trans, dtype=np.float64)
    n = d_trans.shape[0]
    uprime = _as_diag_vector(uprime, n, "uprime")
    dtot = _as_diag_vector(dtot, n, "D")
    x = _as_diag_vector(x, n, "x")
    if np.any(x == 0):
        raise SingularRateError("q_matrix requires nonzero rates")
    if np.any(dtot <= 0):
        raise DegenerateDelayError("q_matrix requires positive delays")
    diag = (d_trans + uprime) * d_trans / (x * dtot**3)
    return np.diag(diag)


def _jacobi_eigenvalues(matrix):
    m = matrix.copy()
    n = m.shape[0]
    for _sweep in range(100):
        off = np.sqrt(np.sum(np.tril(m, -1) ** 2))
        if off < _JACOBI_OFF_EPS:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(m[p, q]) < _JACOBI_OFF_EPS / (n * n):
                    continue
                theta = 0.5 * np.arctan2(2.0 * m[p, q], m[q, q] - m[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                m = rot.T @ m @ rot
    return np.diag(m).copy()


def is_positive_definite(matrix):
    """Verdict and eigenvalues for a diagonal or symmetric matrix."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError("matrix must be square")
    off = m - np.diag(np.diag(m))
    if np.all(off == 0.0):
        eigenvalues = np.diag(m).copy()
    else:
        if not np.allclose(m, m.T, atol=1e-10):
            raise ShapeError("matrix must be symmetric or diagonal")
        eigenvalues = _jacobi_eigenvalues(m)
    return bool(np.all(eigenvalues > 0.0)), eigenvalues


def fd_jacobian(func, w, eps=1e-6, set_probe=None):
    """Central-difference Jacobian with per-column steps ``eps*max(1, |w_i|)``.

    ``set_probe(w)`` (when given) must return the congested set; a change of
    set anywhere on the stencil raises :class:`BoundaryCrossingError`.
    """
    w = np.asarray(w, dtype=np.float64)
    base_set = set_probe(w) if set_probe is not None else None
    f0 = np.atleast_1d(np.asarray(func(w), dtype=np.float64))
    jac = np.zeros((f0.shape[0], w.shape[0]))
    for i in range(w.shape[0]):
        step = eps * max(1.0, abs(w[i]))
        wp = w.copy()
        wp[i] += step
        wm = w.copy()
        wm[i] -= step
        if base_set is not None:
            if set_probe(wp) != base_set or set_probe(wm) != base_set:
                raise BoundaryCrossingError(
                    f"congested set changes within the stencil of component {i}"
                )
        fp = np.atleast_1d(np.asarray(func(wp), dtype=np.float64))
        fm = np.atleast_1d(np.asarray(func(wm), dtype=np.float64))
        jac[:, i] = (fp - fm) / (2.0 * step)
    return jac


@dataclass(frozen=True)
class StabilityReport:
    """Numerical realization of the descent certificate at one state."""

    v: float
    f: np.ndarray
    j_x: np.ndarray
    j_q: np.ndarray
    j_f: np.ndarray
    q: np.ndarray
    eigenvalues: np.ndarray
    positive_definite: bool
    dv_dt_estimate: float
    fd_max_rel_error: float | None
    boundary_flag: bool
    congested_links: tuple

    def to_dict(self, include_matrices=True):
        out = {
            "V": self.v,
            "f": self.f.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "positive_definite": self.positive_definite,
            "dv_dt_estimate": self.dv_dt_estimate,
            "fd_max_rel_error": self.fd_max_rel_error,
            "boundary_flag": self.boundary_flag,
            "congested_links": [list(l) for l in self.congested_links],
        }
        if include_matrices:
            out["J_x"] = self.j_x.tolist()
            out["J_q"] = self.j_q.tolist()
            out["J_f"] = self.j_f.tolist()
            out["Q"] = self.q.tolist()
        return out

    def to_json(self, include_matrices=True, **kwargs):
        return json.dumps(self.to_dict(include_matrices=include_matrices), **kwargs)
