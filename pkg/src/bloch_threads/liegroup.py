"""Runge-Kutta-Munthe-Kaas stepping on the unit sphere.

A tangent field ``m(r, n)`` on S^2 is written as ``m = omega x n`` with
``omega = n x m``; each stage works in so(3) (identified with R^3) and the
update is the rotation ``exp(u) n``, so |n| = 1 holds up to roundoff.

All functions accept stacked vectors of shape (..., 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np

Field = Callable[[float, np.ndarray], np.ndarray]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis; much cheaper than np.cross for 3-vectors."""
    if a.ndim == 1 and b.ndim == 1:
        a0, a1, a2 = a.tolist()
        b0, b1, b2 = b.tolist()
        return np.array((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def rotate(u: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Apply exp([u]_x) to n (Rodrigues)."""
    if u.ndim == 1:
        theta = math.sqrt(u @ u)
        if theta < 1e-8:
            s, c = 1 - theta**2 / 6, 0.5 - theta**2 / 24
        else:
            s, c = math.sin(theta) / theta, (1 - math.cos(theta)) / theta**2
        uxn = cross(u, n)
        return n + s * uxn + c * cross(u, uxn)
    theta = np.linalg.norm(u, axis=-1, keepdims=True)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    # series for sin(t)/t and (1 - cos t)/t^2 below 1e-8
    s = np.where(small, 1 - theta**2 / 6, np.sin(theta) / safe)
    c = np.where(small, 0.5 - theta**2 / 24, (1 - np.cos(theta)) / safe**2)
    uxn = cross(u, n)
    return n + s * uxn + c * cross(u, uxn)


def dexpinv(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inverse derivative of the so(3) exponential, closed form."""
    if u.ndim == 1:
        theta = math.sqrt(u @ u)
        if theta < 1e-4:
            coef = 1 / 12 + theta**2 / 720
        else:
            coef = (1 - theta / 2 / math.tan(theta / 2)) / theta**2
        uxv = cross(u, v)
        return v - 0.5 * uxv + coef * cross(u, uxv)
    theta = np.linalg.norm(u, axis=-1, keepdims=True)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    half = safe / 2
    coef = np.where(small, 1 / 12 + theta**2 / 720, (1 - half / np.tan(half)) / safe**2)
    uxv = cross(u, v)
    return v - 0.5 * uxv + coef * cross(u, uxv)


def rkmk4_step(field: Field, r: float, n: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step in the Munthe-Kaas formulation."""

    def omega(rr, nn):
        return cross(nn, field(rr, nn))

    k1 = omega(r, n)
    u = 0.5 * h * k1
    k2 = dexpinv(u, omega(r + h / 2, rotate(u, n)))
    u = 0.5 * h * k2
    k3 = dexpinv(u, omega(r + h / 2, rotate(u, n)))
    u = h * k3
    k4 = dexpinv(u, omega(r + h, rotate(u, n)))
    return rotate(h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), n)


@dataclass
class MarchResult:
    r: np.ndarray
    n: np.ndarray
    termination: str
    error: Exception | None = None
    info: dict = field(default_factory=dict)


def march(
    field: Field,
    r0: float,
    n0: np.ndarray,
    r_end: float,
    dr: float,
    *,
    check: Callable[[float, np.ndarray], str | None] | None = None,
    tol: float | None = None,
    min_step: float = 1e-9,
    catch: tuple[type[Exception], ...] = (),
) -> MarchResult:
    """Integrate dn/dr = field(r, n) from r0 toward r_end on a grid of spacing dr.

    With ``tol`` set, each step is checked by step doubling and shrunk until the
    two estimates of n agree to ``tol``; accepted steps may grow again (at most
    doubling) and never exceed ``dr``, and every grid point is hit exactly.  ``check(r, n)`` may return a termination reason, in which
    case the offending sample is not kept.  Exceptions in ``catch`` raised by the
    field end the march with ``termination = type(exc).__name__``.
    """
    direction = 1.0 if r_end >= r0 else -1.0
    n = np.array(n0, dtype=float)
    r = float(r0)
    rs = [r]
    ns = [n.copy()]
    nominal = abs(dr)
    span = abs(r_end - r0)
    n_grid = max(1, int(round(span / nominal)))
    grid = r0 + direction * np.minimum(np.arange(1, n_grid + 1) * nominal, span)
    grid[-1] = r_end
    termination = "reached_end"
    error = None
    k = 0
    h = nominal
    try:
        while k < len(grid):
            target = grid[k]
            gap = abs(target - r)
            # snap to the grid point when rounding leaves it a hair beyond one step
            step = gap if gap <= h * (1 + 1e-9) else h
            if tol is None:
                n_new = rkmk4_step(field, r, n, direction * step)
            else:
                while True:
                    full = rkmk4_step(field, r, n, direction * step)
                    mid = rkmk4_step(field, r, n, direction * step / 2)
                    half = rkmk4_step(field, r + direction * step / 2, mid, direction * step / 2)
                    err = np.linalg.norm(full - half)
                    if np.isfinite(err) and err <= tol:
                        n_new = half
                        break
                    # shrink using the fifth-order local error model, at least by half
                    shrink = 0.9 * (tol / err) ** 0.2 if np.isfinite(err) and err > 0 else 0.5
                    step *= min(0.5, shrink)
                    if step < min_step:
                        termination = "step_underflow"
                        raise StopIteration
            r_new = target if step >= abs(target - r) else r + direction * step
            if check is not None:
                reason = check(r_new, n_new)
                if reason is not None:
                    termination = reason
                    break
            r, n = r_new, n_new
            rs.append(r)
            ns.append(n.copy())
            if r == target:
                k += 1
                h = nominal
            elif tol is None:
                h = step
            else:
                grow = 0.9 * (tol / err) ** 0.2 if err > 0 else 2.0
                h = min(nominal, step * min(2.0, max(1.0, grow)))
    except StopIteration:
        pass
    except catch as exc:
        termination = type(exc).__name__
        error = exc
    return MarchResult(np.array(rs), np.array(ns), termination, error)
