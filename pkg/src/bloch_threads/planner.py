"""Control Hamiltonians that steer the state along a thread.

With ``dn_hat/dt = b_perp/r + h x n_hat + (A n_hat)_perp`` and the wish
``dn_hat/dt = m f``, the transverse part of ``h`` is fixed:
``h = c n_hat + n_hat x (m f - b/r - A n_hat)``; the component ``c`` along
n_hat is free because it does not move the state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import evolve_density, hamiltonian_matrix
from .errors import FIsZeroOnThread
from .liegroup import cross
from .system import LindbladSystem, bloch_to_density, bloch_vector, system_to_operators
from .threads import Thread, _thread_field

CProfile = Callable[[float], float]


def hamiltonian_for(system: LindbladSystem, r: float, n_hat, m, c: float = 0.0) -> np.ndarray:
    """Hamiltonian vector h (H = h.sigma/2) realising d n_hat / dr = m at (r, n_hat)."""
    if r <= 0:
        raise ValueError("hamiltonian_for needs r > 0; the b/r term has only a directional limit at the origin")
    n_hat = np.asarray(n_hat, dtype=float)
    m = np.asarray(m, dtype=float)
    f = float(system.radial(n_hat, r))
    w = m * f - system.b / r - system.A @ n_hat
    return c * n_hat + cross(n_hat, w)


@dataclass(eq=False)
class PlanSchedule:
    """Hamiltonians along a thread, ordered in the direction of travel.

    ``direction`` is +1 for outward plans (f > 0) and -1 for inward ones;
    ``t`` is the elapsed time from the first sample; ``crossing`` is the radius
    where f vanished and the plan was cut, if any.
    """

    thread: Thread
    direction: int
    r: np.ndarray
    t: np.ndarray
    n_hat: np.ndarray
    h: np.ndarray
    crossing: float | None = None

    def h_of_r(self) -> CubicSpline:
        order = np.argsort(self.r)
        return CubicSpline(self.r[order], self.h[order], axis=0)


def _c_value(c, r):
    return float(c(r)) if callable(c) else float(c)


def plan_trajectory(
    system: LindbladSystem,
    thread: Thread,
    c: float | CProfile = 0.0,
    *,
    r_min: float = 1e-6,
    strict: bool = False,
) -> PlanSchedule:
    """Schedule of (r, t, h) moving the state along ``thread``.

    Travel is outward where f > 0 at the start of the thread and inward where
    f < 0.  If f changes sign, the plan is cut at the crossing (where the
    dwell time diverges) and the crossing radius is recorded; with ``strict``
    a FIsZeroOnThread is raised instead.
    """
    keep = thread.r >= r_min
    r_all = thread.r[keep]
    n_all = thread.n_hat[keep]
    if r_all.size < 2:
        raise ValueError("thread has fewer than two samples with r > r_min")
    order = np.argsort(r_all)
    r_all, n_all = r_all[order], n_all[order]
    f_all = system.radial(n_all, r_all)
    if f_all[0] == 0:
        raise FIsZeroOnThread(f"f vanishes at the start of the thread (r={r_all[0]})", float(r_all[0]))
    direction = 1 if f_all[0] > 0 else -1
    bad = np.flatnonzero(np.sign(f_all) != direction)
    crossing = None
    if bad.size:
        cut = int(bad[0])
        lo, hi = r_all[cut - 1], r_all[cut]
        fl, fh = f_all[cut - 1], f_all[cut]
        crossing = float(lo - fl * (hi - lo) / (fh - fl)) if fh != fl else float(lo)
        if strict:
            raise FIsZeroOnThread(f"f changes sign on the thread at r~{crossing:.6f}", crossing)
        if cut < 2:
            raise FIsZeroOnThread(f"no plannable segment: f changes sign at r~{crossing:.6f}", crossing)
        r_all, n_all, f_all = r_all[:cut], n_all[:cut], f_all[:cut]

    field = _thread_field(system) if thread.kind != "chimney-generator" else None
    if field is not None:
        ms = np.array([field(r, n) for r, n in zip(r_all, n_all)])
    else:
        dn = CubicSpline(r_all, n_all, axis=0)(r_all, 1)
        ms = dn - np.sum(dn * n_all, axis=1, keepdims=True) * n_all
    h = np.array([hamiltonian_for(system, r, n, m, _c_value(c, r)) for r, n, m in zip(r_all, n_all, ms)])

    # elapsed time t = integral of dr / f, measured along the direction of travel
    tau = CubicSpline(r_all, 1.0 / f_all).antiderivative()(r_all)
    if direction > 0:
        t = tau - tau[0]
    else:
        r_all, n_all, h, tau = r_all[::-1], n_all[::-1], h[::-1], tau[::-1]
        t = tau - tau[0]
    return PlanSchedule(thread, direction, r_all, t, n_all, h, crossing)


def angle_between(a, b) -> np.ndarray:
    """Angle between unit vectors, accurate for small angles."""
    return np.arctan2(np.linalg.norm(cross(np.asarray(a), np.asarray(b)), axis=-1), np.sum(a * b, axis=-1))


@dataclass(eq=False)
class Replay:
    t: np.ndarray
    r: np.ndarray
    n_hat: np.ndarray
    angular_error: np.ndarray


def replay_plan(
    system: LindbladSystem,
    schedule: PlanSchedule,
    r_start: float,
    r_end: float,
    *,
    dt: float | None = None,
    mode: str = "schedule",
    c: float | CProfile = 0.0,
    record_every: int = 10,
) -> Replay:
    """Re-simulate a plan with the 2x2 density-matrix Lindblad equation.

    ``mode="schedule"`` applies the planned h looked up at the measured radius;
    ``mode="feedback"`` recomputes h from the measured (r, n_hat) and the
    thread feedback.  The state starts on the thread at ``r_start`` and the
    run stops once ``r_end`` is passed.  Angular errors are measured against
    the thread at the same radius.
    """
    ops = system_to_operators(system)
    thread = schedule.thread
    if dt is None:
        dt = 1e-3 / max(1.0, system.trace)
    n0 = thread.interpolate(r_start)
    rho0 = bloch_to_density(r_start * n0)
    sign = schedule.direction
    if mode == "schedule":
        h_spline = schedule.h_of_r()
        lo, hi = schedule.r.min(), schedule.r.max()

        def hamiltonian(t, rho):
            r = float(np.linalg.norm(bloch_vector(rho)))
            return hamiltonian_matrix(h_spline(min(max(r, lo), hi)))

    elif mode == "feedback":
        field = _thread_field(system)

        def hamiltonian(t, rho):
            n = bloch_vector(rho)
            r = float(np.linalg.norm(n))
            n_hat = n / r
            return hamiltonian_matrix(hamiltonian_for(system, r, n_hat, field(r, n_hat), _c_value(c, r)))

    else:
        raise ValueError(f"unknown replay mode {mode!r}")

    def stop(t, rho):
        r = float(np.linalg.norm(bloch_vector(rho)))
        return (r - r_end) * sign >= 0

    times, states = evolve_density(ops, hamiltonian, rho0, dt, stop=stop, record_every=record_every)
    r = np.linalg.norm(states, axis=1)
    n_hat = states / r[:, None]
    inside = (r - min(r_start, r_end) >= 0) & (max(r_start, r_end) - r >= 0)
    ref = thread.interpolate(np.clip(r, thread.r.min(), thread.r.max()))
    err = np.where(inside, angle_between(n_hat, ref), np.nan)
    return Replay(times, r, n_hat, err)
