"""Threads of critical points continued in r by feedback.

Along a curve of critical points ``b + 2 r A n_hat = C n_hat`` the direction
derivative ``m = d n_hat / dr`` must satisfy ``2 A n_hat + Lambda m = k n_hat``
with ``Lambda = 2 r A - C``; projecting on n_hat fixes ``k``.  Main threads
start at ``(0, +-b_hat)``; alternate threads are seeded next to tangency
points found by the critical-point oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .critical import (
    AffineCriticalSet,
    critical_points_at,
    special_case_critical_sets,
    tangency_points,
)
from .errors import (
    FeedbackError,
    KDenominatorVanished,
    SeedMatchingError,
    SingularLambda,
    UnresolvableSpecialCase,
)
from .liegroup import march
from .system import LindbladSystem

log = logging.getLogger(__name__)

DEFAULT_DR = 1e-3
ORTHOGONAL_TOL = 1e-10
K_DENOMINATOR_TOL = 1e-12
ADAPTIVE_TOL = 1e-11

TERMINATIONS = {
    "reached_end": "reached_r1",
    "SingularLambda": "singular_lambda_unresolved",
    "UnresolvableSpecialCase": "singular_lambda_unresolved",
    "KDenominatorVanished": "k_denominator_vanished",
    "step_underflow": "k_denominator_vanished",
}


@dataclass(frozen=True, eq=False)
class FeedbackState:
    r: float
    n_hat: np.ndarray
    C: float
    Lambda: np.ndarray
    k: float
    m: np.ndarray


@dataclass(eq=False)
class Thread:
    """A sampled curve r -> n_hat(r) with per-sample diagnostics.

    ``kind`` is one of ``maximizing``, ``minimizing``, ``alternate``,
    ``special-line`` or ``chimney-generator``.
    """

    kind: str
    r: np.ndarray
    n_hat: np.ndarray
    residual: np.ndarray
    f: np.ndarray
    termination: str
    label: str = ""
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.r)

    @property
    def points(self) -> np.ndarray:
        return self.r[:, None] * self.n_hat

    def interpolate(self, r) -> np.ndarray:
        """n_hat at radius r by cubic interpolation (renormalized)."""
        spline = CubicSpline(self.r, self.n_hat, axis=0)
        out = spline(r)
        return out / np.linalg.norm(out, axis=-1, keepdims=True)

    def f_zero(self, system: LindbladSystem) -> float | None:
        """First radius where f changes sign along the thread, or None."""
        sign = np.sign(self.f)
        idx = np.flatnonzero(sign[1:] * sign[:-1] < 0)
        if idx.size == 0:
            return None
        i = int(idx[0])
        lo, hi = self.r[i], self.r[i + 1]
        if lo > hi:
            lo, hi = hi, lo

        def g(rr):
            return float(system.radial(self.interpolate(rr), rr))

        return brentq(g, lo, hi, xtol=1e-14)


def _solve_lambda(system: LindbladSystem, r: float, n_hat: np.ndarray):
    """Return (C, lam, x, y) with x = Lambda^-1 n_hat, y = Lambda^-1 A n_hat in A's eigenbasis.

    Singular directions orthogonal to n_hat are dropped (pseudo-inverse);
    other singular directions raise SingularLambda.
    """
    E, a = system.eigenvectors, system.eigenvalues
    v = system.b + 2 * r * system.A @ n_hat
    C = float(n_hat @ v)
    lam = 2 * r * a - C
    nE = E.T @ n_hat
    sigma_tol = 1e-10 * max(1.0, 2 * r * a[0], abs(C))
    x = np.zeros(3)
    for j in range(3):
        if abs(lam[j]) <= sigma_tol:
            if abs(nE[j]) <= ORTHOGONAL_TOL:
                continue
            raise SingularLambda(
                f"Lambda singular along eigenvector {j} (eigenvalue {lam[j]:.3e}) at r={r}",
                index=j,
                eigenvalue=float(lam[j]),
                r=r,
                n_hat=n_hat,
            )
        x[j] = nE[j] / lam[j]
    return C, lam, nE, x


def _feedback_parts(system: LindbladSystem, r: float, n_hat: np.ndarray):
    C, lam, nE, x = _solve_lambda(system, r, n_hat)
    y = system.eigenvalues * x
    denom = float(nE @ x)
    if abs(denom) <= K_DENOMINATOR_TOL * max(float(np.sum(np.abs(nE * x))), 1e-300):
        raise KDenominatorVanished(
            f"n^T Lambda^-1 n = {denom:.3e} at r={r}", denominator=denom, r=r, n_hat=n_hat
        )
    k = 2 * float(nE @ y) / denom
    m = system.eigenvectors @ (k * x - 2 * y)
    m -= (m @ n_hat) * n_hat
    return C, lam, k, m


def feedback_state(system: LindbladSystem, r: float, n_hat) -> FeedbackState:
    n_hat = np.asarray(n_hat, dtype=float)
    C, lam, k, m = _feedback_parts(system, r, n_hat)
    E = system.eigenvectors
    return FeedbackState(r, n_hat, C, E @ np.diag(lam) @ E.T, k, m)


def feedback(system: LindbladSystem, r: float, n_hat) -> np.ndarray:
    """m = d n_hat / dr keeping n_hat critical for f_r."""
    return _feedback_parts(system, r, np.asarray(n_hat, dtype=float))[3]


@dataclass(frozen=True, eq=False)
class SpecialCaseResolution:
    case: str  # "1a", "1b-plane", "1c-line"
    m: np.ndarray | None
    critical_set: AffineCriticalSet | None = None


def handle_special_cases(
    system: LindbladSystem,
    r: float,
    n_hat,
    failure: FeedbackError,
    critical_sets: list[AffineCriticalSet] | None = None,
) -> SpecialCaseResolution:
    """Resolve a feedback failure from the degenerate structure of the system.

    Main threads never reach this point: singular directions orthogonal to
    n_hat are already handled inside the Lambda solve.
    """
    n_hat = np.asarray(n_hat, dtype=float)
    groups = system.groups
    if len(groups) == 1 and not groups[0].active:
        return SpecialCaseResolution("1a", np.zeros(3))
    if not isinstance(failure, SingularLambda):
        raise UnresolvableSpecialCase(str(failure), r=r, n_hat=n_hat) from failure
    index = failure.index
    group = None
    for g in groups:
        if np.any(np.abs(g.basis.T @ system.eigenvectors[:, index]) > 0.5):
            group = g
            break
    if group is None or group.active:
        raise UnresolvableSpecialCase(str(failure), r=r, n_hat=n_hat) from failure
    if critical_sets is None:
        critical_sets = special_case_critical_sets(system)
    sets = {s.eigenvalue: s for s in critical_sets if s.kind in ("line", "plane")}
    crit_set = sets.get(group.value)
    if group.dim == 1:
        e = group.basis[:, 0]
        along = float(n_hat @ e)
        if abs(along) < 1e-9:
            raise UnresolvableSpecialCase(
                f"line feedback diverges where the line crosses the main-thread plane (r={r})",
                r=r,
                n_hat=n_hat,
            ) from failure
        m = (e / along - n_hat) / r
        return SpecialCaseResolution("1c-line", m - (m @ n_hat) * n_hat, crit_set)
    if group.dim == 2 and crit_set is not None:
        normal = np.cross(group.basis[:, 0], group.basis[:, 1])
        normal /= np.linalg.norm(normal)
        offset = float(crit_set.offset @ normal)
        along = float(n_hat @ normal)
        denom = r * r * (1 - along * along)
        if denom < 1e-12:
            raise UnresolvableSpecialCase(
                f"plane feedback diverges at the intersection with the main thread (r={r})",
                r=r,
                n_hat=n_hat,
            ) from failure
        m = -offset / denom * (normal - along * n_hat)
        return SpecialCaseResolution("1b-plane", m, crit_set)
    raise UnresolvableSpecialCase(str(failure), r=r, n_hat=n_hat) from failure


def _thread_field(system: LindbladSystem):
    sets = special_case_critical_sets(system)

    def field(r, n):
        try:
            return feedback(system, r, n)
        except SingularLambda as exc:
            return handle_special_cases(system, r, n, exc, sets).m

    return field


def _make_thread(system, kind, rs, ns, termination, label="", info=None) -> Thread:
    rs = np.asarray(rs, dtype=float)
    ns = np.asarray(ns, dtype=float)
    return Thread(
        kind=kind,
        r=rs,
        n_hat=ns,
        residual=_residuals(system, rs, ns),
        f=system.radial(ns, rs),
        termination=termination,
        label=label,
        info=info or {},
    )


def _residuals(system, rs, ns):
    v = system.b + 2 * rs[:, None] * ns @ system.A
    along = np.sum(v * ns, axis=1, keepdims=True)
    return np.linalg.norm(v - along * ns, axis=1)


def integrate_thread(
    system: LindbladSystem,
    start: tuple[float, np.ndarray],
    direction: int = 1,
    dr: float = DEFAULT_DR,
    *,
    kind: str = "alternate",
    r_stop: float | None = None,
    adaptive: bool = False,
    tol: float = ADAPTIVE_TOL,
) -> Thread:
    """Continue a critical point in r with the RK-Munthe-Kaas integrator.

    Without ``adaptive`` the step is exactly ``dr`` (last step clipped to the
    ball boundary); with it, steps are halved by step doubling wherever the
    feedback varies too fast, which is how alternate threads are followed
    back toward their tangency points.
    """
    r0, n0 = float(start[0]), np.asarray(start[1], dtype=float)
    if r_stop is None:
        r_stop = 1.0 if direction > 0 else 0.0
    res = march(
        _thread_field(system),
        r0,
        n0 / np.linalg.norm(n0),
        r_stop,
        dr,
        tol=tol if adaptive else None,
        catch=(FeedbackError,),
    )
    termination = res.termination
    if termination == "reached_end":
        termination = "reached_r1" if r_stop == 1.0 else ("left_ball" if r_stop == 0.0 else "reached_end")
    else:
        termination = TERMINATIONS.get(termination, termination)
    return _make_thread(system, kind, res.r, res.n, termination)


def main_threads(system: LindbladSystem, dr: float = DEFAULT_DR) -> tuple[Thread, Thread]:
    """Maximizing and minimizing threads from (0, +b_hat) and (0, -b_hat)."""
    if system.is_unital:
        raise ValueError("b = 0: no threads emanate from the completely mixed state")
    b_hat = system.b / np.linalg.norm(system.b)
    up = integrate_thread(system, (0.0, b_hat), 1, dr, kind="maximizing")
    down = integrate_thread(system, (0.0, -b_hat), 1, dr, kind="minimizing")
    return up, down


def _two_sided(system, kind, seed_r, seed_n, r_floor, dr, label, info):
    """Integrate outward to r = 1 and back toward r_floor, then splice."""
    fwd = march(_thread_field(system), seed_r, seed_n, 1.0, dr, tol=ADAPTIVE_TOL, catch=(FeedbackError,))
    back = march(
        _thread_field(system), seed_r, seed_n, r_floor, dr, tol=ADAPTIVE_TOL, catch=(FeedbackError,)
    )
    rs = np.concatenate([back.r[::-1], fwd.r[1:]])
    ns = np.concatenate([back.n[::-1], fwd.n[1:]])
    term = fwd.termination
    term = "reached_r1" if term == "reached_end" else TERMINATIONS.get(term, term)
    info = dict(info)
    info["inner_termination"] = TERMINATIONS.get(back.termination, back.termination)
    return _make_thread(system, kind, rs, ns, term, label, info)


def _off_lines(system, n_hat):
    return all(np.all(np.abs(g.basis.T @ n_hat) <= 1e-9) for g in system.zero_b_groups)


def alternate_threads(system: LindbladSystem, dr: float = DEFAULT_DR, seed_offset: float | None = None) -> list[Thread]:
    """Alternate threads: one pair of halves per inside-ball tangency point and per line set.

    Seeds come from the critical-point oracle at ``r_tangency + seed_offset``
    (default five steps); each half is integrated outward to the boundary and
    inward until the feedback fails near the tangency.  Planes of critical
    points are families, not threads, and are not returned.
    """
    delta = 5 * dr if seed_offset is None else seed_offset
    out = []
    for i, tp in enumerate(tangency_points(system)):
        if not tp.inside_ball:
            continue
        r_seed = tp.r + delta
        if r_seed >= 1:
            log.info("tangency at r=%.4f too close to the boundary to seed", tp.r)
            continue
        lo, hi = tp.interval
        seeds = [
            p
            for p in critical_points_at(system, r_seed)
            if lo < p.mu < hi and _off_lines(system, p.n_hat)
        ]
        if len(seeds) != 2:
            raise SeedMatchingError(
                f"expected 2 critical points next to the tangency at r={tp.r:.6f}, found {len(seeds)}"
            )
        for half, p in enumerate(seeds):
            info = {"tangency_r": tp.r, "tangency_mu": tp.mu, "seed_r": r_seed}
            out.append(_two_sided(system, "alternate", r_seed, p.n_hat, tp.r, dr, f"tangency{i}-{half}", info))

    for i, s in enumerate(special_case_critical_sets(system)):
        if s.kind != "line":
            continue
        r0 = float(np.linalg.norm(s.offset))
        r_seed = r0 + delta
        if r_seed >= 1:
            continue
        for half, n_hat in enumerate(s.at_radius(r_seed)):
            info = {"line_offset": s.offset.tolist(), "line_r": r0, "seed_r": r_seed}
            out.append(_two_sided(system, "special-line", r_seed, n_hat, r0, dr, f"line{i}-{half}", info))
    return out


def min_distance(a: Thread, b: Thread) -> float:
    """Smallest Euclidean distance between the sample points of two threads."""
    pa, pb = a.points, b.points
    best = np.inf
    for chunk in range(0, len(pa), 512):
        d = np.linalg.norm(pa[chunk : chunk + 512, None, :] - pb[None, :, :], axis=-1)
        best = min(best, float(d.min()))
    return best
