"""The chimney: the region where the purity rises, and its wall f = 0.

Generators start on the circle ``r = 0, n_hat . b = 0`` and are continued in
r with a feedback that keeps ``f = 0`` while allowing no motion along the
wall's level curve.  They end at r = 1, at an apogee (the farthest wall point,
where the feedback blows up), or when the drift in f exceeds a threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from .critical import critical_points_at
from .errors import ApogeeReached
from .liegroup import march, rkmk4_step
from .system import BlochState, LindbladSystem
from .threads import Thread, alternate_threads, main_threads

log = logging.getLogger(__name__)

DEFAULT_THETA_COUNT = 36
DEFAULT_F_THRESHOLD = 1e-3
APOGEE_REL_TOL = 1e-12
TAIL_TOL = 1e-8
TAIL_MIN_STEP = 1e-8
CLUSTER_ANGLE = np.deg2rad(5.0)


@dataclass(eq=False)
class Apogee:
    r: float
    n_hat: np.ndarray
    generators: list[int]
    matched_thread: Thread | None = None
    match_distance: float = np.inf

    @property
    def point(self) -> np.ndarray:
        return self.r * self.n_hat


@dataclass(eq=False)
class ChimneyMesh:
    theta_count: int
    theta: np.ndarray
    generators: list[Thread]
    apogees: list[Apogee] = field(default_factory=list)

    def endpoint_apogee(self) -> list[int | None]:
        """Index of the apogee each generator ended at (None for r = 1 exits)."""
        out: list[int | None] = [None] * len(self.generators)
        for k, ap in enumerate(self.apogees):
            for i in ap.generators:
                out[i] = k
        return out


def _apogee_tol(system: LindbladSystem) -> float:
    return APOGEE_REL_TOL * max(1.0, system.scale) ** 2


def chimney_feedback(system: LindbladSystem, r: float, n_hat) -> np.ndarray:
    """d n_hat / dr keeping f = 0, with no component along n_hat x v."""
    n_hat = np.asarray(n_hat, dtype=float)
    v = system.b + 2 * r * system.A @ n_hat
    along = float(n_hat @ v)
    denom = float(v @ v) - along * along
    if denom <= _apogee_tol(system):
        raise ApogeeReached(
            f"chimney feedback denominator {denom:.3e} at r={r}", denominator=denom, r=r, n_hat=n_hat
        )
    return (system.trace - n_hat @ system.A @ n_hat) / denom * (v - along * n_hat)


def _batched_feedback(system: LindbladSystem):
    tol = _apogee_tol(system)

    def fld(r, n):
        An = n @ system.A
        v = system.b + 2 * r * An
        along = np.sum(n * v, axis=-1, keepdims=True)
        denom = np.sum(v * v, axis=-1, keepdims=True) - along**2
        num = system.trace - np.sum(n * An, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.where(denom > tol, num / denom, np.nan) * (v - along * n)
        return m

    return fld


def _wall_denominator(system, r, n):
    v = system.b + 2 * r * n @ system.A
    along = np.sum(n * v, axis=-1)
    return np.sum(v * v, axis=-1) - along**2


def chimney_ellipsoid_residual(system: LindbladSystem, n) -> float:
    """n^T (trA - A) n - b.n; equals -r f, so negative inside the chimney and positive outside."""
    n = np.asarray(n, dtype=float)
    A_tilde = system.trace * np.eye(3) - system.A
    return np.einsum("...i,ij,...j->...", n, A_tilde, n) - n @ system.b


def ellipsoid_scale(system: LindbladSystem) -> float:
    """sum b_j^2 / (4 (trA - a_j)) in the eigenbasis; falls back to |b| when an entry vanishes."""
    a_tilde = system.trace - system.eigenvalues
    be = system.b_eigen
    if np.all(a_tilde > system.eig_tol):
        return float(np.sum(be**2 / (4 * a_tilde)))
    return float(np.linalg.norm(system.b))


def classify_point(system: LindbladSystem, state: BlochState, f_tol: float = 1e-12) -> str:
    if state.n_hat is None:
        f = float(np.linalg.norm(system.b))
    else:
        f = float(system.radial(state.n_hat, state.r))
    if abs(f) <= f_tol * max(1.0, system.scale):
        return "on_wall"
    return "purity_rising" if f > 0 else "purity_falling"


def theta_circle(system: LindbladSystem, theta_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Angles and unit starting directions spanning the plane orthogonal to b."""
    b_hat = system.b / np.linalg.norm(system.b)
    u = np.cross([1.0, 0.0, 0.0], b_hat)
    if np.linalg.norm(u) < 1e-6:
        u = np.cross([0.0, 1.0, 0.0], b_hat)
    u /= np.linalg.norm(u)
    w = np.cross(b_hat, u)
    theta = 2 * np.pi * np.arange(theta_count) / theta_count
    return theta, np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * w


def _fixed_phase(system, starts, dr, f_threshold):
    """March all generators together on the fixed grid; each stops at its first bad step."""
    fld = _batched_feedback(system)
    count = len(starts)
    n_grid = max(1, int(round(1.0 / dr)))
    grid = np.minimum(np.arange(n_grid + 1) * dr, 1.0)
    grid[-1] = 1.0
    tol = _apogee_tol(system)
    rs = [[0.0] for _ in range(count)]
    ns = [[s.copy()] for s in starts]
    status = ["reached_r1"] * count
    active = np.ones(count, dtype=bool)
    n = starts.copy()
    for r, r_next in zip(grid[:-1], grid[1:]):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        with np.errstate(invalid="ignore"):
            new = rkmk4_step(fld, r, n[idx], r_next - r)
        f = system.radial(new, r_next)
        denom = _wall_denominator(system, r_next, new)
        finite = np.all(np.isfinite(new), axis=1)
        for j, i in enumerate(idx):
            if not finite[j] or denom[j] <= tol:
                status[i] = "apogee"
                active[i] = False
            elif abs(f[j]) > f_threshold:
                status[i] = "f_threshold"
                active[i] = False
            else:
                n[i] = new[j]
                rs[i].append(float(r_next))
                ns[i].append(new[j].copy())
    return rs, ns, status


def _tail(system, r0, n0, dr, f_threshold):
    """Adaptive continuation from the last good sample toward the apogee."""

    def check(r, n):
        if abs(system.radial(n, r)) > f_threshold:
            return "f_threshold"
        return None

    res = march(
        lambda r, n: chimney_feedback(system, r, n),
        r0,
        n0,
        1.0,
        dr,
        check=check,
        tol=TAIL_TOL,
        min_step=TAIL_MIN_STEP,
        catch=(ApogeeReached,),
    )
    term = {"reached_end": "reached_r1", "ApogeeReached": "apogee", "step_underflow": "apogee"}
    return res.r[1:], res.n[1:], term.get(res.termination, res.termination)


def refine_apogee(system: LindbladSystem, r_guess: float, n_hat_guess) -> tuple[float, np.ndarray]:
    """Farthest wall point near a guess: n = lam (2 A_tilde n - b) with n on the wall."""
    A_tilde = system.trace * np.eye(3) - system.A
    n0 = r_guess * np.asarray(n_hat_guess, dtype=float)
    grad = 2 * A_tilde @ n0 - system.b
    lam0 = float(n0 @ grad / (grad @ grad))

    def eqs(x):
        n, lam = x[:3], x[3]
        return np.append(n - lam * (2 * A_tilde @ n - system.b), n @ A_tilde @ n - n @ system.b)

    sol = root(eqs, np.append(n0, lam0), method="hybr", options={"xtol": 1e-14})
    n = sol.x[:3]
    r = float(np.linalg.norm(n))
    # hybr reports failure when xtol is tighter than it can reach, so judge by the residual
    converged = np.max(np.abs(eqs(sol.x))) <= 1e-10 * max(1.0, system.scale)
    if not converged or abs(r - r_guess) > 0.05:
        log.info("apogee refinement did not converge near r=%.4f; keeping the raw endpoint", r_guess)
        return float(r_guess), np.asarray(n_hat_guess, dtype=float)
    return r, n / r


def _angle(a, b):
    return float(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))


def _cluster_endpoints(generators, indices):
    clusters: list[list[int]] = []
    for i in indices:
        end = generators[i].n_hat[-1]
        for cl in clusters:
            if _angle(end, generators[cl[0]].n_hat[-1]) <= CLUSTER_ANGLE:
                cl.append(i)
                break
        else:
            clusters.append([i])
    return clusters


def _thread_distance(thread: Thread, point: np.ndarray) -> float:
    return float(np.min(np.linalg.norm(thread.points - point, axis=1)))


def trace_chimney(
    system: LindbladSystem,
    theta_count: int = DEFAULT_THETA_COUNT,
    dr: float = 1e-3,
    f_threshold: float = DEFAULT_F_THRESHOLD,
    threads: list[Thread] | None = None,
) -> ChimneyMesh:
    """Trace the chimney wall from the r = 0 circle and locate its apogees.

    ``threads`` are the candidates apogees are matched against; by default the
    main and alternate threads of ``system`` are computed.
    """
    if system.is_unital:
        raise ValueError("b = 0: the chimney is degenerate")
    theta, starts = theta_circle(system, theta_count)
    rs, ns, status = _fixed_phase(system, starts, dr, f_threshold)
    generators = []
    for i in range(theta_count):
        r_i, n_i, term = np.array(rs[i]), np.array(ns[i]), status[i]
        if term != "reached_r1":
            tr, tn, term = _tail(system, r_i[-1], n_i[-1], dr, f_threshold)
            if len(tr):
                r_i = np.concatenate([r_i, tr])
                n_i = np.concatenate([n_i, tn])
        generators.append(
            Thread(
                kind="chimney-generator",
                r=r_i,
                n_hat=n_i,
                residual=np.abs(chimney_ellipsoid_residual(system, r_i[:, None] * n_i)),
                f=system.radial(n_i, r_i),
                termination=term,
                label=f"theta{i}",
                info={"theta": float(theta[i])},
            )
        )

    ended = [i for i, g in enumerate(generators) if g.termination != "reached_r1"]
    if threads is None:
        threads = list(main_threads(system, dr)) + alternate_threads(system, dr)
    apogees = []
    for cl in _cluster_endpoints(generators, ended):
        best = max(cl, key=lambda i: generators[i].r[-1])
        r_a, n_a = refine_apogee(system, generators[best].r[-1], generators[best].n_hat[-1])
        ap = Apogee(r_a, n_a, sorted(cl))
        for th in threads:
            d = _thread_distance(th, ap.point)
            if d < ap.match_distance:
                ap.matched_thread, ap.match_distance = th, d
        apogees.append(ap)
    apogees.sort(key=lambda a: -a.r)
    return ChimneyMesh(theta_count, theta, generators, apogees)


def apogee_is_critical(system: LindbladSystem, apogee: Apogee, tol: float = 1e-3) -> bool:
    """Whether a critical point of f at the apogee radius lies within ``tol`` (angular)."""
    return any(_angle(p.n_hat, apogee.n_hat) <= tol for p in critical_points_at(system, apogee.r))
