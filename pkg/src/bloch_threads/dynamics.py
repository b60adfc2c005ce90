"""Bloch-vector dynamics and the independent density-matrix oracle.

Hamiltonians are 3-vectors ``h`` with ``H = h.sigma / 2``, which makes the
Hamiltonian part of the Bloch ODE exactly ``h x n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidStateError
from .system import PAULI, BlochState, LindbladOperatorSet, LindbladSystem, bloch_vector


@dataclass(frozen=True, eq=False)
class VelocitySplit:
    radial: float
    transverse: np.ndarray


def hamiltonian_matrix(h) -> np.ndarray:
    return np.einsum("j,jab->ab", np.asarray(h, dtype=float), PAULI) / 2


def bloch_rhs(system: LindbladSystem, h, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return system.b + np.cross(h, n) + system.A @ n - system.trace * n


def _direction(state: BlochState, system: LindbladSystem) -> np.ndarray | None:
    if state.n_hat is not None:
        return state.n_hat
    return None


def radial_velocity(system: LindbladSystem, state: BlochState) -> float:
    """dr/dt = f(n_hat, r).

    At r = 0 without a direction the outward limit |b| is returned.
    """
    n_hat = _direction(state, system)
    if n_hat is None:
        return float(np.linalg.norm(system.b))
    return float(system.radial(n_hat, state.r))


def transverse_velocity(system: LindbladSystem, h, state: BlochState) -> np.ndarray:
    """d n_hat / dt = b_perp / r + h x n_hat + (A n_hat)_perp."""
    if state.r == 0:
        raise InvalidStateError("transverse velocity is singular at r = 0; use transverse_velocity_origin")
    n_hat = state.n_hat
    w = system.b / state.r + system.A @ n_hat
    return w - (n_hat @ w) * n_hat + np.cross(h, n_hat)


def transverse_velocity_origin(system: LindbladSystem, h, direction: float = 1.0) -> np.ndarray:
    """Limit of d n_hat / dt on a trajectory passing through the origin.

    ``direction`` is +1 just after the crossing (n_hat = b_hat), -1 just before.
    """
    b_hat = system.b / np.linalg.norm(system.b)
    Ab = system.A @ b_hat
    return np.sign(direction) * (np.cross(h, b_hat) + Ab - (b_hat @ Ab) * b_hat)


def split_velocity(system: LindbladSystem, h, state: BlochState) -> VelocitySplit:
    return VelocitySplit(radial_velocity(system, state), transverse_velocity(system, h, state))


def lindblad_rhs_density(ops: LindbladOperatorSet, H, rho) -> np.ndarray:
    """[-iH, rho] + sum_m (L rho L^+ - {L^+ L, rho}/2)."""
    rho = np.asarray(rho, dtype=complex)
    H = np.asarray(H, dtype=complex)
    out = -1j * (H @ rho - rho @ H)
    for L in ops.matrices():
        Ld = L.conj().T
        LdL = Ld @ L
        out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def _rk4_density(rhs, rho, t, dt):
    k1 = rhs(t, rho)
    k2 = rhs(t + dt / 2, rho + dt / 2 * k1)
    k3 = rhs(t + dt / 2, rho + dt / 2 * k2)
    k4 = rhs(t + dt, rho + dt * k3)
    return rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_density(
    ops: LindbladOperatorSet,
    hamiltonian: Callable[[float, np.ndarray], np.ndarray],
    rho0,
    dt: float,
    *,
    t_end: float | None = None,
    stop: Callable[[float, np.ndarray], bool] | None = None,
    max_steps: int = 10_000_000,
    record_every: int = 1,
):
    """Fixed-step RK4 on the 2x2 Lindblad equation.

    ``hamiltonian(t, rho)`` returns a 2x2 Hermitian matrix, so both open-loop
    schedules and state feedback are expressible.  Integration ends at
    ``t_end`` or when ``stop(t, rho)`` is true.  Returns the recorded times and
    Bloch vectors as arrays.
    """
    mats = ops.matrices()
    dissip = [(L, L.conj().T, L.conj().T @ L) for L in mats]

    def rhs(t, rho):
        H = hamiltonian(t, rho)
        out = -1j * (H @ rho - rho @ H)
        for L, Ld, LdL in dissip:
            out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        return out

    rho = np.asarray(rho0, dtype=complex)
    t = 0.0
    times = [t]
    states = [bloch_vector(rho)]
    for step in range(1, max_steps + 1):
        h = dt if t_end is None else min(dt, t_end - t)
        if h <= 0:
            break
        rho = _rk4_density(rhs, rho, t, h)
        t += h
        done = stop is not None and stop(t, rho)
        if step % record_every == 0 or done:
            times.append(t)
            states.append(bloch_vector(rho))
        if done:
            break
    return np.array(times), np.array(states)
