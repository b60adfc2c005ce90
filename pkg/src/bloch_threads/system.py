"""Two-level Lindblad systems in reduced (A, b) form.

A qubit density matrix ``rho = (I + n.sigma)/2`` obeys

    dn/dt = b + h x n + (A - tr(A)) n

where ``A`` is a real symmetric positive semi-definite 3x3 matrix and ``b`` a
real 3-vector, both built from the traceless Lindblad operators
``L_m = sum_j l_{m,j} sigma_j`` and the Hamiltonian ``H = h.sigma / 2``.

Conventions fixed here and relied on everywhere else:

* ``A = sum_m (l_m conj(l_m)^T + conj(l_m) l_m^T)`` and
  ``b = 2i sum_m l_m x conj(l_m)``.  These are the values that make the
  reduced ODE above exact for the Lindblad equation as written with
  ``L rho L^+ - {L^+ L, rho}/2``.
* ``sigma_+ = (sigma_x - i sigma_y)/2``; with this choice an operator
  ``sqrt(g) sigma_+`` pumps the Bloch vector toward ``-z``.
* Eigenvalues are sorted ``a_1 >= a_2 >= a_3``; every eigenvector has its
  first non-negligible component positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InvalidStateError, SystemInputError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])
IDENTITY2 = np.eye(2, dtype=complex)

SIGMA_PLUS = (SIGMA_X - 1j * SIGMA_Y) / 2
SIGMA_MINUS = (SIGMA_X + 1j * SIGMA_Y) / 2

EIG_REL_TOL = 1e-9
B_REL_TOL = 1e-9

# A = diag(...) and b from the four worked examples.
FIGURE_SYSTEMS = {
    1: ((100.0, 57.0, 39.0), (29.0, 67.0, 61.0)),
    2: ((100.0, 10.0, 10.0), (0.0, 32.0, -26.0)),
    3: ((100.0, 50.0, 10.0), (23.0, 0.0, -14.0)),
    4: ((100.0, 16.0, 11.0), (-3.0, -8.0, 68.0)),
}


@dataclass(frozen=True, eq=False)
class LindbladOperatorSet:
    """Traceless jump operators as Pauli coefficient vectors (units sqrt(rate))."""

    operators: tuple = ()

    def __post_init__(self):
        ops = tuple(np.asarray(l, dtype=complex).reshape(3) for l in self.operators)
        for l in ops:
            if not np.all(np.isfinite(l)):
                raise SystemInputError("Lindblad coefficient vectors must be finite")
        object.__setattr__(self, "operators", ops)

    def __len__(self):
        return len(self.operators)

    @classmethod
    def from_matrices(cls, matrices: Sequence[np.ndarray]) -> "LindbladOperatorSet":
        """Decompose 2x2 operators; the identity part is dropped (it only shifts H)."""
        vecs = []
        for L in matrices:
            L = np.asarray(L, dtype=complex)
            vecs.append(np.array([np.trace(s @ L) / 2 for s in PAULI]))
        return cls(tuple(vecs))

    def matrices(self) -> list[np.ndarray]:
        return [np.einsum("j,jab->ab", l, PAULI) for l in self.operators]


@dataclass(frozen=True)
class EigenGroup:
    """A (possibly degenerate) eigenspace of A and the part of b inside it.

    ``basis`` has the eigenvectors as columns.  When b has a non-negligible
    projection onto the eigenspace, ``b_direction`` is the unit vector of that
    projection and ``b_norm`` its length; otherwise ``b_direction`` is None.
    """

    value: float
    basis: np.ndarray
    b_norm: float
    b_direction: np.ndarray | None

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def active(self) -> bool:
        return self.b_direction is not None


@dataclass(frozen=True, eq=False)
class LindbladSystem:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(3, 3)
        b = np.array(self.b, dtype=float).reshape(3)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise SystemInputError("A and b must be finite")
        A = (A + A.T) / 2
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        vals, vecs = _sorted_eigh(A)
        vals.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)

    eigenvalues: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)

    @classmethod
    def from_eigen(cls, a_diag, b) -> "LindbladSystem":
        """System whose eigenbasis is the lab frame: A = diag(a_diag)."""
        return cls(np.diag(np.asarray(a_diag, dtype=float)), b)

    @cached_property
    def trace(self) -> float:
        return float(np.trace(self.A))

    @cached_property
    def b_eigen(self) -> np.ndarray:
        """b expressed in the eigenbasis of A."""
        out = self.eigenvectors.T @ self.b
        out.setflags(write=False)
        return out

    @cached_property
    def scale(self) -> float:
        """Characteristic rate used to make tolerances relative."""
        return max(1.0, float(np.max(np.abs(self.A))), float(np.linalg.norm(self.b)))

    @property
    def eig_tol(self) -> float:
        return EIG_REL_TOL * max(1.0, float(self.eigenvalues[0]))

    @property
    def b_tol(self) -> float:
        return B_REL_TOL * max(1.0, float(np.linalg.norm(self.b)))

    @property
    def is_unital(self) -> bool:
        return float(np.linalg.norm(self.b)) <= self.b_tol

    @cached_property
    def groups(self) -> tuple[EigenGroup, ...]:
        """Eigenspaces of A (descending) with b's projection on each."""
        vals, vecs = self.eigenvalues, self.eigenvectors
        out = []
        start = 0
        for i in range(1, 4):
            if i == 3 or abs(vals[i] - vals[start]) > self.eig_tol:
                basis = vecs[:, start:i]
                value = float(np.mean(vals[start:i]))
                proj = basis.T @ self.b
                norm = float(np.linalg.norm(proj))
                if norm > self.b_tol:
                    out.append(EigenGroup(value, basis, norm, basis @ proj / norm))
                else:
                    out.append(EigenGroup(value, basis, 0.0, None))
                start = i
        return tuple(out)

    @property
    def active_groups(self) -> tuple[EigenGroup, ...]:
        return tuple(g for g in self.groups if g.active)

    @property
    def zero_b_groups(self) -> tuple[EigenGroup, ...]:
        return tuple(g for g in self.groups if not g.active)

    def radial(self, n_hat, r):
        """f(n_hat, r) = b.n_hat + r (n_hat^T A n_hat - tr A); broadcasts over rows."""
        n_hat = np.asarray(n_hat, dtype=float)
        quad = np.einsum("...i,ij,...j->...", n_hat, self.A, n_hat)
        return n_hat @ self.b + r * (quad - self.trace)


def _sorted_eigh(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    off = A - np.diag(np.diag(A))
    if not np.any(off):
        # exact eigenvectors keep structural zeros of b exact
        order = np.argsort(-np.diag(A), kind="stable")
        return np.diag(A)[order].copy(), np.eye(3)[:, order]
    vals, vecs = np.linalg.eigh(A)
    vals, vecs = vals[::-1].copy(), vecs[:, ::-1].copy()
    for k in range(3):
        col = vecs[:, k]
        lead = np.flatnonzero(np.abs(col) > 1e-12)[0]
        if col[lead] < 0:
            vecs[:, k] = -col
    return vals, vecs


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    tolerance: float


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "margin": c.margin, "tolerance": c.tolerance}
                for c in self.checks
            ],
        }


def build_system(ops: LindbladOperatorSet) -> LindbladSystem:
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for l in ops.operators:
        outer = np.outer(l, l.conj())
        A += 2 * outer.real
        b += (2j * np.cross(l, l.conj())).real
    system = LindbladSystem(A, b)
    report = validate_system(system)
    assert report.passed, f"operator-built system failed validation: {report.failures()}"
    return system


def validate_system(system: LindbladSystem) -> ValidationReport:
    """PSD check on A and the drift bound b^T A b <= 4 det A."""
    scale = system.scale
    a_min = float(system.eigenvalues[-1])
    tol_psd = 1e-10 * max(1.0, float(system.eigenvalues[0]))
    psd = CheckResult("psd", a_min >= -tol_psd, a_min, tol_psd)
    margin = 4 * float(np.prod(system.eigenvalues)) - float(system.b @ system.A @ system.b)
    tol_ineq = 1e-8 * scale**4
    ineq = CheckResult("drift_bound", margin >= -tol_ineq, margin, tol_ineq)
    return ValidationReport((psd, ineq))


def system_to_operators(system: LindbladSystem) -> LindbladOperatorSet:
    """A set of jump operators realising ``system`` (inverse of build_system).

    Uses the Gram matrix ``G = sum_m l_m l_m^+ = A/2 + (i/4)[b]_x``, which is
    positive semi-definite exactly when the system is valid.
    """
    b = system.b
    bx = np.array([[0, -b[2], b[1]], [b[2], 0, -b[0]], [-b[1], b[0], 0]])
    G = system.A / 2 + 0.25j * bx
    w, V = np.linalg.eigh(G)
    if w.min() < -1e-9 * system.scale:
        raise SystemInputError("system is not physical; no Lindblad operators realise it")
    ops = [np.sqrt(max(wk, 0.0)) * V[:, k] for k, wk in enumerate(w) if wk > 0]
    return LindbladOperatorSet(tuple(ops))


@dataclass(frozen=True, eq=False)
class BlochState:
    """A point of the Bloch ball as (r, n_hat).

    At r = 0 ``n_hat`` is optional; when given it is the direction along which
    the origin is approached.
    """

    r: float
    n_hat: np.ndarray | None = None

    def __post_init__(self):
        r = float(self.r)
        if not (0.0 <= r <= 1.0 + 1e-12):
            raise InvalidStateError(f"Bloch radius {r} outside [0, 1]")
        object.__setattr__(self, "r", r)
        if self.n_hat is None:
            if r > 0:
                raise InvalidStateError("n_hat is required when r > 0")
            return
        n = np.array(self.n_hat, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1) > 1e-12:
            if norm == 0:
                raise InvalidStateError("n_hat must be a unit vector")
            n = n / norm
        object.__setattr__(self, "n_hat", n)

    @classmethod
    def from_vector(cls, n) -> "BlochState":
        n = np.asarray(n, dtype=float).reshape(3)
        r = float(np.linalg.norm(n))
        if r == 0:
            return cls(0.0)
        return cls(r, n / r)

    @property
    def vector(self) -> np.ndarray:
        if self.r == 0:
            return np.zeros(3)
        return self.r * self.n_hat


def check_density(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise InvalidStateError(f"density matrix must be 2x2, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-12:
        raise InvalidStateError(f"density matrix trace {np.trace(rho).real} != 1")
    lam = np.linalg.eigvalsh(rho)
    if lam.min() < -1e-10 or lam.max() > 1 + 1e-10:
        raise InvalidStateError(f"density matrix eigenvalues {lam} outside [0, 1]")
    return rho


def bloch_vector(op: np.ndarray) -> np.ndarray:
    """Pauli coefficients Tr(sigma_j op); no validation, works on derivatives too."""
    return np.einsum("jab,ba->j", PAULI, np.asarray(op, dtype=complex)).real


def bloch_to_density(state) -> np.ndarray:
    n = state.vector if isinstance(state, BlochState) else np.asarray(state, dtype=float)
    return (IDENTITY2 + np.einsum("j,jab->ab", n, PAULI)) / 2


def density_to_bloch(rho: np.ndarray) -> BlochState:
    return BlochState.from_vector(bloch_vector(check_density(rho)))


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.trace(rho @ rho).real)


def figure_system(k: int) -> LindbladSystem:
    try:
        a, b = FIGURE_SYSTEMS[k]
    except KeyError:
        raise SystemInputError(f"no preset for figure {k}; choose from {sorted(FIGURE_SYSTEMS)}") from None
    return LindbladSystem.from_eigen(a, b)


def _vector(data, name, length=3, dtype=float):
    try:
        arr = np.asarray(data, dtype=dtype)
    except (TypeError, ValueError):
        raise SystemInputError(f"field '{name}' must be a list of {length} numbers") from None
    if arr.shape != (length,):
        raise SystemInputError(f"field '{name}' must have {length} entries, got shape {arr.shape}")
    return arr


def system_from_dict(data: dict) -> LindbladSystem:
    """Parse one of the three accepted JSON layouts.

    ``{"A_diag": [...], "b": [...]}``, ``{"A": [[...]], "b": [...]}`` or
    ``{"lindblad_ops": [{"re": [...], "im": [...]}, ...]}``.
    """
    if not isinstance(data, dict):
        raise SystemInputError("system file must contain a JSON object")
    forms = [k for k in ("A_diag", "A", "lindblad_ops") if k in data]
    if len(forms) != 1:
        raise SystemInputError(
            f"exactly one of 'A_diag', 'A', 'lindblad_ops' must be present, found {forms or 'none'}"
        )
    form = forms[0]
    if form == "lindblad_ops":
        ops = []
        for i, entry in enumerate(data["lindblad_ops"]):
            if not isinstance(entry, dict) or "re" not in entry:
                raise SystemInputError(f"lindblad_ops[{i}] needs at least a 're' field")
            re = _vector(entry["re"], f"lindblad_ops[{i}].re")
            im = _vector(entry.get("im", [0, 0, 0]), f"lindblad_ops[{i}].im")
            ops.append(re + 1j * im)
        return build_system(LindbladOperatorSet(tuple(ops)))
    if "b" not in data:
        raise SystemInputError(f"field 'b' is required with '{form}'")
    b = _vector(data["b"], "b")
    if form == "A_diag":
        return LindbladSystem.from_eigen(_vector(data["A_diag"], "A_diag"), b)
    try:
        A = np.asarray(data["A"], dtype=float)
    except (TypeError, ValueError):
        raise SystemInputError("field 'A' must be a 3x3 array of numbers") from None
    if A.shape != (3, 3):
        raise SystemInputError(f"field 'A' must be 3x3, got shape {A.shape}")
    if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
        raise SystemInputError("field 'A' must be symmetric")
    return LindbladSystem(A, b)


def system_to_dict(system: LindbladSystem) -> dict:
    return {"A": system.A.tolist(), "b": system.b.tolist()}
