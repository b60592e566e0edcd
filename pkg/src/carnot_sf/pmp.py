"""Normal Pontryagin extremals of step-2 sub-Finsler Carnot groups.

In left-trivialized coordinates the dual curve splits into a horizontal part
``a(t)`` (a covector on V1) and a vertical part ``b`` that never changes.  The
vertical part fixes the skew form ``B(X, Y) = b([X, Y])`` and the extremal
system reads

    d/dt a(t) Y = B(u(t), Y)            (i.e. a' = B^T u)
    a(t) in d(1/2 ||.||^2)(u(t))         (u = Legendre feedback of a)

Only the normal case is modelled; abnormal extremals do not occur in strict
form in step 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import GroupPoint, StepTwoAlgebra
from .control import ControlSignal, Trajectory, develop
from .norms import NormModel, subdiff_gap

__all__ = [
    "BForm",
    "ExtremalState",
    "ExtremalRun",
    "NonFiniteStateError",
    "build_B",
    "kernel_B",
    "integrate_extremal",
    "residual_check",
    "conserved_quantities",
]

KERNEL_RTOL = 1e-10
MAX_BISECTIONS = 20
LOCAL_TOL = 1e-13


class NonFiniteStateError(FloatingPointError):
    def __init__(self, t: float):
        super().__init__(f"extremal state became non-finite at t={t}")
        self.t = t


@dataclass(frozen=True)
class BForm:
    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("B must be square")
        if not np.array_equal(M, -M.T):
            raise ValueError("B must be skew-symmetric")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    def __call__(self, X, Y) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", X, self.matrix, Y)

    def pair(self, X) -> np.ndarray:
        """Covector ``B(X, .)``."""
        return np.asarray(X, dtype=float) @ self.matrix


@dataclass(frozen=True)
class ExtremalState:
    a: np.ndarray
    b: np.ndarray
    t: float


@dataclass(frozen=True)
class ExtremalRun:
    """Output of :func:`integrate_extremal`.

    ``a[k]`` is the horizontal dual at ``t_k = k dt`` and ``control.samples[k]``
    its feedback, held on ``[t_k, t_k + dt)``.  ``b`` is stored once.
    """

    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    B: BForm
    control: ControlSignal
    trajectory: Trajectory
    label: str
    meta: dict = field(default_factory=dict)

    @property
    def states(self) -> list[ExtremalState]:
        return [ExtremalState(self.a[k], self.b, float(self.t[k])) for k in range(len(self.t))]


def build_B(A: StepTwoAlgebra, b) -> BForm:
    b = np.asarray(b, dtype=float)
    if b.shape != (A.vdim,):
        raise ValueError(f"vertical dual must have length {A.vdim}, got {b.shape}")
    M = np.einsum("k,kij->ij", b, A.structure)
    # the structure constants are exactly skew, but summation order can
    # still differ between (i, j) and (j, i); rebuild from the upper triangle
    upper = np.triu(M, 1)
    return BForm(upper - upper.T)


def kernel_B(B: BForm) -> np.ndarray:
    """Orthonormal basis of ker B as rows."""
    M = B.matrix
    _, s, vt = np.linalg.svd(M)
    if s[0] == 0.0:
        return np.eye(len(M))
    rank = int(np.sum(s > KERNEL_RTOL * s[0]))
    return vt[rank:].copy()


def integrate_extremal(
    A: StepTwoAlgebra,
    N: NormModel,
    a0,
    b,
    start: GroupPoint | None = None,
    T: float = 10.0,
    dt: float = 1e-3,
) -> ExtremalRun:
    """Classical RK4 on ``a' = B^T feedback(a)``.

    For norms whose feedback is not smooth (``switch_signature`` not None)
    each step is checked by step doubling and bisected, up to
    ``MAX_BISECTIONS`` times, where the local error or the feedback branch
    changes.  Smooth norms use plain fixed-step RK4.

    The control recorded for the cell ``[t_k, t_k + dt)`` is the feedback at
    ``a(t_k)``; the group curve is developed exactly from those samples.  For
    norms that are not strictly convex the norm's selection rule closes the
    feedback and the run is labelled ``"selected extremal"``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = int(round(T / dt))
    if n < 1:
        raise ValueError("horizon shorter than one step")
    a0 = np.asarray(a0, dtype=float)
    if a0.shape != (A.rank,) or N.dim != A.rank:
        raise ValueError("covector, norm and algebra dimensions must agree")
    start = A.identity() if start is None else start
    B = build_B(A, b)
    Bt = B.matrix.T.copy()
    feedback = N.select

    signature = N.switch_signature

    def rk4(y, h, u1):
        k1 = Bt @ u1
        k2 = Bt @ feedback(y + 0.5 * h * k1)
        k3 = Bt @ feedback(y + 0.5 * h * k2)
        k4 = Bt @ feedback(y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance(y, h, u1, depth):
        # Step doubling: RK4 loses its order where the feedback is not smooth
        # (switches, and Hoelder points such as a_i = 0 for l^p, p > 2).
        y1 = rk4(y, h, u1)
        mid = rk4(y, 0.5 * h, u1)
        y2 = rk4(mid, 0.5 * h, feedback(mid))
        err = np.max(np.abs(y2 - y1))
        if depth < MAX_BISECTIONS and (
            err > LOCAL_TOL * (1.0 + np.max(np.abs(y)))
            or signature(y) != signature(y2)
        ):
            mid = advance(y, 0.5 * h, u1, depth + 1)
            return advance(mid, 0.5 * h, feedback(mid), depth + 1)
        return y2

    a = np.empty((n + 1, A.rank))
    u = np.empty((n, A.rank))
    a[0] = a0
    cur = a0.copy()
    smooth = signature(cur) is None
    for k in range(n):
        u1 = feedback(cur)
        u[k] = u1
        cur = rk4(cur, dt, u1) if smooth else advance(cur, dt, u1, 0)
        if not np.all(np.isfinite(cur)):
            raise NonFiniteStateError((k + 1) * dt)
        a[k + 1] = cur
    control = ControlSignal(dt, u)
    b = np.array(b, dtype=float)
    b.setflags(write=False)
    a.setflags(write=False)
    return ExtremalRun(
        t=dt * np.arange(n + 1),
        a=a,
        b=b,
        B=B,
        control=control,
        trajectory=develop(A, start, control),
        label="extremal" if N.strictly_convex else "selected extremal",
        meta={"T": n * dt, "dt": dt, "selection": N.selection},
    )


def residual_check(A: StepTwoAlgebra, N: NormModel, u: ControlSignal, states, tol: float) -> dict:
    """Check a (control, dual) pair against the extremal conditions.

    ``states`` is a sequence of ``ExtremalState`` on the grid ``t_k = k dt``
    with one more entry than ``u`` has samples, or an :class:`ExtremalRun`.

    * ODE residual: central difference of ``a`` at interior nodes against
      ``B^T u_k`` (second order for smooth extremals).
    * subdifferential residual: largest Fenchel-Young gap of ``(u_k, a_k)``.
    * vertical drift: largest change of ``b``; anything but 0 is a violation.
    """
    if isinstance(states, ExtremalRun):
        a = states.a
        bs = np.broadcast_to(states.b, (len(a), len(states.b)))
        ts = states.t
    else:
        a = np.array([s.a for s in states], dtype=float)
        bs = np.array([s.b for s in states], dtype=float)
        ts = np.array([s.t for s in states], dtype=float)
    if len(a) != u.count + 1:
        raise ValueError(f"{len(a)} states do not match {u.count} control samples")
    if not np.allclose(ts, u.dt * np.arange(len(a)), rtol=0, atol=1e-9 * max(1.0, u.T)):
        raise ValueError("state times are not on the control grid")
    B = build_B(A, bs[0])
    U = u.samples
    if u.count >= 2:
        dadt = (a[2:] - a[:-2]) / (2.0 * u.dt)
        ode = np.linalg.norm(dadt - U[1:] @ B.matrix, axis=1)
        ode_max = float(ode.max())
        worst_ode_t = float(ts[1 + int(ode.argmax())])
    else:
        dadt = (a[1] - a[0]) / u.dt
        ode_max = float(np.linalg.norm(dadt - U[0] @ B.matrix))
        worst_ode_t = 0.0
    gaps = np.array([subdiff_gap(N, U[k], a[k]) for k in range(u.count)])
    vertical = float(np.max(np.abs(bs - bs[0])))
    violations = []
    if ode_max > tol:
        violations.append(f"ODE residual {ode_max:.3e} > {tol:g} (worst at t={worst_ode_t:.6g})")
    if gaps.max() > tol:
        violations.append(f"subdifferential gap {gaps.max():.3e} > {tol:g}")
    if vertical != 0.0:
        violations.append(f"vertical dual drift {vertical:.3e} != 0")
    return {
        "ode_residual": ode_max,
        "subdiff_residual": float(gaps.max()),
        "vertical_drift": vertical,
        "tol": tol,
        "extremal_within_tol": not violations,
        "violations": violations,
    }


def conserved_quantities(N: NormModel, B: BForm, states, u: ControlSignal) -> dict:
    """Drift of the invariants along a sampled extremal.

    * ``a(t) Y`` for every Y in ker B,
    * the maximized Hamiltonian through ``||a(t)||_*``,
    * the pairing defect ``|a(t) u(t) - ||u(t)||^2|``.
    """
    if isinstance(states, ExtremalRun):
        a = states.a
    else:
        a = np.array([s.a for s in states], dtype=float)
    ker = kernel_B(B)
    if len(ker):
        pair = a @ ker.T
        kernel_drift = np.max(np.abs(pair - pair[0]), axis=0)
    else:
        kernel_drift = np.zeros(0)
    dn = N.dual(a)
    U = u.samples
    n = min(len(U), len(a))
    pairing = np.abs(np.einsum("ij,ij->i", a[:n], U[:n]) - N(U[:n]) ** 2)
    return {
        "kernel_basis": ker.tolist(),
        "kernel_drift": kernel_drift.tolist(),
        "kernel_drift_max": float(kernel_drift.max()) if len(kernel_drift) else 0.0,
        "dual_norm_drift": float(np.max(np.abs(dn - dn[0]))),
        "pairing_defect": float(pairing.max()),
    }
