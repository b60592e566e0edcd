"""Brute-force upper bounds on the sub-Finsler distance.

The distance is approached by direct transcription: ``n_steps`` constant
controls on normalized time ``[0, 1]``, minimum energy subject to the exact
endpoint constraint, several randomized restarts.  Whatever the optimizer
returns is projected back onto the constraint and measured with the true
norm, so the reported value is the length of an explicit feasible curve and
therefore an upper bound on ``d_SF``.  Nothing here ever claims a lower bound.

This module shares no code with :mod:`carnot_sf.pmp`; it is the independent
check on extremals.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import logsumexp, softmax

from .algebra import GroupPoint, StepTwoAlgebra, _check_point, dilate, inverse, multiply
from .control import ControlSignal, Trajectory, resample
from .norms import NormModel

__all__ = [
    "TranscriptionProblem",
    "OracleResult",
    "OracleInfeasibleError",
    "sf_distance_upper",
    "oracle_distance",
    "is_geodesic_segment",
    "geodesic_segment_report",
    "submetry_gap",
    "sublinear_ratio",
    "heisenberg_euclidean_distance",
    "max_workers",
]


# temperatures for the smoothed polyhedral gauge, on the unit-gauge problem
SMOOTHING_SCHEDULE = (0.2, 0.05, 0.01, 0.002, 0.0005)


class OracleInfeasibleError(RuntimeError):
    pass


def max_workers() -> int:
    """Concurrency cap from ``CARNOT_SF_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("CARNOT_SF_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TranscriptionProblem:
    group: StepTwoAlgebra
    norm: NormModel
    g: GroupPoint
    h: GroupPoint
    n_steps: int = 64
    restarts: int = 16
    seed: int = 0
    endpoint_tol: float = 1e-8
    maxiter: int = 400
    warm_start: ControlSignal | None = None

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        if self.restarts < 1:
            raise ValueError("need at least one restart")
        if self.norm.dim != self.group.rank:
            raise ValueError("norm dimension does not match the group rank")
        _check_point(self.group, self.g)
        _check_point(self.group, self.h)


@dataclass(frozen=True)
class OracleResult:
    value: float
    control: ControlSignal
    feasibility: float
    n_steps: int
    restarts: int
    seed: int
    restart_values: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "feasibility": self.feasibility,
            "N": self.n_steps,
            "restarts": self.restarts,
            "seed": self.seed,
            "restart_values": self.restart_values,
        }


class _Transcription:
    """Endpoint map ``u -> g * exp(dt u_0) ... exp(dt u_{n-1})`` and its Jacobian."""

    def __init__(self, A: StepTwoAlgebra, g: GroupPoint, h: GroupPoint, n: int):
        self.C = A.structure
        self.r, self.m, self.n = A.rank, A.vdim, n
        self.dt = 1.0 / n
        self.gx, self.gz = g.x, g.z
        self.hx, self.hz = h.x, h.z
        self.gC = np.einsum("mij,i->mj", self.C, self.gx)  # g.x^T C_m

    def residual(self, U: np.ndarray) -> np.ndarray:
        dt = self.dt
        steps = dt * U
        P = np.cumsum(steps, axis=0) - steps  # position before each step
        ex = steps.sum(axis=0)
        ez = 0.5 * np.einsum("mij,ki,kj->m", self.C, P, steps)
        cx = self.gx + ex - self.hx
        cz = self.gz + ez + 0.5 * self.gC @ ex - self.hz
        return np.concatenate([cx, cz])

    def jacobian(self, U: np.ndarray) -> np.ndarray:
        dt, n, r, m = self.dt, self.n, self.r, self.m
        steps = dt * U
        total = steps.sum(axis=0)
        P = np.cumsum(steps, axis=0) - steps
        Q = total - P - steps
        J = np.zeros((r + m, n, r))
        J[:r] = dt * np.eye(r)[:, None, :]
        # d z_m / d u_k = dt/2 (C_m (Q_k - P_k) + C_m^T g.x)
        J[r:] = 0.5 * dt * (
            np.einsum("mij,kj->mki", self.C, Q - P) + self.gC[:, None, :]
        )
        return J.reshape(r + m, n * r)


def _initial_guesses(prob: TranscriptionProblem, tr: _Transcription, scale: float):
    n, r = prob.n_steps, prob.group.rank
    t = (np.arange(n) + 0.5) / n
    base = np.broadcast_to(tr.hx - tr.gx, (n, r))
    for i in range(prob.restarts):
        rng = np.random.default_rng([prob.seed, i])
        if i == 0 and prob.warm_start is not None:
            w = resample(prob.warm_start, prob.warm_start.T / n, prob.warm_start.T).samples
            yield w * prob.warm_start.T / scale
            continue
        amp = 0.05 if i == 0 else rng.uniform(0.3, 2.0)
        loop = np.zeros((n, r))
        for f in (1, 2, 3):
            alpha = rng.standard_normal(r)
            beta = rng.standard_normal(r)
            loop += (np.outer(np.cos(2 * np.pi * f * t), alpha)
                     + np.outer(np.sin(2 * np.pi * f * t), beta)) / f
        yield base + amp * loop


def _project(tr: _Transcription, U: np.ndarray, tol: float) -> tuple[np.ndarray, float]:
    """Gauss-Newton minimum-norm corrections onto the endpoint constraint."""
    U = U.copy()
    res = tr.residual(U)
    for _ in range(30):
        if np.max(np.abs(res)) <= tol:
            break
        J = tr.jacobian(U)
        delta, *_ = np.linalg.lstsq(J, res, rcond=None)
        U -= delta.reshape(U.shape)
        res = tr.residual(U)
    return U, float(np.max(np.abs(res)))


def _solve_smooth(tr: _Transcription, N: NormModel, U0: np.ndarray, maxiter: int) -> np.ndarray:
    shape = U0.shape
    dt = tr.dt

    def f(w):
        U = w.reshape(shape)
        return 0.5 * dt * float(np.sum(N(U) ** 2))

    def grad(w):
        return dt * N.energy_gradient(w.reshape(shape)).ravel()

    res = minimize(
        f, U0.ravel(), jac=grad, method="SLSQP",
        constraints=[{"type": "eq",
                      "fun": lambda w: tr.residual(w.reshape(shape)),
                      "jac": lambda w: tr.jacobian(w.reshape(shape))}],
        options={"maxiter": maxiter, "ftol": 1e-12},
    )
    return res.x.reshape(shape)


def _smoothed_gauge(U: np.ndarray, F: np.ndarray, tau: float, dt: float):
    """Energy of the log-sum-exp smoothing of ``max_j f_j . u``, with gradient
    and per-sample Hessians."""
    Z = U @ F.T / tau
    g = tau * logsumexp(Z, axis=1)
    P = softmax(Z, axis=1)
    G = P @ F
    GG = np.einsum("ki,kl->kil", G, G)
    FPF = np.einsum("kj,ji,jl->kil", P, F, F)
    f = 0.5 * dt * float(g @ g)
    grad = dt * g[:, None] * G
    hess = dt * (GG + g[:, None, None] * (FPF - GG) / tau)
    return f, grad, hess


def _newton_sqp(tr: _Transcription, F: np.ndarray, U: np.ndarray, tau: float, maxiter: int) -> np.ndarray:
    # The endpoint constraint is quadratic with a constant Hessian, so exact
    # Newton-KKT steps are cheap.  Indefinite Lagrangian Hessians are shifted
    # to positive definite; an l1 merit function with backtracking globalizes.
    n, r = U.shape
    dt = tr.dt
    nv, nc = n * r, tr.r + tr.m
    order = np.arange(n)
    S = np.sign(order[None, :] - order[:, None]).astype(float)
    lam = np.zeros(nc)
    rho = 1.0

    def merit(V):
        return _smoothed_gauge(V, F, tau, dt)[0] + rho * float(np.abs(tr.residual(V)).sum())

    for _ in range(maxiter):
        _, grad, hk = _smoothed_gauge(U, F, tau, dt)
        c = tr.residual(U)
        J = tr.jacobian(U)
        H = 0.5 * dt * dt * np.kron(S, np.einsum("m,mij->ij", lam[tr.r:], tr.C))
        for k in range(n):
            H[k * r:(k + 1) * r, k * r:(k + 1) * r] += hk[k]
        shift = max(0.0, -np.linalg.eigvalsh(H)[0]) + 1e-6 * dt
        K = np.zeros((nv + nc, nv + nc))
        K[:nv, :nv] = H + shift * np.eye(nv)
        K[:nv, nv:] = J.T
        K[nv:, :nv] = J
        try:
            sol = np.linalg.solve(K, -np.concatenate([grad.ravel(), c]))
        except np.linalg.LinAlgError:
            break
        d = sol[:nv].reshape(n, r)
        lam_new = sol[nv:]
        rho = max(rho, 2.0 * float(np.abs(lam_new).max()))
        slope = float(grad.ravel() @ d.ravel()) - rho * float(np.abs(c).sum())
        m0 = merit(U)
        step = 1.0
        for _ in range(40):
            if merit(U + step * d) <= m0 + 1e-4 * step * slope:
                break
            step *= 0.5
        U = U + step * d
        lam = lam + step * (lam_new - lam)
        if np.abs(step * d).max() < 1e-11 and np.abs(c).max() < 1e-11:
            break
    return U


def _solve_polyhedral(tr: _Transcription, N: NormModel, U0: np.ndarray, maxiter: int) -> np.ndarray:
    F = N.facet_normals()
    U = U0
    for tau in SMOOTHING_SCHEDULE:
        U = _newton_sqp(tr, F, U, tau, min(maxiter, 60))
    return U


def _gauge(A: StepTwoAlgebra, g: GroupPoint) -> float:
    return float(np.linalg.norm(g.x) + np.sqrt(np.linalg.norm(g.z)))


def sf_distance_upper(prob: TranscriptionProblem) -> OracleResult:
    """Best feasible length over all restarts, with its control.

    The returned control lives on normalized time ``[0, 1]`` and develops
    from ``g`` to ``h`` up to ``prob.endpoint_tol`` in every coordinate.
    """
    A, N = prob.group, prob.norm
    n = prob.n_steps
    rel = multiply(A, inverse(A, prob.g), prob.h)
    scale = _gauge(A, rel)
    if scale == 0.0:
        zero = ControlSignal(1.0 / n, np.zeros((n, A.rank)))
        return OracleResult(0.0, zero, 0.0, n, prob.restarts, prob.seed, [0.0])

    # solve the dilated problem, whose relative displacement has unit gauge
    g = dilate(A, 1.0 / scale, prob.g)
    h = dilate(A, 1.0 / scale, prob.h)
    tr = _Transcription(A, g, h, n)
    solve = _solve_polyhedral if N.polyhedral else _solve_smooth
    # feasibility target in the dilated problem: x scales by s, z by s^2
    tol = prob.endpoint_tol / max(scale, scale**2, 1.0)

    def attempt(U0):
        with np.errstate(all="ignore"):
            U = solve(tr, N, U0, prob.maxiter)
        if not np.all(np.isfinite(U)):
            U = U0
        U, feas = _project(tr, U, 0.1 * tol)
        if feas > tol or not np.all(np.isfinite(U)):
            return None
        return float(np.sum(N(U)) / n * scale), U, feas

    guesses = list(_initial_guesses(prob, tr, scale))
    workers = min(max_workers(), len(guesses))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(attempt, guesses))
    else:
        outcomes = [attempt(U0) for U0 in guesses]

    values = [None if o is None else o[0] for o in outcomes]
    feasible = [o for o in outcomes if o is not None]
    if not feasible:
        raise OracleInfeasibleError(
            f"no restart reached the endpoint within {prob.endpoint_tol:g}"
        )
    best = min(feasible, key=lambda o: o[0])
    value, U, feas = best
    control = ControlSignal(1.0 / n, U * scale)
    feas_orig = float(feas * max(scale, scale**2, 1.0))
    return OracleResult(value, control, feas_orig, n, prob.restarts, prob.seed, values)


def oracle_distance(A, N, g, h, **opts) -> float:
    return sf_distance_upper(TranscriptionProblem(A, N, g, h, **opts)).value


def geodesic_segment_report(A, N, traj: Trajectory, i: int, j: int, rel_tol: float, **opts) -> dict:
    """Try to beat the segment ``traj[i..j]`` with the oracle."""
    if not (0 <= i < j < len(traj)):
        raise IndexError(f"segment ({i}, {j}) outside a trajectory of {len(traj)} points")
    length = (j - i) * traj.dt
    try:
        res = sf_distance_upper(TranscriptionProblem(A, N, traj.point(i), traj.point(j), **opts))
        value, info = res.value, res.to_dict()
    except OracleInfeasibleError as exc:
        value, info = float("inf"), {"error": str(exc)}
    return {
        "i": i,
        "j": j,
        "t0": i * traj.dt,
        "t1": j * traj.dt,
        "segment_length": length,
        "oracle_value": value,
        "ratio": value / length,
        "rel_tol": rel_tol,
        "not_beaten": bool(value >= length * (1.0 - rel_tol)),
        "oracle": info,
    }


def is_geodesic_segment(A, N, traj: Trajectory, i: int, j: int, rel_tol: float, **opts) -> bool:
    """True iff the oracle found nothing shorter than ``(j - i) dt (1 - rel_tol)``.

    Assumes the trajectory is parametrized by arc length.  A True verdict only
    means "not beaten at this resolution".
    """
    return geodesic_segment_report(A, N, traj, i, j, rel_tol, **opts)["not_beaten"]


def submetry_gap(A, N_proj: NormModel, samples, rel_tol: float = 1e-2, **opts) -> dict:
    """``d(e, exp(X + Y)) - ||X||`` over samples ``(X, Y)``, Y vertical.

    Also compares ``d(e, exp(X))`` with ``||X||`` for every sampled X.
    """
    e = A.identity()
    gaps, proj_err = [], []
    for X, Y in samples:
        X = np.asarray(X, dtype=float)
        nx = float(N_proj(X))
        d_full = oracle_distance(A, N_proj, e, A.point(X, Y), **opts)
        gaps.append(d_full - nx)
        if nx > 0:
            d_hor = oracle_distance(A, N_proj, e, A.point(X), **opts)
            proj_err.append(abs(d_hor - nx) / nx)
    gaps = np.array(gaps)
    proj_err = np.array(proj_err) if proj_err else np.zeros(1)
    return {
        "min_gap": float(gaps.min()),
        "gaps": gaps.tolist(),
        "projection_norm_max_rel_err": float(proj_err.max()),
        "projection_norm_ok": bool(proj_err.max() <= rel_tol),
        "rel_tol": rel_tol,
    }


def sublinear_ratio(A, N, g, h, X, Y, t_ladder, **opts) -> list[tuple[float, float]]:
    """``(t, d(g exp(tX), h exp(tY)) / t)`` along the ladder."""
    out = []
    for t in t_ladder:
        p = multiply(A, g, A.point(t * np.asarray(X, dtype=float)))
        q = multiply(A, h, A.point(t * np.asarray(Y, dtype=float)))
        out.append((float(t), oracle_distance(A, N, p, q, **opts) / float(t)))
    return out


def heisenberg_euclidean_distance(x, z: float) -> float:
    """Closed-form distance from e to ``(x, z)`` in H^1 with the identity metric.

    Minimizers are lifts of circular arcs.  An arc of radius R and angle
    ``phi`` in ``[0, 2 pi]`` has chord ``rho = 2 R sin(phi/2)`` and encloses
    ``|z| = R^2 (phi - sin phi) / 2`` with its chord; its length is ``R phi``.
    """
    rho = float(np.hypot(*np.asarray(x, dtype=float)))
    z = abs(float(z))
    if z == 0.0:
        return rho
    if rho == 0.0:
        return float(np.sqrt(4.0 * np.pi * z))
    target = z / rho**2

    def mu(phi):
        return (phi - np.sin(phi)) / (8.0 * np.sin(phi / 2.0) ** 2) - target

    hi = 2.0 * np.pi - 1e-12
    while mu(hi) < 0:  # mu blows up at 2 pi; only hit for absurd ratios
        hi = 0.5 * (hi + 2.0 * np.pi)
    phi = brentq(mu, 1e-12, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    R = rho / (2.0 * np.sin(phi / 2.0))
    return float(R * phi)
