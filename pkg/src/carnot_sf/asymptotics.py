"""Long-time behaviour of extremal controls.

Along an extremal ``a(T) X - a(0) X = int_0^T B(u, X) dt`` and ``|a(t) X|`` is
bounded, so ``B(avg_[0,T] u, X)`` decays like ``1/T``.  Applied to dilated
controls this pushes every blowdown control into ``ker B``.  The functions
here measure both effects on sampled controls; they report evidence on
finitely many windows and never claim convergence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import ControlSignal, average, dilate_control
from .pmp import BForm

__all__ = [
    "DecayProfile",
    "average_decay_profile",
    "dyadic_windows",
    "window_average_by_difference",
    "kernel_membership_check",
    "affinity_detector",
]


@dataclass(frozen=True)
class DecayProfile:
    T: np.ndarray
    values: np.ndarray
    X: np.ndarray
    C: float

    def bound_holds(self, const: float) -> bool:
        return bool(np.all(self.values <= const / self.T))

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["T", "value", "bound_2_over_T"])
            for T, v in zip(self.T, self.values):
                w.writerow([repr(float(T)), repr(float(v)), repr(2.0 / float(T))])

    def to_dict(self) -> dict:
        return {"T": self.T.tolist(), "values": self.values.tolist(),
                "X": self.X.tolist(), "C": self.C}


def average_decay_profile(u: ControlSignal, B: BForm, X, T_ladder) -> DecayProfile:
    """``|B(avg_[0,T] u, X)|`` along a ladder of horizons, with ``C = max T * value``."""
    T_ladder = np.asarray(T_ladder, dtype=float)
    if np.any(np.diff(T_ladder) <= 0):
        raise ValueError("T ladder must be strictly increasing")
    if T_ladder.max() > u.T * (1 + 1e-12):
        raise ValueError(f"ladder reaches {T_ladder.max()} beyond the horizon {u.T}")
    X = np.asarray(X, dtype=float)
    vals = np.array([abs(float(B(average(u, 0.0, T), X))) for T in T_ladder])
    return DecayProfile(T_ladder, vals, X, float(np.max(vals * T_ladder)))


def dyadic_windows(t0: float, t1: float, depth: int) -> list[tuple[float, float]]:
    """All dyadic subwindows of ``[t0, t1]`` down to ``2**-depth`` of its length."""
    out = []
    for d in range(depth + 1):
        n = 2**d
        edges = t0 + (t1 - t0) * np.arange(n + 1) / n
        out.extend((float(edges[i]), float(edges[i + 1])) for i in range(n))
    return out


def window_average_by_difference(u: ControlSignal, a: float, b: float, lam: float) -> np.ndarray:
    """``avg_[a lam, b lam] u`` written through averages anchored at 0.

    ``b/(b-a) avg_[0, b lam] - a/(b-a) avg_[0, a lam]``; the second term is
    dropped when ``a = 0``.
    """
    if not 0.0 <= a < b:
        raise ValueError("need 0 <= a < b")
    out = b / (b - a) * average(u, 0.0, b * lam)
    if a > 0:
        out = out - a / (b - a) * average(u, 0.0, a * lam)
    return out


def kernel_membership_check(
    u: ControlSignal,
    B: BForm,
    lambdas,
    window: tuple[float, float] = (0.0, 1.0),
    tol: float = 1e-2,
    depth: int = 2,
) -> dict:
    """Window averages of dilated controls paired with B.

    For each scale ``lam`` the dilated control ``u_lam`` is averaged over all
    dyadic subwindows of ``window`` (down to ``depth`` levels) and the largest
    Euclidean norm of the covector ``B(avg, .)`` is recorded.  The result is
    "consistent" when these maxima decrease along the ladder and the last one
    is below ``tol``.  This is evidence on finitely many windows only.
    """
    lambdas = [float(l) for l in lambdas]
    t0, t1 = window
    wins = dyadic_windows(t0, t1, depth)
    maxima, identity_err = [], 0.0
    for lam in lambdas:
        if lam * t1 > u.T * (1 + 1e-12):
            raise ValueError(f"lam * window end = {lam * t1} exceeds the horizon {u.T}")
        v = dilate_control(u, lam)
        worst = 0.0
        for a, b in wins:
            avg = average(v, a, b)
            worst = max(worst, float(np.linalg.norm(B.pair(avg))))
            identity_err = max(
                identity_err,
                float(np.max(np.abs(avg - window_average_by_difference(u, a, b, lam)))),
            )
        maxima.append(worst)
    maxima_arr = np.array(maxima)
    decreasing = bool(np.all(np.diff(maxima_arr) < 0))
    final_ok = bool(maxima_arr[-1] < tol)
    return {
        "lambdas": lambdas,
        "window": [t0, t1],
        "depth": depth,
        "max_B_avg": maxima,
        "decreasing": decreasing,
        "final_below_tol": final_ok,
        "tol": tol,
        "difference_identity_error": identity_err,
        "consistent": decreasing and final_ok,
        "verdict": "evidence for kernel membership" if decreasing and final_ok
        else "no evidence for kernel membership",
    }


def affinity_detector(u: ControlSignal, tol: float | None = None) -> tuple[bool, np.ndarray]:
    """``(max_k |u_k - mean| <= tol, mean)``; sup norms throughout.

    The default tolerance is ``1e-6`` times the sup norm of the samples.
    """
    S = u.samples
    mean = S.mean(axis=0)
    if tol is None:
        tol = 1e-6 * float(np.max(np.abs(S)))
    osc = float(np.max(np.abs(S - mean)))
    return osc <= tol, mean
