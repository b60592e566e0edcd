"""Norms on the horizontal layer and the convex analysis of ``E = 1/2 ||.||^2``.

Every norm model exposes the primal norm, its dual norm, and the Legendre
feedback map

    a  |->  argmax_v { a(v) - 1/2 ||v||^2 },

which is the set ``||a||_* . F(a)`` where ``F(a)`` is the face of the unit
ball exposed by ``a``.  For strictly convex norms the face is a single point.
For polyhedral norms the face can be an edge or a facet; the point returned
by :meth:`NormModel.select` is then fixed by a selection rule.

Membership ``a in dE(u)`` is decided by the Fenchel-Young gap

    1/2 ||u||^2 + 1/2 ||a||_*^2 - a(u)  >=  0,

which equals the largest violation of the subgradient inequality over all
``v`` and vanishes exactly on the graph of the subdifferential.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

__all__ = [
    "NormModel",
    "Euclidean",
    "Lp",
    "LInf",
    "L1",
    "Polyhedral",
    "FeedbackSet",
    "SELECTION_RULES",
    "norm",
    "dual_norm",
    "subdiff_contains",
    "subdiff_gap",
    "probe_violation",
    "legendre_feedback",
    "strict_convexity_probe",
    "flat_pair",
    "validate_norm",
    "load_norm",
]

SELECTION_RULES = ("barycenter", "lowest-index-vertex", "fixed-vector")
FACE_RTOL = 1e-12


@dataclass(frozen=True)
class FeedbackSet:
    """``scale * conv(face_vertices)`` together with the selected point."""

    scale: float
    face_vertices: np.ndarray  # (k, r) unit-ball points spanning the face
    selected: np.ndarray

    @property
    def unique(self) -> bool:
        return len(self.face_vertices) <= 1

    @property
    def points(self) -> np.ndarray:
        return self.scale * self.face_vertices

    def contains(self, u, atol: float = 1e-9) -> bool:
        """Membership of ``u`` in the feedback set (small LP on face weights)."""
        u = np.asarray(u, dtype=float)
        pts = self.points
        if len(pts) == 1:
            return bool(np.allclose(u, pts[0], atol=atol))
        from scipy.optimize import nnls

        # Minimize |P^T w - u| + |sum w - 1| over w >= 0.
        k = len(pts)
        M = np.vstack([pts.T, np.ones((1, k))])
        rhs = np.concatenate([u, [1.0]])
        _, resid = nnls(M, rhs)
        return bool(resid <= atol)


class NormModel:
    """Base class; subclasses implement the closed forms."""

    kind = "abstract"
    strictly_convex = False
    polyhedral = False

    def __init__(self, dim: int, selection: str = "barycenter", fixed_vector=None):
        if dim < 1:
            raise ValueError("dimension must be positive")
        if selection not in SELECTION_RULES:
            raise ValueError(f"unknown selection rule {selection!r}")
        if selection == "fixed-vector":
            if fixed_vector is None:
                raise ValueError("fixed-vector selection needs a vector")
            fixed_vector = np.asarray(fixed_vector, dtype=float)
            if fixed_vector.shape != (dim,):
                raise ValueError("fixed vector has the wrong dimension")
        self.dim = dim
        self.selection = selection
        self.fixed_vector = fixed_vector

    # closed forms -------------------------------------------------------
    def __call__(self, X) -> np.ndarray | float:
        raise NotImplementedError

    def dual(self, a) -> np.ndarray | float:
        raise NotImplementedError

    def face(self, a) -> np.ndarray:
        """Vertices of the face of the unit ball exposed by ``a != 0``."""
        raise NotImplementedError

    def select(self, a) -> np.ndarray:
        """Selected maximizer of ``a(v) - 1/2 ||v||^2``; fast path for integrators."""
        a = np.asarray(a, dtype=float)
        s = float(self.dual(a))
        if s == 0.0:
            return np.zeros(self.dim)
        return s * self._pick(self.face(a), s)

    def switch_signature(self, a):
        """Label that changes where the feedback map stops being smooth.

        ``None`` for norms whose feedback is smooth away from the origin.
        """
        return None

    def extreme_points(self) -> np.ndarray:
        """Extreme points of the unit ball when there are finitely many."""
        return np.zeros((0, self.dim))

    def facet_normals(self) -> np.ndarray:
        """Rows ``f_j`` with ``||x|| = max_j f_j . x`` (polyhedral kinds only)."""
        raise TypeError(f"{self.kind} norm is not polyhedral")

    def energy_gradient(self, U) -> np.ndarray:
        """Row-wise gradient of ``1/2 ||u||^2`` (smooth kinds only)."""
        raise TypeError(f"{self.kind} norm is not differentiable")

    def to_dict(self) -> dict:
        raise NotImplementedError

    # helpers ------------------------------------------------------------
    def _pick(self, verts: np.ndarray, scale: float) -> np.ndarray:
        """Unit-ball point of the face chosen by the selection rule."""
        if len(verts) == 1:
            return verts[0]
        if self.selection == "barycenter":
            return verts.mean(axis=0)
        if self.selection == "lowest-index-vertex":
            return verts[0]
        # closest point of scale * face to the user vector
        return _project_onto_hull(self.fixed_vector / scale, verts)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected vectors of length {self.dim}, got {X.shape}")
        return X

    def __repr__(self) -> str:
        return f"{type(self).__name__}({json.dumps(self.to_dict())})"


def _project_onto_hull(w: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``w`` onto ``conv(verts)`` (tiny simplex QP)."""
    from scipy.optimize import minimize

    k = len(verts)
    res = minimize(
        lambda lam: 0.5 * np.sum((lam @ verts - w) ** 2),
        np.full(k, 1.0 / k),
        jac=lambda lam: verts @ (lam @ verts - w),
        bounds=[(0.0, 1.0)] * k,
        constraints=[{"type": "eq", "fun": lambda lam: lam.sum() - 1.0,
                      "jac": lambda lam: np.ones(k)}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 200},
    )
    lam = np.clip(res.x, 0.0, None)
    return (lam / lam.sum()) @ verts


class Euclidean(NormModel):
    """``||v|| = sqrt(v^T M v)`` for a symmetric positive definite M."""

    kind = "euclidean"
    strictly_convex = True

    def __init__(self, metric=None, dim: int | None = None, **kw):
        if metric is None:
            if dim is None:
                raise ValueError("give a metric or a dimension")
            metric = np.eye(dim)
        M = np.array(metric, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("metric must be square")
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError("metric must be symmetric")
        try:
            self._chol = np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise ValueError("metric must be positive definite") from exc
        super().__init__(M.shape[0], **kw)
        self.metric = M
        self.metric.setflags(write=False)
        self._inv = np.linalg.inv(M)

    def __call__(self, X):
        X = self._check(X)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", X, self.metric, X), 0.0))

    def dual(self, a):
        a = self._check(a)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", a, self._inv, a), 0.0))

    def face(self, a):
        v = self._inv @ np.asarray(a, dtype=float)
        return (v / self(v))[None, :]

    def select(self, a):
        return self._inv @ np.asarray(a, dtype=float)

    def energy_gradient(self, U):
        return np.asarray(U, dtype=float) @ self.metric

    def to_dict(self):
        return {"kind": "euclidean", "metric": self.metric.tolist()}


class Lp(NormModel):
    """``l^p`` norm, 1 < p < inf, with dual exponent q = p / (p - 1)."""

    kind = "lp"
    strictly_convex = True

    def __init__(self, p: float, dim: int, **kw):
        p = float(p)
        if not (1.0 < p < np.inf):
            raise ValueError(f"lp exponent must lie in (1, inf), got {p}")
        super().__init__(dim, **kw)
        self.p = p
        self.q = p / (p - 1.0)

    def __call__(self, X):
        X = self._check(X)
        return np.sum(np.abs(X) ** self.p, axis=-1) ** (1.0 / self.p)

    def dual(self, a):
        a = self._check(a)
        return np.sum(np.abs(a) ** self.q, axis=-1) ** (1.0 / self.q)

    def face(self, a):
        u = self.select(a)
        return (u / self(u))[None, :]

    def select(self, a):
        # gradient of 1/2 ||.||_q^2: ||a||_q^(2-q) |a_i|^(q-1) sign(a_i)
        a = np.asarray(a, dtype=float)
        s = float(self.dual(a))
        if s == 0.0:
            return np.zeros(self.dim)
        return s ** (2.0 - self.q) * np.abs(a) ** (self.q - 1.0) * np.sign(a)

    def switch_signature(self, a):
        return np.sign(a).tobytes()

    def energy_gradient(self, U):
        U = np.asarray(U, dtype=float)
        n = self(U)[..., None]
        safe = np.where(n > 0, n, 1.0)
        g = safe ** (2.0 - self.p) * np.abs(U) ** (self.p - 1.0) * np.sign(U)
        return np.where(n > 0, g, 0.0)

    def to_dict(self):
        return {"kind": "lp", "p": self.p}


class LInf(NormModel):
    kind = "linf"
    polyhedral = True

    def __call__(self, X):
        return np.max(np.abs(self._check(X)), axis=-1)

    def dual(self, a):
        return np.sum(np.abs(self._check(a)), axis=-1)

    def face(self, a):
        a = np.asarray(a, dtype=float)
        free = np.abs(a) <= FACE_RTOL * np.abs(a).max()
        base = np.sign(a)
        idx = np.flatnonzero(free)
        verts = []
        for signs in itertools.product((-1.0, 1.0), repeat=len(idx)):
            v = base.copy()
            v[idx] = signs
            verts.append(v)
        return np.array(verts)

    def select(self, a):
        a = np.asarray(a, dtype=float)
        s = float(np.sum(np.abs(a)))
        if s == 0.0:
            return np.zeros(self.dim)
        free = np.abs(a) <= FACE_RTOL * np.abs(a).max()
        v = np.sign(a)
        if free.any():
            if self.selection == "barycenter":
                v[free] = 0.0
            elif self.selection == "lowest-index-vertex":
                v[free] = -1.0
            else:
                v[free] = np.clip(self.fixed_vector[free] / s, -1.0, 1.0)
        return s * v

    def switch_signature(self, a):
        a = np.asarray(a, dtype=float)
        sig = np.sign(a)
        sig[np.abs(a) <= FACE_RTOL * np.abs(a).max()] = 0.0
        return sig.tobytes()

    def extreme_points(self):
        return np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))

    def facet_normals(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye])

    def to_dict(self):
        return {"kind": "linf"}


class L1(NormModel):
    kind = "l1"
    polyhedral = True

    def __call__(self, X):
        return np.sum(np.abs(self._check(X)), axis=-1)

    def dual(self, a):
        return np.max(np.abs(self._check(a)), axis=-1)

    def face(self, a):
        a = np.asarray(a, dtype=float)
        top = np.abs(a).max()
        idx = np.flatnonzero(np.abs(a) >= top * (1.0 - FACE_RTOL))
        verts = np.zeros((len(idx), self.dim))
        verts[np.arange(len(idx)), idx] = np.sign(a[idx])
        return verts

    def switch_signature(self, a):
        return self.face(a).tobytes()

    def extreme_points(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye])

    def facet_normals(self):
        return np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))

    def to_dict(self):
        return {"kind": "l1"}


class Polyhedral(NormModel):
    """Gauge of the convex hull of a centrally symmetric vertex list."""

    kind = "polyhedral"
    polyhedral = True

    def __init__(self, vertices, **kw):
        V = np.array(vertices, dtype=float)
        if V.ndim != 2:
            raise ValueError("vertices must be a (k, r) array")
        dim = V.shape[1]
        super().__init__(dim, **kw)
        if np.linalg.matrix_rank(V) < dim:
            raise ValueError("vertices must span R^r")
        scale = np.abs(V).max()
        for v in V:
            if not np.any(np.all(np.abs(V + v) <= 1e-12 * scale, axis=1)):
                raise ValueError(f"vertex set is not symmetric: -{v.tolist()} missing")
        if dim == 1:
            ext = np.array([[np.abs(V).max()], [-np.abs(V).max()]])
            normals = np.array([[1.0 / ext[0, 0]], [-1.0 / ext[0, 0]]])
        else:
            hull = ConvexHull(V)
            ext = V[np.sort(hull.vertices)]
            eq = hull.equations  # n . x + off <= 0 inside, off < 0
            normals = eq[:, :-1] / (-eq[:, -1:])
            normals = np.unique(np.round(normals, 12), axis=0)
        self.vertices = ext
        self.vertices.setflags(write=False)
        self._normals = normals

    def __call__(self, X):
        X = self._check(X)
        return np.max(X @ self._normals.T, axis=-1)

    def dual(self, a):
        a = self._check(a)
        return np.max(a @ self.vertices.T, axis=-1)

    def face(self, a):
        a = np.asarray(a, dtype=float)
        vals = self.vertices @ a
        top = vals.max()
        tol = FACE_RTOL * max(abs(top), np.abs(vals).max())
        return self.vertices[vals >= top - tol]

    def switch_signature(self, a):
        return self.face(a).tobytes()

    def extreme_points(self):
        return self.vertices

    def facet_normals(self):
        return self._normals

    def to_dict(self):
        return {"kind": "polyhedral", "vertices": self.vertices.tolist(),
                "selection": self.selection}


# -------------------------------------------------------------------------
# operations

def norm(N: NormModel, X):
    return N(X)


def dual_norm(N: NormModel, a):
    return N.dual(a)


def subdiff_gap(N: NormModel, u, a) -> float:
    """Fenchel-Young gap; zero iff ``a`` is a subdifferential of E at ``u``."""
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    return float(0.5 * N(u) ** 2 + 0.5 * N.dual(a) ** 2 - a @ u)


def _probe_set(N: NormModel, u: np.ndarray, n_dir: int = 64) -> np.ndarray:
    nu = float(N(u))
    radii = {0.5 * nu, nu, 2.0 * nu, 1.0}
    radii.discard(0.0)
    theta = 2.0 * np.pi * np.arange(n_dir) / n_dir
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    dirs = []
    r = N.dim
    if r == 1:
        dirs.append(np.array([[1.0], [-1.0]]))
    for i, j in itertools.combinations(range(r), 2):
        d = np.zeros((n_dir, r))
        d[:, i] = circle[:, 0]
        d[:, j] = circle[:, 1]
        dirs.append(d)
    ext = N.extreme_points()
    if len(ext):
        dirs.append(ext)
    D = np.vstack(dirs)
    D = D / N(D)[:, None]
    pts = [rad * D for rad in sorted(radii)]
    pts.append(np.zeros((1, r)))
    return np.vstack(pts)


def probe_violation(N: NormModel, u, a, n_dir: int = 64) -> float:
    """Largest violation of ``a(v-u) <= E(v) - E(u)`` over a deterministic probe set."""
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    V = _probe_set(N, u, n_dir)
    lhs = (V - u) @ a
    rhs = 0.5 * N(V) ** 2 - 0.5 * N(u) ** 2
    return float(np.max(lhs - rhs))


def subdiff_contains(N: NormModel, u, a, tol: float = 0.0, method: str = "exact") -> bool:
    """Whether ``a in d(1/2 ||.||^2)(u)`` up to ``tol``.

    ``method="exact"`` uses the Fenchel-Young certificate; ``"probe"`` checks
    the subgradient inequality on the probe grid only (a necessary test).
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if method == "exact":
        return subdiff_gap(N, u, a) <= tol
    if method == "probe":
        return probe_violation(N, u, a) <= tol
    raise ValueError(f"unknown method {method!r}")


def legendre_feedback(N: NormModel, a) -> FeedbackSet:
    a = np.asarray(N._check(a), dtype=float)
    s = float(N.dual(a))
    if s == 0.0:
        z = np.zeros((1, N.dim))
        return FeedbackSet(0.0, z, z[0])
    return FeedbackSet(s, N.face(a), N.select(a))


def flat_pair(N: NormModel):
    """Two distinct unit vectors whose midpoint is still on the unit sphere.

    Searches pairs of extreme points (edges of polyhedral balls).  Returns
    ``None`` when no such pair exists among them.
    """
    ext = N.extreme_points()
    best = None
    for i, j in itertools.combinations(range(len(ext)), 2):
        u, v = ext[i], ext[j]
        if np.allclose(u, -v):
            continue
        if N(0.5 * (u + v)) >= 1.0 - 1e-12:
            # prefer the pair with the longest flat segment
            length = float(np.linalg.norm(u - v))
            if best is None or length > best[0] + 1e-12:
                best = (length, u, v)
    return None if best is None else (best[1], best[2])


def strict_convexity_probe(N: NormModel, n_samples: int = 256, seed: int = 0) -> bool:
    """False iff some sampled pair of distinct unit vectors has a unit midpoint."""
    if flat_pair(N) is not None:
        return False
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_samples, N.dim))
    V = rng.standard_normal((n_samples, N.dim))
    U /= N(U)[:, None]
    V /= N(V)[:, None]
    far = np.linalg.norm(U - V, axis=1) > 1e-6
    mid = N(0.5 * (U + V))
    return not bool(np.any(far & (mid >= 1.0 - 1e-12)))


def validate_norm(N: NormModel, n_samples: int = 200, seed: int = 0) -> tuple[bool, str]:
    """Probe positive homogeneity and the triangle inequality on random vectors."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, N.dim))
    Y = rng.standard_normal((n_samples, N.dim))
    lam = rng.uniform(0.1, 10.0, n_samples)
    nx, ny = N(X), N(Y)
    if np.any(nx <= 0):
        return False, "positivity fails"
    if not np.allclose(N(lam[:, None] * X), lam * nx, rtol=1e-12, atol=0):
        return False, "positive homogeneity fails"
    if np.any(N(X + Y) > nx + ny + 1e-12 * (nx + ny)):
        return False, "triangle inequality fails"
    return True, "ok"


def load_norm(ref, dim: int) -> NormModel:
    """Resolve ``"euclidean"``, ``"lp:4"``, ``"linf"``, ``"l1"``, a dict, or a JSON path."""
    if isinstance(ref, NormModel):
        if ref.dim != dim:
            raise ValueError(f"norm dimension {ref.dim} != rank {dim}")
        return ref
    if isinstance(ref, dict):
        spec = dict(ref)
        kind = spec.pop("kind")
        selection = spec.pop("selection", "barycenter")
        fixed = spec.pop("fixed_vector", None)
        kw = {"selection": selection, "fixed_vector": fixed}
        if kind == "euclidean":
            metric = spec.get("metric")
            return Euclidean(metric if metric is not None else np.eye(dim), **kw)
        if kind == "lp":
            return Lp(spec["p"], dim, **kw)
        if kind == "linf":
            return LInf(dim, **kw)
        if kind == "l1":
            return L1(dim, **kw)
        if kind == "polyhedral":
            return Polyhedral(spec["vertices"], **kw)
        raise ValueError(f"unknown norm kind {kind!r}")
    text = str(ref)
    if text in ("euclidean", "linf", "l1"):
        return load_norm({"kind": text}, dim)
    if text.startswith("lp:"):
        return load_norm({"kind": "lp", "p": float(text[3:])}, dim)
    path = Path(text)
    if path.exists():
        return load_norm(json.loads(path.read_text()), dim)
    raise ValueError(f"unknown norm reference {ref!r}")
