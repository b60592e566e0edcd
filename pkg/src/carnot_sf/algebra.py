"""Step-2 stratified groups in exponential coordinates.

A point of the group is stored as its logarithm ``(x, z)`` with ``x`` in the
horizontal layer V1 = R^r and ``z`` in the vertical layer V2 = R^m.  In step 2
the Baker-Campbell-Hausdorff series stops after the first bracket, so the
group law

    (x, z) * (x', z') = (x + x', z + z' + 1/2 [x, x'])

is exact and no truncation happens anywhere in this module.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "StepTwoAlgebra",
    "GroupPoint",
    "bracket",
    "multiply",
    "inverse",
    "dilate",
    "multiply_coords",
    "inverse_coords",
    "dilate_coords",
    "validate_stratified",
    "exp_horizontal",
    "heisenberg",
    "free_step_two",
    "load_group",
]

RANK_RTOL = 1e-10


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class StepTwoAlgebra:
    """Structure constants ``c[k, i, j]`` with ``[X_i, X_j] = sum_k c[k, i, j] Z_k``.

    With ``check=True`` (the default) the constants must be skew-symmetric and
    their bracket images must span R^m; otherwise ``ValueError`` is raised.
    ``check=False`` admits arbitrary tensors so that :func:`validate_stratified`
    can diagnose them.
    """

    def __init__(self, structure, *, name: str | None = None, check: bool = True):
        c = np.asarray(structure, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ValueError(f"structure tensor must have shape (m, r, r), got {c.shape}")
        m, r, _ = c.shape
        if r < 1:
            raise ValueError("rank must be positive")
        if m > r * (r - 1) // 2:
            raise ValueError(f"vdim {m} exceeds r(r-1)/2 = {r * (r - 1) // 2}")
        if not np.all(np.isfinite(c)):
            raise ValueError("structure constants must be finite")
        self.structure = _frozen(c)
        self.name = name
        if check:
            ok, msg = validate_stratified(self)
            if not ok:
                raise ValueError(f"not a step-2 stratified algebra: {msg}")

    @property
    def rank(self) -> int:
        return self.structure.shape[1]

    @property
    def vdim(self) -> int:
        return self.structure.shape[0]

    @property
    def dim(self) -> int:
        return self.rank + self.vdim

    @classmethod
    def from_brackets(cls, rank: int, vdim: int, brackets, *, name=None, check=True):
        """Build from ``[{"i": 1, "j": 2, "k": 1, "coeff": 1.0}, ...]`` (1-based).

        Each entry sets ``[X_i, X_j]`` and its skew partner ``[X_j, X_i]``.
        """
        c = np.zeros((vdim, rank, rank))
        for b in brackets:
            i, j, k = int(b["i"]) - 1, int(b["j"]) - 1, int(b["k"]) - 1
            coeff = float(b.get("coeff", 1.0))
            if not (0 <= i < rank and 0 <= j < rank and 0 <= k < vdim):
                raise ValueError(f"bracket index out of range: {b}")
            if i == j:
                if coeff != 0.0:
                    raise ValueError(f"[X_{i + 1}, X_{i + 1}] must vanish")
                continue
            c[k, i, j] = coeff
            c[k, j, i] = -coeff
        return cls(c, name=name, check=check)

    def to_dict(self) -> dict:
        brackets = []
        m, r, _ = self.structure.shape
        for k in range(m):
            for i in range(r):
                for j in range(i + 1, r):
                    v = float(self.structure[k, i, j])
                    if v != 0.0:
                        brackets.append({"i": i + 1, "j": j + 1, "k": k + 1, "coeff": v})
        return {"rank": self.rank, "vdim": self.vdim, "brackets": brackets}

    def identity(self) -> "GroupPoint":
        return GroupPoint(np.zeros(self.rank), np.zeros(self.vdim))

    def point(self, x, z=None) -> "GroupPoint":
        z = np.zeros(self.vdim) if z is None else z
        g = GroupPoint(x, z)
        _check_point(self, g)
        return g

    def __repr__(self) -> str:
        label = self.name or "custom"
        return f"StepTwoAlgebra({label}, rank={self.rank}, vdim={self.vdim})"


@dataclass(frozen=True)
class GroupPoint:
    """Exponential coordinates of a group element."""

    x: np.ndarray
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        x = _frozen(np.atleast_1d(self.x))
        z = _frozen(np.atleast_1d(self.z))
        if not (np.isfinite(x).all() and np.isfinite(z).all()):
            raise ValueError("group point coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.z])

    def __eq__(self, other):
        if not isinstance(other, GroupPoint):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.z, other.z)

    def __hash__(self):
        return hash((self.x.tobytes(), self.z.tobytes()))

    def allclose(self, other: "GroupPoint", atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.x, other.x, rtol=0, atol=atol)
            and np.allclose(self.z, other.z, rtol=0, atol=atol)
        )


def _check_point(A: StepTwoAlgebra, g: GroupPoint) -> None:
    if g.x.shape != (A.rank,) or g.z.shape != (A.vdim,):
        raise ValueError(
            f"point of shape ({g.x.shape}, {g.z.shape}) does not match {A!r}"
        )


def bracket(A: StepTwoAlgebra, X, Y) -> np.ndarray:
    """Vertical vector ``[X, Y]``; broadcasts over leading axes of X and Y."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[-1] != A.rank or Y.shape[-1] != A.rank:
        raise ValueError(f"horizontal vectors must have length {A.rank}")
    if X.ndim == 1 and Y.ndim == 1:
        return A.structure @ Y @ X
    return np.einsum("kij,...i,...j->...k", A.structure, X, Y)


def multiply(A: StepTwoAlgebra, g: GroupPoint, h: GroupPoint) -> GroupPoint:
    _check_point(A, g)
    _check_point(A, h)
    return GroupPoint(g.x + h.x, g.z + h.z + 0.5 * bracket(A, g.x, h.x))


def inverse(A: StepTwoAlgebra, g: GroupPoint) -> GroupPoint:
    _check_point(A, g)
    return GroupPoint(-g.x, -g.z)


def dilate(A: StepTwoAlgebra, lam: float, g: GroupPoint) -> GroupPoint:
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    _check_point(A, g)
    return GroupPoint(lam * g.x, lam * lam * g.z)


# Batched versions on coordinate arrays of shape (..., rank + vdim).

def _split(A: StepTwoAlgebra, G) -> tuple[np.ndarray, np.ndarray]:
    G = np.asarray(G, dtype=float)
    if G.shape[-1] != A.dim:
        raise ValueError(f"coordinate arrays must end in an axis of length {A.dim}")
    return G[..., :A.rank], G[..., A.rank:]


def multiply_coords(A: StepTwoAlgebra, G, H) -> np.ndarray:
    gx, gz = _split(A, G)
    hx, hz = _split(A, H)
    return np.concatenate([gx + hx, gz + hz + 0.5 * bracket(A, gx, hx)], axis=-1)


def inverse_coords(A: StepTwoAlgebra, G) -> np.ndarray:
    _split(A, G)
    return -np.asarray(G, dtype=float)


def dilate_coords(A: StepTwoAlgebra, lam, G) -> np.ndarray:
    """``lam`` may be a scalar or broadcast against the leading axes of G."""
    lam = np.asarray(lam, dtype=float)
    if not np.all(lam > 0):
        raise ValueError("dilation factors must be positive")
    x, z = _split(A, G)
    lam = lam[..., None]
    return np.concatenate([lam * x, lam * lam * z], axis=-1)


def exp_horizontal(A: StepTwoAlgebra, X) -> GroupPoint:
    """``exp(X)`` for horizontal X: the vertical part is zero."""
    return A.point(np.asarray(X, dtype=float))


def validate_stratified(A: StepTwoAlgebra) -> tuple[bool, str]:
    """Check skew-symmetry and that [V1, V1] spans V2.

    Returns ``(ok, diagnostic)``; never raises.
    """
    c = A.structure
    m, r, _ = c.shape
    if not np.array_equal(c, -np.transpose(c, (0, 2, 1))):
        k, i, j = np.argwhere(c != -np.transpose(c, (0, 2, 1)))[0]
        return False, (
            f"skew-symmetry fails: c[{k + 1}][{i + 1}][{j + 1}]={c[k, i, j]} "
            f"but c[{k + 1}][{j + 1}][{i + 1}]={c[k, j, i]}"
        )
    if m == 0:
        return True, "ok (abelian, V2 = 0)"
    iu, ju = np.triu_indices(r, k=1)
    images = c[:, iu, ju]  # (m, r(r-1)/2)
    s = np.linalg.svd(images, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False, "all brackets vanish but vdim > 0"
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    if rank < m:
        return False, f"[V1, V1] spans only {rank} of {m} vertical dimensions"
    return True, "ok"


def heisenberg(n: int = 1) -> StepTwoAlgebra:
    """H^n with basis X_1..X_n, Y_1..Y_n and [X_i, Y_i] = Z."""
    if n < 1:
        raise ValueError("Heisenberg index must be >= 1")
    c = np.zeros((1, 2 * n, 2 * n))
    for i in range(n):
        c[0, i, n + i] = 1.0
        c[0, n + i, i] = -1.0
    return StepTwoAlgebra(c, name=f"heisenberg:{n}")


def free_step_two(r: int) -> StepTwoAlgebra:
    """Free step-2 algebra of rank r; V2 basis is [X_i, X_j], i < j, lexicographic."""
    if r < 2:
        raise ValueError("free step-2 algebra needs rank >= 2")
    pairs = [(i, j) for i in range(r) for j in range(i + 1, r)]
    c = np.zeros((len(pairs), r, r))
    for k, (i, j) in enumerate(pairs):
        c[k, i, j] = 1.0
        c[k, j, i] = -1.0
    return StepTwoAlgebra(c, name=f"free2:{r}")


_BUILTIN = re.compile(r"^(heisenberg|free2):(\d+)$")


def load_group(ref) -> StepTwoAlgebra:
    """Resolve ``"heisenberg:n"``, ``"free2:r"``, a JSON path, or a dict."""
    if isinstance(ref, StepTwoAlgebra):
        return ref
    if isinstance(ref, dict):
        return StepTwoAlgebra.from_brackets(ref["rank"], ref["vdim"], ref["brackets"])
    match = _BUILTIN.match(str(ref))
    if match:
        kind, n = match.group(1), int(match.group(2))
        return heisenberg(n) if kind == "heisenberg" else free_step_two(n)
    path = Path(ref)
    if path.exists():
        return load_group(json.loads(path.read_text()))
    raise ValueError(f"unknown group reference {ref!r}")
