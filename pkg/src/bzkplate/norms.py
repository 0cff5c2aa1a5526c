"""Surface-energy norms psi on R^3, their duals and the relaxed planar norm psi0.

Four families are closed under duality and under the planar relaxation:

* ``euclidean``
* ``weighted_l1``    psi(x) = sum w_i |x_i|
* ``weighted_linf``  psi(x) = max a_i |x_i|   (``linf`` is the all-ones member)
* ``ellipsoidal``    psi(x) = sqrt(x^T M x), M symmetric positive definite
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("euclidean", "weighted_l1", "weighted_linf", "ellipsoidal")


def _freeze(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_params(family: str, params: dict, dim: int) -> dict:
    if family == "linf":
        family = "weighted_linf"
        params = {"a": np.ones(dim)}
    if family not in FAMILIES:
        raise ValueError(f"unknown norm family {family!r}")
    out = {}
    if family == "weighted_l1":
        w = _freeze(params.get("w", np.ones(dim)))
        if w.shape != (dim,) or np.any(w <= 0):
            raise ValueError(f"weighted_l1 needs {dim} positive weights")
        out["w"] = w
    elif family == "weighted_linf":
        a = _freeze(params.get("a", np.ones(dim)))
        if a.shape != (dim,) or np.any(a <= 0):
            raise ValueError(f"weighted_linf needs {dim} positive weights")
        out["a"] = a
    elif family == "ellipsoidal":
        M = np.array(params["M"], dtype=float)
        if M.shape != (dim, dim):
            raise ValueError(f"ellipsoidal norm needs a {dim}x{dim} matrix")
        M = 0.5 * (M + M.T)
        if np.linalg.eigvalsh(M).min() <= 0:
            raise ValueError("ellipsoidal norm matrix must be positive definite")
        out["M"] = _freeze(M)
    return family, out


class _NormBase:
    family: str
    params: dict
    dim: int

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        f = self.family
        if f == "euclidean":
            out = np.sqrt(np.sum(x * x, axis=-1))
        elif f == "weighted_l1":
            out = np.abs(x) @ self.params["w"]
        elif f == "weighted_linf":
            out = np.max(np.abs(x) * self.params["a"], axis=-1)
        else:
            M = self.params["M"]
            out = np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", x, M, x), 0.0))
        return float(out) if np.ndim(out) == 0 else out

    def _dual_params(self):
        f = self.family
        if f == "euclidean":
            return "euclidean", {}
        if f == "weighted_l1":
            return "weighted_linf", {"a": 1.0 / self.params["w"]}
        if f == "weighted_linf":
            return "weighted_l1", {"w": 1.0 / self.params["a"]}
        return "ellipsoidal", {"M": np.linalg.inv(self.params["M"])}

    def lipschitz_to_euclidean(self) -> tuple[float, float]:
        """(lo, hi) with lo |x| <= psi(x) <= hi |x|."""
        f = self.family
        if f == "euclidean":
            return 1.0, 1.0
        if f == "weighted_l1":
            w = self.params["w"]
            return float(w.min()), float(np.sqrt(np.sum(w * w)))
        if f == "weighted_linf":
            a = self.params["a"]
            return float(1.0 / np.sqrt(np.sum(1.0 / a**2))), float(a.max())
        ev = np.linalg.eigvalsh(self.params["M"])
        return float(np.sqrt(ev[0])), float(np.sqrt(ev[-1]))

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for k, v in self.params.items():
            out[k] = np.asarray(v).tolist()
        return out


@dataclass(frozen=True, eq=False)
class Norm3(_NormBase):
    """A norm on R^3 from one of the builtin families."""

    family: str
    params: dict = field(default_factory=dict)
    dim = 3

    def __post_init__(self):
        fam, params = _check_params(self.family, dict(self.params), 3)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", params)

    @classmethod
    def euclidean(cls) -> "Norm3":
        return cls("euclidean")

    @classmethod
    def weighted_l1(cls, w) -> "Norm3":
        return cls("weighted_l1", {"w": w})

    @classmethod
    def weighted_linf(cls, a) -> "Norm3":
        return cls("weighted_linf", {"a": a})

    @classmethod
    def linf(cls) -> "Norm3":
        return cls("linf")

    @classmethod
    def ellipsoidal(cls, M) -> "Norm3":
        return cls("ellipsoidal", {"M": M})

    @classmethod
    def from_dict(cls, spec: dict) -> "Norm3":
        spec = dict(spec)
        fam = spec.pop("family")
        return cls(fam, spec)

    def dual(self) -> "Norm3":
        fam, params = self._dual_params()
        return Norm3(fam, params)

    def vertical_minimum(self) -> float:
        """m = min(psi(0,0,1), psi(0,0,-1))."""
        e3 = np.array([0.0, 0.0, 1.0])
        return min(self(e3), self(-e3))

    def relaxed(self) -> "Norm2":
        """psi0(x') = min_c psi(x', c) in closed form."""
        f = self.family
        if f == "euclidean":
            return Norm2("euclidean")
        if f == "weighted_l1":
            return Norm2("weighted_l1", {"w": self.params["w"][:2]})
        if f == "weighted_linf":
            return Norm2("weighted_linf", {"a": self.params["a"][:2]})
        M = self.params["M"]
        m = M[:2, 2]
        return Norm2("ellipsoidal", {"M": M[:2, :2] - np.outer(m, m) / M[2, 2]})

    def relaxed_argmin(self, xp) -> np.ndarray | float:
        """Closed-form minimizing third component for psi0 (minimum-|c| on ties)."""
        xp = np.asarray(xp, dtype=float)
        if self.family == "ellipsoidal":
            M = self.params["M"]
            out = -(xp @ M[:2, 2]) / M[2, 2]
        else:
            out = np.zeros(xp.shape[:-1])
        return float(out) if np.ndim(out) == 0 else out

    def wulff_rolling_factor(self) -> float:
        """Interior rolling factor of the Wulff shape {dual <= 1} of an ellipsoidal norm.

        The Wulff shape is an ellipsoid with semi-axes sqrt(lambda_i(M)); the
        factor is a_min / a_max^2 = sqrt(lambda_min) / lambda_max.
        """
        if self.family == "euclidean":
            return 1.0
        if self.family != "ellipsoidal":
            raise ValueError("rolling factor needs a smooth uniformly convex norm")
        ev = np.linalg.eigvalsh(self.params["M"])
        return float(np.sqrt(ev[0]) / ev[-1])

    def axis_extent(self) -> np.ndarray:
        """Half-widths of the dual unit ball along the axes, i.e. psi(e_i)."""
        return np.array([self(e) for e in np.eye(3)])


@dataclass(frozen=True, eq=False)
class Norm2(_NormBase):
    """A norm on R^2 (the relaxed norms and their duals)."""

    family: str
    params: dict = field(default_factory=dict)
    dim = 2

    def __post_init__(self):
        fam, params = _check_params(self.family, dict(self.params), 2)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", params)

    def dual(self) -> "Norm2":
        fam, params = self._dual_params()
        return Norm2(fam, params)

    def unit_ball(self):
        """("ellipse", T) with ball = T(unit disk), or ("polygon", CCW vertices)."""
        f = self.family
        if f == "euclidean":
            return "ellipse", np.eye(2)
        if f == "ellipsoidal":
            ev, V = np.linalg.eigh(self.params["M"])
            return "ellipse", V @ np.diag(ev**-0.5) @ V.T
        if f == "weighted_l1":
            w = self.params["w"]
            return "polygon", np.array(
                [[1 / w[0], 0.0], [0.0, 1 / w[1]], [-1 / w[0], 0.0], [0.0, -1 / w[1]]]
            )
        a = self.params["a"]
        return "polygon", np.array(
            [[1 / a[0], 1 / a[1]], [-1 / a[0], 1 / a[1]], [-1 / a[0], -1 / a[1]], [1 / a[0], -1 / a[1]]]
        )

    def is_euclidean(self) -> bool:
        if self.family == "euclidean":
            return True
        if self.family == "ellipsoidal":
            return bool(np.allclose(self.params["M"], np.eye(2), rtol=0, atol=1e-14))
        return False


def dual_eval(psi: _NormBase, u) -> np.ndarray | float:
    """psi°(u) = max{<u, v> : psi(v) <= 1} in closed form."""
    return psi.dual()(u)


def psi0(psi: Norm3, xp, tol: float = 1e-10) -> tuple[np.ndarray | float, np.ndarray | float]:
    """min over c of psi(x1, x2, c) by ternary search; returns (value, argmin c).

    Any minimizer lies in |c| <= 2 psi(x', 0)/m since
    psi(x', c) >= m|c| - psi(x', 0). Vectorized over leading axes of xp.
    """
    xp = np.asarray(xp, dtype=float)
    scalar = xp.ndim == 1
    xp2 = np.atleast_2d(xp)
    base = psi(np.concatenate([xp2, np.zeros((len(xp2), 1))], axis=1))
    m = psi.vertical_minimum()
    lo = -2.0 * base / m
    hi = 2.0 * base / m

    def f(c):
        return psi(np.concatenate([xp2, c[:, None]], axis=1))

    while np.any(hi - lo > tol):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1, f2 = f(m1), f(m2)
        left = f1 > f2
        right = f1 < f2
        both = ~(left | right)
        lo = np.where(left, m1, np.where(both, m1, lo))
        hi = np.where(right, m2, np.where(both, m2, hi))
    c = 0.5 * (lo + hi)
    val = f(c)
    if scalar:
        return float(val[0]), float(c[0])
    return val, c


def psi0_scan(psi: Norm3, xp, step: float = 1e-6, levels: int = 3) -> tuple[float, float]:
    """Independent dense-scan minimization of c -> psi(x', c).

    A coarse scan over the norm-equivalence bracket is followed by nested
    scans of spacing step * 1000**(-k) around the incumbent.
    """
    xp = np.asarray(xp, dtype=float)
    base = psi(np.array([xp[0], xp[1], 0.0]))
    bound = 2.0 * base / psi.vertical_minimum() + step
    center, half = 0.0, bound
    spacing = max(bound / 2000.0, step)
    for _ in range(levels + 1):
        n = int(np.ceil(half / spacing))
        c = center + spacing * np.arange(-n, n + 1)
        vals = psi(np.column_stack([np.full_like(c, xp[0]), np.full_like(c, xp[1]), c]))
        i = int(np.argmin(vals))
        center = float(c[i])
        half = 2.0 * spacing
        spacing = max(spacing / 1000.0, 1e-15)
        if half < 1e-14:
            break
    return float(psi(np.array([xp[0], xp[1], center]))), center


def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (1 + 5**0.5) * k
    rho = np.sqrt(1 - z * z)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def dual_by_sampling(psi: _NormBase, u, seed: int = 0, iters: int = 3000) -> float:
    """Sampling maximization of <u, v>/psi(v) over directions v.

    The ratio is 0-homogeneous with convex superlevel cones, so it is
    quasiconcave in gnomonic coordinates around the incumbent direction;
    a shrinking grid-plus-random pattern search converges to the maximum.
    """
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return 0.0
    dim = u.shape[0]
    rng = np.random.default_rng(seed)
    if dim == 3:
        V = _fibonacci_sphere(4000)
    else:
        ang = np.linspace(0, 2 * np.pi, 4000, endpoint=False)
        V = np.column_stack([np.cos(ang), np.sin(ang)])

    def ratio(v):
        return (v @ u) / psi(v)

    r = ratio(V)
    best = V[int(np.argmax(r))]
    best_val = float(r.max())
    width = 0.05
    g = np.linspace(-1, 1, 5)
    A, B = np.meshgrid(g, g)
    lattice = np.column_stack([A.ravel(), B.ravel()])
    for _ in range(iters):
        # orthonormal tangent frame at the incumbent
        if dim == 3:
            x, y, z = best
            k = int(np.argmin(np.abs(best)))
            # best x e_k, written out: np.cross dominates the loop otherwise
            t1 = (np.array([0.0, z, -y]), np.array([-z, 0.0, x]), np.array([y, -x, 0.0]))[k]
            t1 /= np.sqrt(t1 @ t1)
            t2 = np.array([y * t1[2] - z * t1[1], z * t1[0] - x * t1[2], x * t1[1] - y * t1[0]])
            offs = np.vstack([lattice, rng.uniform(-1, 1, (40, 2))])
            cand = best + width * (offs[:, :1] * t1 + offs[:, 1:] * t2)
        else:
            t1 = np.array([-best[1], best[0]])
            offs = np.concatenate([g, rng.uniform(-1, 1, 16)])
            cand = best + width * offs[:, None] * t1
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        rc = ratio(cand)
        i = int(np.argmax(rc))
        if rc[i] > best_val:
            best_val, best = float(rc[i]), cand[i]
            width = min(width * 1.5, 0.5)
        else:
            width *= 0.8
        if width < 1e-12:
            break
    return best_val
