"""Fast kernel summation ``s_i = sum_j K(|x_i - y_j|) alpha_j`` via NFFT.

The radial kernel is replaced on the torus by a smooth periodic version: it
is kept as is on a ring, joined to a constant by a Hermite polynomial near
radius 1/2 and (for kernels with a kink at the origin) replaced by an even
polynomial close to 0.  Fourier coefficients of the periodic kernel turn the
sum into adjoint NFFT -> diagonal scaling -> NFFT.  Pairs closer than the
inner radius get a sparse direct correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import _threads
from .kernels import RadialKernel
from .measures import CostSpec, DiscreteMeasure, MeasureError, rescale_pair_to_torus, total_mass
from .nfft import FrequencyGrid, NfftPlan, nfft_adjoint, nfft_forward

DEFAULT_N = {1: 256, 2: 128, 3: 64}


# --------------------------------------------------------- truncated series


class Taylor:
    """Truncated power series ``sum_k c_k s^k`` around a point."""

    __slots__ = ("c",)

    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)

    @classmethod
    def variable(cls, t0: float, order: int) -> Taylor:
        c = np.zeros(order + 1)
        c[0] = t0
        if order:
            c[1] = 1.0
        return cls(c)

    def _lift(self, other):
        if isinstance(other, Taylor):
            return other.c
        out = np.zeros_like(self.c)
        out[0] = other
        return out

    def __add__(self, other):
        return Taylor(self.c + self._lift(other))

    __radd__ = __add__

    def __neg__(self):
        return Taylor(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Taylor):
            return Taylor(self.c * other)
        return Taylor(np.convolve(self.c, other.c)[: self.c.size])

    __rmul__ = __mul__

    def exp(self) -> Taylor:
        a = self.c
        f = np.zeros_like(a)
        f[0] = math.exp(a[0])
        for k in range(1, a.size):
            f[k] = sum(j * a[j] * f[k - j] for j in range(1, k + 1)) / k
        return Taylor(f)

    def __pow__(self, alpha: float) -> Taylor:
        a = self.c
        if a[0] <= 0:
            raise ValueError("series power needs a positive constant term")
        f = np.zeros_like(a)
        f[0] = a[0] ** alpha
        for k in range(1, a.size):
            f[k] = sum(((alpha + 1) * j - k) * a[j] * f[k - j] for j in range(1, k + 1)) / (k * a[0])
        return Taylor(f)


def _exp(x):
    return x.exp() if isinstance(x, Taylor) else np.exp(x)


# -------------------------------------------------------------- profiles


@dataclass(frozen=True)
class CostKernel:
    """Auxiliary radial kernel ``t^r exp(-lam t^r)`` for transport costs."""

    lam: float
    r: float = 2.0

    def __post_init__(self):
        if self.r not in (1, 2):
            raise ValueError("the accelerated cost kernel supports r = 1 and r = 2 only")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def smooth_at_zero(self) -> bool:
        return self.r == 2

    def __call__(self, t):
        return self.profile(1.0)(np.asarray(t, dtype=np.float64))

    def profile(self, h: float):
        lam, r = self.lam, self.r

        def f(t):
            a = (h * h) * (t * t) if r == 2 else h * t
            return a * _exp(-lam * a)

        return f


def fastsum_cost_kernel(lam: float, cost: CostSpec) -> CostKernel:
    if cost.norm != "euclidean":
        raise ValueError("the accelerated backend needs the Euclidean distance")
    return CostKernel(lam, cost.r)


def _profile(kernel, h: float):
    """Radial profile ``t -> K(h t)``; works on arrays and :class:`Taylor`."""
    if isinstance(kernel, CostKernel):
        return kernel.profile(h)
    v = kernel.variant
    if v == "gauss":
        a = kernel.rate * h * h
        return lambda t: _exp(-a * (t * t))
    if v == "laplace":
        a = kernel.rate * h
        return lambda t: _exp(-a * t)
    if v == "imq":
        c2 = kernel.imq_c ** 2
        return lambda t: ((h * h) * (t * t) + c2) ** -0.5
    return lambda t: h * t  # energy enters as |x - y|; MMD flips the sign


def _smooth(kernel) -> bool:
    return kernel.smooth_at_zero


# ------------------------------------------------------- regularization


@dataclass(frozen=True, eq=False)
class RegularizedKernel:
    base: object
    scale: float
    dim: int
    N: int
    p: int
    eps_I: float
    eps_B: float
    boundary_coeffs: np.ndarray = field(repr=False)
    interior_coeffs: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @property
    def t_B(self) -> float:
        return 0.5 - self.eps_B

    def profile(self, t):
        return _profile(self.base, self.scale)(np.asarray(t, dtype=np.float64))

    def interior(self, t):
        u = (np.asarray(t, dtype=np.float64) / self.eps_I) ** 2
        return np.polynomial.polynomial.polyval(u, self.interior_coeffs)

    def boundary(self, t):
        u = (np.asarray(t, dtype=np.float64) - self.t_B) / self.eps_B
        return np.polynomial.polynomial.polyval(u, self.boundary_coeffs)

    def __call__(self, t):
        """The regularized radial profile evaluated at radii ``t``."""
        t = np.asarray(t, dtype=np.float64)
        out = np.empty_like(t)
        inner = t < self.eps_I
        ring = ~inner & (t <= self.t_B)
        band = (t > self.t_B) & (t <= 0.5)
        outer = t > 0.5
        out[inner] = self.interior(t[inner]) if self.eps_I > 0 else 0.0
        out[ring] = self.profile(t[ring])
        out[band] = self.boundary(t[band])
        out[outer] = self.boundary(0.5)
        return out

    def fourier_series(self, y):
        """``sum_k b_k exp(2 pi i k.y)`` evaluated directly at points ``y``."""
        y = np.asarray(y, dtype=np.float64).reshape(-1, self.dim)
        k = np.arange(-self.N // 2, self.N // 2)
        e = [np.exp(2j * np.pi * np.multiply.outer(y[:, t], k)) for t in range(self.dim)]
        if self.dim == 1:
            return (e[0] @ self.b).real
        if self.dim == 2:
            return np.einsum("ja,jb,ab->j", e[0], e[1], self.b).real
        return np.einsum("ja,jb,jc,abc->j", e[0], e[1], e[2], self.b, optimize=True).real


def _hermite_flat(c_low: np.ndarray, p: int, end_value: float) -> np.ndarray:
    """Degree 2p+1 polynomial with Taylor coefficients ``c_low`` at u=0 and
    ``P(1) = end_value``, ``P^(j)(1) = 0`` for j = 1..p.

    Written as ``V + (1-u)^(p+1) Q(u)`` with ``Q`` the truncated series of
    ``(T(u) - V) / (1-u)^(p+1)``, so no linear solve is needed.
    """
    P = np.polynomial.polynomial
    t = np.array(c_low, dtype=np.float64)
    t[0] -= end_value
    inv = np.array([math.comb(p + k, k) for k in range(p + 1)], dtype=np.float64)
    q = np.convolve(t, inv)[: p + 1]
    flat = np.array([math.comb(p + 1, k) * (-1) ** k for k in range(p + 2)], dtype=np.float64)
    out = P.polymul(q, flat)
    out[0] += end_value
    return out


def _solve_boundary(taylor: np.ndarray, eps_B: float, p: int) -> np.ndarray:
    """Degree 2p+1 polynomial in ``u in [0,1]`` with the Taylor data at u=0 and
    derivatives 1..p zero at u=1.

    The remaining free value at u=1 minimises the L2 norm of the (p+1)-th
    derivative, the first one that jumps at the joins.
    """
    P = np.polynomial.polynomial
    c_low = taylor[: p + 1] * eps_B ** np.arange(p + 1)
    base = _hermite_flat(c_low, p, 0.0)
    unit = _hermite_flat(np.zeros(p + 1), p, 1.0)
    da, db = P.polyder(base, p + 1), P.polyder(unit, p + 1)

    def inner(f, g):
        return P.polyval(1.0, P.polyint(P.polymul(f, g)))

    return base - inner(da, db) / inner(db, db) * unit


def _solve_boundary_even(taylor: np.ndarray, eps_B: float, p: int) -> np.ndarray:
    """Polynomial even about t = 1/2 with the Taylor data at t_B, returned in ``u``.

    Enough for d = 1, where no radius exceeds 1/2; much smaller high-order
    derivatives than the flat variant.
    """
    P = np.polynomial.polynomial
    target = np.array([math.factorial(j) * taylor[j] * eps_B**j for j in range(p + 1)])
    # w = u - 1 in [-1, 0]; row j is the j-th derivative of w^(2k) at w = -1
    A = np.array([[math.perm(2 * k, j) * (-1.0) ** (2 * k - j) for k in range(p + 1)] for j in range(p + 1)])
    a = np.linalg.solve(A, target)
    out, power = np.zeros(2 * p + 1), np.array([1.0])
    for k in range(2 * p + 1):
        if k % 2 == 0:
            out[: power.size] += a[k // 2] * power
        power = P.polymul(power, [-1.0, 1.0])
    return out


def _solve_interior(taylor: np.ndarray, eps_I: float, p: int) -> np.ndarray:
    """Even polynomial ``sum_k a_k u^(2k)``, ``u = t/eps_I``, matching p derivatives at u=1."""
    target = np.array([math.factorial(j) * taylor[j] * eps_I**j for j in range(p + 1)])
    A = np.array([[math.perm(2 * k, j) for k in range(p + 1)] for j in range(p + 1)], dtype=np.float64)
    return np.linalg.solve(A, target)


def regularize_kernel(base, N: int, p: int = 8, eps_I: float = 0.0, eps_B: float | None = None,
                      dim: int = 1, scale: float = 1.0) -> RegularizedKernel:
    """Periodic regularization of ``t -> base(scale * t)`` and its Fourier coefficients.

    ``base`` is a :class:`RadialKernel` or :class:`CostKernel`.  The boundary band
    is ``(1/2 - eps_B, 1/2]``; ``eps_I > 0`` smooths the kernel on ``[0, eps_I)``.
    """
    if eps_B is None:
        eps_B = p / N
    if p < 1 or N < 2 or N % 2:
        raise ValueError("need p >= 1 and an even bandwidth N >= 2")
    if not 0 < eps_B <= 0.25 or not 0 <= eps_I < 0.5 - eps_B:
        raise ValueError(f"invalid radii eps_I={eps_I}, eps_B={eps_B}")
    if not 1 <= dim <= 3:
        raise ValueError("dim must be 1, 2 or 3")
    prof = _profile(base, scale)
    t_B = 0.5 - eps_B
    tay_B = prof(Taylor.variable(t_B, p)).c
    # radii beyond 1/2 only exist for d >= 2; there the kernel must be flat at 1/2
    bcoef = _solve_boundary_even(tay_B, eps_B, p) if dim == 1 else _solve_boundary(tay_B, eps_B, p)
    icoef = np.zeros(1)
    if eps_I > 0:
        icoef = _solve_interior(prof(Taylor.variable(eps_I, p)).c, eps_I, p)
    reg = RegularizedKernel(base, float(scale), dim, int(N), int(p), float(eps_I), float(eps_B),
                            bcoef, icoef, np.empty(0), np.empty(0))
    axis = np.arange(-N // 2, N // 2) / N
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    radius = np.sqrt(sum(g * g for g in mesh))
    samples = reg(radius)
    b = sfft.fftshift(sfft.fftn(sfft.ifftshift(samples), workers=_threads.get())) / N**dim
    object.__setattr__(reg, "samples", samples)
    object.__setattr__(reg, "b", np.ascontiguousarray(b.real))
    return reg


# ---------------------------------------------------------------- plans


@dataclass(frozen=True)
class FastsumConfig:
    """Fast summation parameters; ``None`` picks the per-dimension default.

    With ``eps_B=None`` and d >= 2 the boundary band is p/N when the rescaled
    kernel is already below 1e-16 of its peak there, else 2p/N (capped at 1/4).
    With ``eps_I=None`` a kinked kernel whose rescaled decay rate exceeds
    1/eps_I gets a doubled interior radius.
    """

    N: int | None = None
    p: int = 8
    eps_B: float | None = None
    eps_I: float | None = None
    m: int = 8
    sigma: float = 2.0

    def resolve(self, kernel, dim: int):
        N = self.N or DEFAULT_N[dim]
        eps_B = self.eps_B if self.eps_B is not None else self.p / N
        if self.eps_I is not None:
            eps_I = self.eps_I
        else:
            eps_I = 0.0 if _smooth(kernel) else self.p / N
        return N, eps_B, eps_I


@dataclass(frozen=True, eq=False)
class FastsumPlan:
    reg: RegularizedKernel
    sources: np.ndarray
    targets: np.ndarray
    source_plan: NfftPlan
    target_plan: NfftPlan
    near: sp.csr_matrix | None

    @property
    def b(self):
        return self.reg.b


def _check_box(pts: np.ndarray, eps_B: float):
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if np.any(np.abs(pts) > 0.25) or np.linalg.norm(hi - lo) > 0.5 - eps_B + 1e-12:
        raise MeasureError("node out of box: rescale nodes first (rescale_pair_to_torus)")


def build_plan(reg: RegularizedKernel, sources, targets) -> FastsumPlan:
    """NFFT plans for both node sets and the sparse near-field correction."""
    src = np.asarray(sources, dtype=np.float64).reshape(-1, reg.dim)
    tgt = np.asarray(targets, dtype=np.float64).reshape(-1, reg.dim)
    _check_box(np.concatenate([src, tgt]), reg.eps_B)
    grid = FrequencyGrid((reg.N,) * reg.dim)
    splan = NfftPlan(grid, src)
    tplan = splan if tgt.shape == src.shape and np.array_equal(tgt, src) else NfftPlan(grid, tgt)
    near = None
    if reg.eps_I > 0:
        pairs = cKDTree(tgt).sparse_distance_matrix(cKDTree(src), reg.eps_I, output_type="ndarray")
        keep = pairs["v"] < reg.eps_I
        i, j, r = pairs["i"][keep], pairs["j"][keep], pairs["v"][keep]
        vals = reg.profile(r) - reg.interior(r)
        near = sp.csr_matrix((vals, (i, j)), shape=(tgt.shape[0], src.shape[0]))
    return FastsumPlan(reg, src, tgt, splan, tplan, near)


def _far(p_in: NfftPlan, p_out: NfftPlan, b, x):
    # the k = -N/2 column has no partner, so the series is real only after
    # taking the real part; complex data are split into two real sums
    if np.iscomplexobj(x):
        return _far(p_in, p_out, b, x.real) + 1j * _far(p_in, p_out, b, x.imag)
    return nfft_forward(p_out, b * nfft_adjoint(p_in, x)).real


def fastsum_apply(plan: FastsumPlan, alpha) -> np.ndarray:
    """``s_i = sum_j K(|x_i - y_j|) alpha_j`` for targets x and sources y."""
    alpha = np.asarray(alpha).reshape(-1)
    if alpha.size != plan.sources.shape[0]:
        raise ValueError("alpha length does not match number of sources")
    s = _far(plan.source_plan, plan.target_plan, plan.b, alpha)
    if plan.near is not None:
        s = s + plan.near @ alpha
    return s


def fastsum_apply_transpose(plan: FastsumPlan, beta) -> np.ndarray:
    """``t_j = sum_i K(|x_i - y_j|) beta_i`` (same plan, roles swapped)."""
    beta = np.asarray(beta).reshape(-1)
    if beta.size != plan.targets.shape[0]:
        raise ValueError("beta length does not match number of targets")
    t = _far(plan.target_plan, plan.source_plan, plan.b, beta)
    if plan.near is not None:
        t = t + plan.near.T @ beta
    return t


@dataclass(frozen=True, eq=False)
class KernelSum:
    """Fast summation for raw coordinates: rescaling plus a :class:`FastsumPlan`."""

    plan: FastsumPlan
    scale: float
    offset: np.ndarray

    def __call__(self, alpha):
        return fastsum_apply(self.plan, alpha)

    def T(self, beta):
        return fastsum_apply_transpose(self.plan, beta)


def _decayed(kernel, scale: float, t: float, rel: float = 1e-16) -> bool:
    prof = _profile(kernel, scale)
    return abs(float(prof(np.float64(t)))) <= rel * abs(float(prof(np.float64(0.0))))


def _steep(kernel, scale: float, eps_I: float) -> bool:
    """Exponential decay over the interior radius, where the interior polynomial degrades."""
    if isinstance(kernel, CostKernel):
        rate = kernel.lam if kernel.r == 1 else 0.0
    else:
        rate = kernel.rate if kernel.variant == "laplace" else 0.0
    return rate * scale * eps_I > 1.0


def make_kernel_sum(kernel, sources, targets, cfg: FastsumConfig = FastsumConfig()) -> KernelSum:
    src = np.asarray(sources, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    src = src.reshape(-1, 1) if src.ndim == 1 else src
    tgt = tgt.reshape(-1, 1) if tgt.ndim == 1 else tgt
    dim = src.shape[1]
    if dim != tgt.shape[1] or not 1 <= dim <= 3:
        raise MeasureError("fast summation needs matching dimensions 1, 2 or 3")
    N, eps_B, eps_I = cfg.resolve(kernel, dim)
    a = DiscreteMeasure(src, np.ones(src.shape[0]))
    b = DiscreteMeasure(tgt, np.ones(tgt.shape[0]))
    rp = rescale_pair_to_torus(a, b, margin=eps_B)
    if cfg.eps_I is None and eps_I > 0 and _steep(kernel, rp.scale, eps_I) and 2 * eps_I < 0.5 - eps_B:
        eps_I = 2 * eps_I
    widen = cfg.eps_B is None and dim >= 2 and eps_I < 0.5 - min(0.25, 2 * eps_B)
    if widen and not _decayed(kernel, rp.scale, 0.5 - eps_B):
        # the flat boundary needs a wider band unless the kernel is already negligible there
        eps_B = min(0.25, 2 * eps_B)
        rp = rescale_pair_to_torus(a, b, margin=eps_B)
    reg = regularize_kernel(kernel, N, cfg.p, eps_I, eps_B, dim, rp.scale)
    return KernelSum(build_plan(reg, rp.a.points, rp.b.points), rp.scale, rp.offset)


def fast_kernel_sum(kernel, sources, targets, alpha, cfg: FastsumConfig = FastsumConfig()) -> np.ndarray:
    return make_kernel_sum(kernel, sources, targets, cfg)(alpha)


def mmd_squared_fast(k: RadialKernel, mu: DiscreteMeasure, nu: DiscreteMeasure,
                     cfg: FastsumConfig = FastsumConfig(), force: bool = False) -> float:
    """Squared MMD with a single fast summation over the union of atoms."""
    if mu.dim != nu.dim:
        raise MeasureError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if k.variant == "energy" and not force:
        if abs(total_mass(mu) - total_mass(nu)) > 1e-12 * max(total_mass(mu), total_mass(nu)):
            raise MeasureError("energy MMD is not a distance for measures of unequal mass (use force)")
    z = np.concatenate([mu.points, nu.points])
    alpha = np.concatenate([mu.weights, -nu.weights])
    s = fast_kernel_sum(k, z, z, alpha, cfg)
    if k.variant == "energy":
        s = -s
    return max(math.fsum((alpha * s).tolist()), 0.0)
