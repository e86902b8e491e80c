"""Nonequispaced discrete Fourier transforms on the torus [-1/2, 1/2)^d.

Coefficient arrays use the centred layout: along each axis position ``p``
holds frequency ``k = p - N/2``.  The fast transform follows the usual
gridding scheme (Kaiser-Bessel window, oversampled FFT, deconvolution).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.special import i0

from . import _threads

_CHUNK = 1 << 22  # window entries processed at once
_CACHE = 1 << 23  # plans with at most this many window entries keep their tensors


@dataclass(frozen=True)
class FrequencyGrid:
    N: tuple

    def __post_init__(self):
        N = tuple(int(v) for v in np.atleast_1d(self.N))
        if not 1 <= len(N) <= 3:
            raise ValueError("only d = 1, 2, 3 are supported")
        if any(v < 2 or v % 2 for v in N):
            raise ValueError(f"bandwidths must be even and >= 2, got {N}")
        object.__setattr__(self, "N", N)

    @property
    def dim(self) -> int:
        return len(self.N)

    @property
    def size(self) -> int:
        return int(np.prod(self.N))

    def frequencies(self, axis: int) -> np.ndarray:
        n = self.N[axis]
        return np.arange(-n // 2, n // 2)


def wrap_nodes(nodes) -> np.ndarray:
    """Map coordinates onto the half-open torus [-1/2, 1/2)."""
    x = np.asarray(nodes, dtype=np.float64)
    x = x.reshape(-1, 1) if x.ndim == 1 else x
    w = x - np.floor(x + 0.5)
    w[w >= 0.5] -= 1.0
    return w


def _check_coeffs(grid: FrequencyGrid, coeffs) -> np.ndarray:
    c = np.asarray(coeffs)
    if c.size != grid.size:
        raise ValueError(f"expected {grid.size} coefficients, got {c.size}")
    return c.reshape(grid.N).astype(np.complex128, copy=False)


def _check_nodes(grid: FrequencyGrid, nodes) -> np.ndarray:
    x = wrap_nodes(nodes)
    if x.shape[1] != grid.dim:
        raise ValueError(f"nodes have dimension {x.shape[1]}, grid has {grid.dim}")
    return x


# ------------------------------------------------------------- direct sums


def _axis_exponentials(grid: FrequencyGrid, x: np.ndarray, sign: float):
    return [np.exp(sign * 2j * np.pi * np.multiply.outer(x[:, t], grid.frequencies(t))) for t in range(grid.dim)]


def ndft_forward(grid: FrequencyGrid, coeffs, nodes) -> np.ndarray:
    """``f(x_j) = sum_k c_k exp(2 pi i k.x_j)`` by direct summation."""
    c = _check_coeffs(grid, coeffs)
    x = _check_nodes(grid, nodes)
    e = _axis_exponentials(grid, x, 1.0)
    if grid.dim == 1:
        return e[0] @ c
    if grid.dim == 2:
        return np.einsum("ja,jb,ab->j", e[0], e[1], c, optimize=True)
    return np.einsum("ja,jb,jc,abc->j", e[0], e[1], e[2], c, optimize=True)


def ndft_adjoint(grid: FrequencyGrid, data, nodes) -> np.ndarray:
    """``h_k = sum_j f_j exp(-2 pi i k.x_j)`` by direct summation."""
    x = _check_nodes(grid, nodes)
    f = np.asarray(data, dtype=np.complex128).reshape(-1)
    if f.size != x.shape[0]:
        raise ValueError("data length does not match number of nodes")
    e = _axis_exponentials(grid, x, -1.0)
    if grid.dim == 1:
        return f @ e[0]
    if grid.dim == 2:
        return np.einsum("j,ja,jb->ab", f, e[0], e[1], optimize=True)
    return np.einsum("j,ja,jb,jc->abc", f, e[0], e[1], e[2], optimize=True)


def ndft_forward_loop(grid: FrequencyGrid, coeffs, nodes) -> np.ndarray:
    """Literal double loop; only for tiny instances."""
    c = _check_coeffs(grid, coeffs)
    x = _check_nodes(grid, nodes)
    ks = list(itertools.product(*(grid.frequencies(t) for t in range(grid.dim))))
    out = np.zeros(x.shape[0], dtype=np.complex128)
    for j in range(x.shape[0]):
        acc = 0j
        for k in ks:
            pos = tuple(kt + nt // 2 for kt, nt in zip(k, grid.N))
            acc += c[pos] * np.exp(2j * np.pi * float(np.dot(k, x[j])))
        out[j] = acc
    return out


# ------------------------------------------------------------ fast transform


def _kb_window(s, m: int, b: float):
    """Kaiser-Bessel window in grid units ``s = n x``."""
    r = m * m - s * s
    out = np.empty_like(s)
    pos, neg = r > 0, r < 0
    sq = np.sqrt(r[pos])
    out[pos] = np.sinh(b * sq) / (np.pi * sq)
    sq = np.sqrt(-r[neg])
    out[neg] = np.sin(b * sq) / (np.pi * sq)
    out[r == 0] = b / np.pi
    return out


def _kb_deconvolution(N: int, n: int, m: int, b: float):
    k = np.arange(-N // 2, N // 2)
    return 1.0 / i0(m * np.sqrt(b * b - (2 * np.pi * k / n) ** 2))


@dataclass(frozen=True, eq=False)
class NfftPlan:
    """Precomputed window tables for a fixed node set.

    The oversampled length per axis is the next power of two >= ``sigma * N``.
    """

    grid: FrequencyGrid
    nodes: np.ndarray
    sigma: float = 2.0
    m: int = 8
    n: tuple = field(init=False)
    _idx: list = field(init=False, repr=False)
    _win: list = field(init=False, repr=False)
    _deconv: list = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma < 2 or self.m < 1:
            raise ValueError("need sigma >= 2 and m >= 1")
        x = _check_nodes(self.grid, self.nodes)
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)
        n = tuple(1 << int(np.ceil(np.log2(self.sigma * N))) for N in self.grid.N)
        object.__setattr__(self, "n", n)
        offs = np.arange(-self.m, self.m + 2)
        idx, win, dec = [], [], []
        for t, (N, nt) in enumerate(zip(self.grid.N, n)):
            b = np.pi * (2.0 - N / nt)
            u = nt * x[:, t]
            grid_pts = np.floor(u)[:, None] + offs
            win.append(_kb_window(u[:, None] - grid_pts, self.m, b))
            idx.append(np.mod(grid_pts, nt).astype(np.int64))
            dec.append(_kb_deconvolution(N, nt, self.m, b))
        object.__setattr__(self, "_idx", idx)
        object.__setattr__(self, "_win", win)
        object.__setattr__(self, "_deconv", dec)
        object.__setattr__(self, "_cache", {})
        if self.num_nodes * (2 * self.m + 2) ** self.grid.dim <= _CACHE:
            for sl in self._chunks():
                self._cache[sl.start, sl.stop] = self._build_tensor(sl)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    def _chunks(self):
        per_node = (2 * self.m + 2) ** self.grid.dim
        step = max(1, _CHUNK // per_node)
        for s in range(0, self.num_nodes, step):
            yield slice(s, s + step)

    def _tensor(self, sl):
        hit = self._cache.get((sl.start, sl.stop))
        return hit if hit is not None else self._build_tensor(sl)

    def _build_tensor(self, sl):
        """Flat oversampled-grid indices and window products for nodes ``sl``."""
        d = self.grid.dim
        flat, w = self._idx[0][sl], self._win[0][sl]
        for t in range(1, d):
            shape_new = (slice(None),) + (None,) * t + (slice(None),)
            shape_old = (Ellipsis, None)
            flat = flat[shape_old] * self.n[t] + self._idx[t][sl][shape_new]
            w = w[shape_old] * self._win[t][sl][shape_new]
        k = flat.shape[0]
        return flat.reshape(k, -1), w.reshape(k, -1)

    def _scaled(self, c):
        out = c
        for t, D in enumerate(self._deconv):
            shape = [1] * self.grid.dim
            shape[t] = -1
            out = out * D.reshape(shape)
        return out


def _pad_axis(a, axis, N, n):
    shape = list(a.shape)
    shape[axis] = n
    out = np.zeros(shape, dtype=np.complex128)
    h = N // 2
    src_hi = [slice(None)] * a.ndim
    src_lo = [slice(None)] * a.ndim
    dst_lo = [slice(None)] * a.ndim
    dst_hi = [slice(None)] * a.ndim
    src_hi[axis], dst_lo[axis] = slice(h, N), slice(0, h)
    src_lo[axis], dst_hi[axis] = slice(0, h), slice(n - h, n)
    out[tuple(dst_lo)] = a[tuple(src_hi)]
    out[tuple(dst_hi)] = a[tuple(src_lo)]
    return out


def _crop_axis(a, axis, N, n):
    h = N // 2
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis], hi[axis] = slice(n - h, n), slice(0, h)
    return np.concatenate([a[tuple(lo)], a[tuple(hi)]], axis=axis)


def nfft_forward(plan: NfftPlan, coeffs) -> np.ndarray:
    """Approximate :func:`ndft_forward` at ``plan.nodes``."""
    grid = plan.grid
    g = plan._scaled(_check_coeffs(grid, coeffs))
    # pruned transform: pad and transform one axis at a time
    for t in range(grid.dim):
        g = _pad_axis(g, t, grid.N[t], plan.n[t])
        g = sfft.ifft(g, axis=t, norm="forward", workers=_threads.get())
    gf = g.reshape(-1)
    out = np.empty(plan.num_nodes, dtype=np.complex128)
    for sl in plan._chunks():
        flat, w = plan._tensor(sl)
        out[sl] = np.einsum("ij,ij->i", gf[flat], w)
    return out


def nfft_adjoint(plan: NfftPlan, data) -> np.ndarray:
    """Approximate :func:`ndft_adjoint` for values at ``plan.nodes``."""
    grid = plan.grid
    f = np.asarray(data).reshape(-1)
    if f.size != plan.num_nodes:
        raise ValueError("data length does not match number of nodes")
    total = int(np.prod(plan.n))
    is_real = not np.iscomplexobj(f)
    re = np.zeros(total)
    im = None if is_real else np.zeros(total)
    for sl in plan._chunks():
        flat, w = plan._tensor(sl)
        fl = flat.ravel()
        re += np.bincount(fl, weights=(w * f[sl].real[:, None]).ravel(), minlength=total)
        if not is_real:
            im += np.bincount(fl, weights=(w * f[sl].imag[:, None]).ravel(), minlength=total)
    g = (re if is_real else re + 1j * im).reshape(plan.n)
    for t in reversed(range(grid.dim)):
        g = sfft.fft(g, axis=t, workers=_threads.get())
        g = _crop_axis(g, t, grid.N[t], plan.n[t])
    return plan._scaled(g)
