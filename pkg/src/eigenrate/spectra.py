"""Closed-form reference eigenpairs and Weyl/Pleijel asymptotics.

Eigenfunction handles follow the target protocol used throughout the
package: ``u(x, gamma)`` returns D^gamma u at points ``x`` of shape (P, n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .polyspace import indices_of_order

MAX_DERIVATIVE = 4
BISECTION_TOL = 1e-13
BRACKET_HALF_WIDTH = 0.3


class SineMode:
    """c * prod_i sin(k_i pi x_i) on the unit cube."""

    def __init__(self, ks: tuple, amplitude: float | None = None):
        self.ks = tuple(int(k) for k in ks)
        self.n = len(self.ks)
        self.amplitude = math.sqrt(2.0) ** self.n if amplitude is None else amplitude

    def __call__(self, x, gamma=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if gamma is None:
            gamma = (0,) * self.n
        if sum(gamma) > MAX_DERIVATIVE + 2:
            raise ValueError("derivative order unavailable")
        out = np.full(x.shape[0], self.amplitude)
        for i, (k, g) in enumerate(zip(self.ks, gamma)):
            w = k * math.pi
            out = out * w**g * np.sin(w * x[:, i] + 0.5 * g * math.pi)
        return out

    def __repr__(self) -> str:
        return f"SineMode{self.ks}"


class BeamMode:
    """Clamped-clamped beam mode on (0, 1) in an overflow-free exponential form.

    u = A e^{k(x-1)} + C e^{-kx} - cos kx + s sin kx, which equals the classical
    cosh kx - cos kx - s (sinh kx - sin kx) with s = (cosh k - cos k)/(sinh k - sin k),
    up to the normalization.
    """

    def __init__(self, kappa: float):
        k = float(kappa)
        self.kappa = k
        self.n = 1
        ek = math.exp(-k)
        den = 1.0 - ek * ek - 2.0 * math.sin(k) * ek
        self.s = (1.0 + ek * ek - 2.0 * math.cos(k) * ek) / den
        self.A = (math.cos(k) - math.sin(k) - ek) / den
        self.C = 0.5 * (1.0 + self.s)
        self.norm = 1.0
        rule = quadrature.gauss_legendre(20)
        edges = np.linspace(0.0, 1.0, 65)
        tot = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            xq = 0.5 * (a + b) + 0.5 * (b - a) * rule.points[:, 0]
            tot += 0.5 * (b - a) * float(rule.weights @ self(xq[:, None]) ** 2)
        self.norm = math.sqrt(tot)

    def __call__(self, x, gamma=None) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        g = 0 if gamma is None else int(gamma[0])
        if g > MAX_DERIVATIVE + 2:
            raise ValueError("derivative order unavailable")
        k = self.kappa
        kg = k**g
        out = (self.A * kg * np.exp(k * (x - 1.0))
               + self.C * (-k) ** g * np.exp(-k * x)
               - kg * np.cos(k * x + 0.5 * g * math.pi)
               + self.s * kg * np.sin(k * x + 0.5 * g * math.pi))
        return out / self.norm

    def __repr__(self) -> str:
        return f"BeamMode({self.kappa:.6f})"


@dataclass(frozen=True)
class ExactEigenpair:
    lam: float
    multiplicity: int
    functions: tuple  # one handle per mode spanning the eigenspace
    modes: tuple  # labels (k,) or (k, l)
    m: int = 1  # operator order: (-1)^m Delta^m
    domain: tuple = field(default=((0.0, 1.0),))

    @property
    def u(self):
        return self.functions[0]

    @property
    def n(self) -> int:
        return len(self.domain)


def laplace_interval(count: int) -> list:
    """lambda_k = k^2 pi^2, u_k = sqrt(2) sin(k pi x)."""
    return [ExactEigenpair((k * math.pi) ** 2, 1, (SineMode((k,)),), ((k,),))
            for k in range(1, count + 1)]


def square_modes(limit: int) -> list:
    """All (k, l) with k, l <= limit, sorted by k^2 + l^2 then k."""
    modes = [(k, l) for k in range(1, limit + 1) for l in range(1, limit + 1)]
    return sorted(modes, key=lambda kl: (kl[0] ** 2 + kl[1] ** 2, kl[0]))


def laplace_square(count: int) -> list:
    """The ``count`` smallest distinct eigenvalues pi^2 (k^2 + l^2) with multiplicities."""
    if count < 1:
        return []
    limit = 2
    while True:
        groups: dict = {}
        for k, l in square_modes(limit):
            groups.setdefault(k * k + l * l, []).append((k, l))
        keys = sorted(groups)
        # every key below (limit+1)^2 + 1 is complete
        complete = [q for q in keys if q < (limit + 1) ** 2 + 1]
        if len(complete) >= count:
            break
        limit *= 2
    out = []
    box = ((0.0, 1.0), (0.0, 1.0))
    for q in complete[:count]:
        modes = tuple(sorted(groups[q]))
        funcs = tuple(SineMode(kl) for kl in modes)
        out.append(ExactEigenpair(math.pi**2 * q, len(modes), funcs, modes, 1, box))
    return out


def square_eigenvalues(count: int) -> np.ndarray:
    """First ``count`` eigenvalues of the square repeated by multiplicity."""
    vals = []
    for p in laplace_square(count):
        vals.extend([p.lam] * p.multiplicity)
        if len(vals) >= count:
            break
    return np.array(vals[:count])


def _beam_f(k: float) -> float:
    return math.cos(k) - 1.0 / math.cosh(k)


def beam_root(j: int, tol: float = BISECTION_TOL) -> float:
    """j-th positive root of cos k cosh k = 1, by bisection on cos k - sech k."""
    if j < 1:
        raise ValueError("j must be positive")
    c = (j + 0.5) * math.pi
    a, b = c - BRACKET_HALF_WIDTH, c + BRACKET_HALF_WIDTH
    fa, fb = _beam_f(a), _beam_f(b)
    if fa * fb > 0:
        raise ArithmeticError(f"bracket [{a}, {b}] has no sign change")
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = _beam_f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def beam_clamped(count: int) -> list:
    """lambda_j = kappa_j^4 of u'''' = lambda u with clamped ends on (0, 1)."""
    out = []
    for j in range(1, count + 1):
        k = beam_root(j)
        out.append(ExactEigenpair(k**4, 1, (BeamMode(k),), ((j,),), 2))
    return out


def ball_volume(n: int) -> float:
    """omega_n = pi^{n/2} / Gamma(1 + n/2)."""
    return math.pi ** (n / 2) / math.gamma(1 + n / 2)


def weyl_estimate(j: int, n: int, volume: float = 1.0) -> float:
    """4 pi^2 (j / (omega_n |Omega|))^{2/n}."""
    if j < 1:
        raise ValueError("j must be positive")
    return 4 * math.pi**2 * (j / (ball_volume(n) * volume)) ** (2.0 / n)


def pleijel_estimate(j: int, n: int, volume: float = 1.0) -> float:
    """16 pi^4 (j / (omega_n |Omega|))^{4/n}."""
    if j < 1:
        raise ValueError("j must be positive")
    return 16 * math.pi**4 * (j / (ball_volume(n) * volume)) ** (4.0 / n)


def _box_points(box, npts: int, cells: int = 8):
    """Composite Gauss points and weights on a box."""
    g = quadrature.gauss_legendre(npts)
    axes = []
    for lo, hi in box:
        e = np.linspace(lo, hi, cells + 1)
        a, b = e[:-1, None], e[1:, None]
        x = (0.5 * (a + b) + 0.5 * (b - a) * g.points[None, :, 0]).ravel()
        w = (0.5 * (b - a) * g.weights[None, :]).ravel()
        axes.append((x, w))
    if len(axes) == 1:
        return axes[0][0][:, None], axes[0][1]
    (x1, w1), (x2, w2) = axes
    X, Y = np.meshgrid(x1, x2, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), np.outer(w1, w2).ravel()


def _tensor_norm(u, x, w, order: int, p: float, laplace_power: int = 0) -> float:
    """|| nabla^order Delta^laplace_power u ||_{0,p} with the full derivative tensor."""
    n = x.shape[1]
    acc = np.zeros(len(w))
    for alpha in indices_of_order(n, order):
        mult = math.factorial(order) / math.prod(math.factorial(a) for a in alpha)
        val = np.zeros(len(w))
        for beta in indices_of_order(n, laplace_power):
            cb = math.factorial(laplace_power) / math.prod(math.factorial(b) for b in beta)
            g = tuple(a + 2 * b for a, b in zip(alpha, beta))
            val = val + cb * u(x, g)
        acc += mult * val**2
    if math.isinf(p):
        return float(np.sqrt(acc).max())
    return float((w @ acc ** (p / 2)) ** (1.0 / p))


def eigen_identity_check(pair: ExactEigenpair, r: int, m: int | None = None,
                         G=None, npts: int = 10, p: float = 2.0) -> float:
    """Relative deviation of ||nabla^{mi} Delta^{ml} u||_G from lambda^l ||nabla^{mi} u||_G."""
    from .polyspace import operator_split

    m = pair.m if m is None else m
    i, ell = operator_split(m, r)
    order = m * i
    lap = m * ell
    if order + 2 * lap > MAX_DERIVATIVE + 2:
        raise ValueError("derivative order unavailable")
    if G is None:
        G = tuple((lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)) for lo, hi in pair.domain)
    x, w = _box_points(G, npts)
    lhs = _tensor_norm(pair.u, x, w, order, p, lap)
    rhs = pair.lam**ell * _tensor_norm(pair.u, x, w, order, p, 0)
    return abs(lhs - rhs) / rhs


def l2_norm(u, domain, npts: int = 10, cells: int = 16) -> float:
    x, w = _box_points(domain, npts, cells)
    return float(math.sqrt(w @ u(x) ** 2))


def exact_spectrum(problem: str, count: int) -> list:
    """Dispatch by problem name: interval, square or beam."""
    table = {"interval": laplace_interval, "square": laplace_square, "beam": beam_clamped}
    if problem not in table:
        raise KeyError(f"unknown problem {problem!r}")
    return table[problem](count)
