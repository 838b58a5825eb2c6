import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from eigenrate import gevp, rates, spectra
from eigenrate.femcore import FeFunction, FESpace, assemble, get_family, interpolate
from eigenrate.meshkit import interval_mesh, rect_mesh


def _const(value):
    def f(x, g):
        return np.full(len(x), value if not any(g) else 0.0)
    return f


def _solve(mesh, name, dim=None, k=6, m=1):
    space = FESpace(mesh, get_family(name, dim) if dim else get_family(name), m)
    return space, gevp.solve_gevp(assemble(space, m), k=k)


# -- eoc ---------------------------------------------------------------------

def test_eoc_exact_powers():
    fit = rates.eoc([0.1, 0.025, 0.00625], [0.1, 0.05, 0.025])
    assert abs(fit.slope - 2.0) < 1e-12
    np.testing.assert_allclose(fit.pairwise, [2.0, 2.0], rtol=1e-12)
    assert rates.eoc([1.0, 1.0, 1.0], [0.4, 0.2, 0.1]).slope == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_eoc_noisy_cubic(seed):
    rng = np.random.default_rng(seed)
    h = 0.5 ** np.arange(2, 8)
    e = 3.0 * h**3 * (1 + 0.01 * rng.uniform(-1, 1, size=h.size))
    assert abs(rates.eoc(e, h).slope - 3.0) <= 0.05


def test_eoc_window_and_errors():
    h = [0.5, 0.25, 0.125, 0.0625]
    e = [1.0, 0.5, 0.0625, 0.015625]
    fit = rates.eoc(e, h, window=3)
    assert fit.window == (1, 2, 3)
    with pytest.raises(ValueError):
        rates.eoc([1.0, 0.0, 0.1], [0.3, 0.2, 0.1])
    with pytest.raises(ValueError):
        rates.eoc([1.0, 0.5, 0.1], [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        rates.eoc([1.0, 0.5], [0.2, 0.1])
    with pytest.raises(ValueError):
        rates.eoc(e, h, window=2)


# -- lambda scaling ----------------------------------------------------------

def test_lambda_scaling_synthetic():
    lam = np.array([1.0, 4.0, 9.0, 16.0])
    assert abs(rates.lambda_scaling(lam, lam).slope - 1.0) < 1e-12


def test_lambda_scaling_p1_dispersion():
    h = 1 / 64
    k = np.arange(1, 9)
    lam = (k * math.pi) ** 2
    lam_h = 6 / h**2 * (1 - np.cos(k * math.pi * h)) / (2 + np.cos(k * math.pi * h))
    rel = (lam_h - lam) / lam
    # lambda_8 h^2 = 0.154 sits above the default cap
    with pytest.raises(ValueError):
        rates.lambda_scaling(rel, lam, h)
    assert abs(rates.lambda_scaling(rel, lam, h, cap=0.16).slope - 1.0) <= 0.1
    # discrete solve agrees with the dispersion relation
    _, pairs = _solve(interval_mesh(0, 1, 64), "P1", 1, k=8)
    np.testing.assert_allclose([p.lam for p in pairs], lam_h, rtol=1e-11)


def test_lambda_scaling_p2_h1_errors():
    h = 1 / 64
    space, pairs = _solve(interval_mesh(0, 1, 64), "P2", 1, k=8)
    exact = spectra.laplace_interval(8)
    errs = [rates.broken_error(rates.match_eigenpair(pairs, space, exact, j).u,
                               rates.match_eigenpair(pairs, space, exact, j).uh, 1)
            for j in range(1, 9)]
    fit = rates.lambda_scaling(errs, [p.lam for p in exact], h, cap=0.16)
    assert abs(fit.slope - 1.5) <= 0.2


# -- bound ratios ------------------------------------------------------------

@given(st.floats(1e-3, 0.5), st.floats(1.0, 1e4), st.integers(1, 4), st.integers(0, 3), st.integers(1, 2))
def test_bound_ratio_identity(h, lam, r, j, m):
    e = h ** (r - j) * lam ** (r / (2 * m))
    assert abs(rates.bound_ratio(e, h, lam, r, j, m) - 1.0) < 1e-12


def test_bound_ratio_p1_band():
    ratios = []
    for n in (16, 32, 64):
        space, pairs = _solve(interval_mesh(0, 1, n), "P1", 1, k=1)
        mt = rates.match_eigenpair(pairs, space, spectra.laplace_interval(1), 1)
        e = rates.broken_error(mt.u, mt.uh, 1, semi=True)
        ratios.append(rates.bound_ratio(e, 1 / n, mt.lam, 2, 1))
    assert min(ratios) > 0 and max(ratios) / min(ratios) <= 2


# -- broken norms ------------------------------------------------------------

def test_broken_error_constant():
    mesh = interval_mesh(0, 1, 5)
    assert abs(rates.broken_error(_const(1.0), None, 0, mesh=mesh) - 1.0) < 1e-14
    assert abs(rates.broken_error(_const(1.0), None, 0, p=math.inf, mesh=mesh) - 1.0) < 1e-14


def test_broken_error_reproduction():
    space = FESpace(rect_mesh(3, 3), get_family("Q2"))

    def f(x, g):
        X, Y = x[:, 0], x[:, 1]
        table = {(0, 0): X * Y * (1 - X) * (1 - Y), (1, 0): Y * (1 - Y) * (1 - 2 * X),
                 (0, 1): X * (1 - X) * (1 - 2 * Y), (2, 0): -2 * Y * (1 - Y),
                 (0, 2): -2 * X * (1 - X), (1, 1): (1 - 2 * X) * (1 - 2 * Y)}
        return table[tuple(g)]

    uh = interpolate(space, f)
    assert rates.broken_error(f, uh, 2) < 1e-11


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_weighted_form_on_uniform_mesh(p):
    n, r, j = 8, 3, 1
    space, pairs = _solve(rect_mesh(n, n), "Q2", k=1)
    mt = rates.match_eigenpair(pairs, space, spectra.laplace_square(1), 1)
    plain = rates.broken_error(mt.u, mt.uh, j, p, region="G")
    weighted = rates.broken_error(mt.u, mt.uh, j, p, region="G", weights="local", r=r)
    hK = math.sqrt(2) / n
    assert abs(weighted - hK ** (j - r) * plain) <= 1e-12 * weighted


def test_mixed_form_reduces_to_local_when_q_equals_p():
    space, pairs = _solve(interval_mesh(0, 1, 16), "P2", 1, k=1)
    mt = rates.match_eigenpair(pairs, space, spectra.laplace_interval(1), 1)
    a = rates.broken_error(mt.u, mt.uh, 1, weights="local", r=3)
    b = rates.broken_error(mt.u, mt.uh, 1, weights="mixed", r=3, q=2.0)
    assert abs(a - b) <= 1e-13 * a


def test_broken_error_rejects_bad_exponents():
    mesh = interval_mesh(0, 1, 4)
    with pytest.raises(ValueError):
        rates.broken_error(_const(1.0), None, 0, p=1.5, mesh=mesh)
    with pytest.raises(ValueError):
        rates.broken_error(_const(1.0), None, 0, p=4.0, q=3.0, weights="mixed", r=2, mesh=mesh)
    with pytest.raises(ValueError):
        rates.broken_error(_const(1.0), None, 0, weights="local", mesh=mesh)


def test_region_G_uses_inner_cells_only():
    mesh = interval_mesh(0, 1, 8)
    e = rates.broken_error(_const(1.0), None, 0, region="G", mesh=mesh)
    assert abs(e - math.sqrt(0.5)) < 1e-14


# -- matching ----------------------------------------------------------------

def test_interval_matching_is_identity():
    space, pairs = _solve(interval_mesh(0, 1, 32), "P2", 1, k=5)
    exact = spectra.laplace_interval(5)
    for j in range(1, 6):
        mt = rates.match_eigenpair(pairs, space, exact, j)
        assert mt.positions == (j - 1,)
        assert mt.lam_h == pairs[j - 1].lam
        assert rates.l2_inner(mt.u, mt.uh) > 0


def test_sign_flip_gives_same_error():
    space, pairs = _solve(interval_mesh(0, 1, 16), "P1", 1, k=2)
    exact = spectra.laplace_interval(2)
    flipped = [gevp.EigenPair(p.lam, -p.vector, p.residual) for p in pairs]
    for j in (1, 2):
        a = rates.match_eigenpair(pairs, space, exact, j)
        b = rates.match_eigenpair(flipped, space, exact, j)
        assert rates.broken_error(a.u, a.uh, 1) == pytest.approx(rates.broken_error(b.u, b.uh, 1), rel=1e-14)


def test_cluster_matches_rotation_brute_force():
    space, pairs = _solve(rect_mesh(8, 8), "Q1", k=4)
    exact = spectra.laplace_square(3)
    mt = rates.match_eigenpair(pairs, space, exact, 2)
    assert mt.positions == (1, 2)
    assert mt.lam_h == pairs[1].lam
    got = rates.broken_error(mt.u, mt.uh, 0)
    v1, v2 = pairs[1].vector, pairs[2].vector
    # oracle: scan the rotation angle (the scale is the optimal L2 coefficient),
    # then polish the best grid point with a bounded scalar search

    def err(t):
        f = FeFunction(space, math.cos(t) * v1 + math.sin(t) * v2)
        c = rates.l2_inner(mt.u, f)
        return rates.broken_error(mt.u, FeFunction(space, c * f.coeffs), 0)

    grid = np.linspace(0, math.pi, 181)
    t0 = grid[int(np.argmin([err(t) for t in grid]))]
    best = minimize_scalar(err, bounds=(t0 - 0.02, t0 + 0.02), method="bounded",
                           options={"xatol": 1e-10}).fun
    assert got <= best + 1e-12
    assert abs(got - best) <= 1e-8


def test_matching_window_errors():
    space, pairs = _solve(rect_mesh(6, 6), "Q1", k=2)
    exact = spectra.laplace_square(3)
    with pytest.raises(IndexError):
        rates.match_eigenpair(pairs, space, exact, 2)
    with pytest.raises(IndexError):
        rates.match_eigenpair(pairs, space, exact, 9)


# -- anisotropic bound ---------------------------------------------------------

def _cube(x, g):
    g = tuple(g)
    table = {0: x[:, 0] ** 3, 1: 3 * x[:, 0] ** 2, 2: 6 * x[:, 0], 3: np.full(len(x), 6.0)}
    return table[g[0]] if g[1] == 0 and g[0] <= 3 else np.zeros(len(x))


def test_rhs_seminorm_x_cubed_q2():
    fam = get_family("Q2")
    for nx, ny in ((4, 2), (4, 16)):
        mesh = rect_mesh(nx, ny)
        got = rates.rhs_seminorm(_cube, mesh, fam, (0, 0))
        want = math.sqrt(np.sum(mesh.sizes[:, 0] ** 6 * 36 * mesh.measures))
        assert abs(got - want) <= 1e-12 * want


def test_rhs_seminorm_vanishes_on_local_space():
    # Q2 functions of total degree <= r = 3 have no Ind_rest or order-4 derivatives
    def q2(x, g):
        X, Y = x[:, 0], x[:, 1]
        table = {(0, 0): X**2 * Y + X * Y**2, (1, 0): 2 * X * Y + Y**2, (0, 1): X**2 + 2 * X * Y,
                 (2, 0): 2 * Y, (0, 2): 2 * X, (1, 1): 2 * X + 2 * Y,
                 (2, 1): np.full(len(x), 2.0), (1, 2): np.full(len(x), 2.0)}
        return table.get(tuple(g), np.zeros(len(x)))

    assert rates.rhs_seminorm(q2, rect_mesh(3, 5), get_family("Q2"), (0, 0)) == 0.0


def test_rhs_seminorm_keeps_order_four_terms():
    # x^2 y^2 lies in Q2 but D^(2,2) = 4 enters the |gamma| = r + 1 sum
    def f(x, g):
        X, Y = x[:, 0], x[:, 1]
        table = {(0, 0): X**2 * Y**2, (3, 0): 0 * X, (0, 3): 0 * X, (2, 2): np.full(len(x), 4.0)}
        return table.get(tuple(g), np.zeros(len(x)))

    mesh = rect_mesh(3, 5)
    want = math.sqrt(np.sum(mesh.sizes[:, 0] ** 4 * mesh.sizes[:, 1] ** 4 * 16 * mesh.measures))
    assert abs(rates.rhs_seminorm(f, mesh, get_family("Q2"), (0, 0)) - want) <= 1e-13 * want


def test_rhs_seminorm_alpha_shift():
    mesh = rect_mesh(8, 8)
    fam = get_family("Q2")
    a = rates.rhs_seminorm(_cube, mesh, fam, (0, 0))
    b = rates.rhs_seminorm(_cube, mesh, fam, (1, 0))
    assert abs(b - a * 8) <= 1e-12 * b


def test_rhs_seminorm_needs_tensor_mesh():
    from eigenrate.meshkit import unit_square_triangles

    with pytest.raises(ValueError):
        rates.rhs_seminorm(_cube, unit_square_triangles(2), get_family("P2", 2), (0, 0))


def test_best_approximation_below_rhs():
    fam = get_family("Q2")
    for n in (4, 8, 16):
        mesh = rect_mesh(n, 4)
        pp = rates.best_approximation(mesh, fam, _cube)
        err = rates.broken_error(_cube, pp, 0, mesh=mesh)
        assert err <= 5 * rates.rhs_seminorm(_cube, mesh, fam, (0, 0))


# -- quasi-optimality -----------------------------------------------------------

@pytest.mark.parametrize("n", [8, 16, 32])
def test_best_approximation_not_worse_than_galerkin(n):
    mesh = interval_mesh(0, 1, n)
    fam = get_family("P2", 1)
    space, pairs = _solve(mesh, "P2", 1, k=1)
    mt = rates.match_eigenpair(pairs, space, spectra.laplace_interval(1), 1)
    best = rates.best_approximation(mesh, fam, mt.u, norm="h1")
    assert rates.broken_error(mt.u, best, 1, mesh=mesh) <= rates.broken_error(mt.u, mt.uh, 1) * (1 + 1e-12)


# -- reliability -----------------------------------------------------------------

def test_reliable_count():
    exact = np.array([1.0, 2.0, 3.0, 4.0])
    disc = np.array([1.001, 2.5, 3.0, 4.0])
    assert rates.reliable_count(disc, exact, 0.01) == 1
    assert rates.reliable_count(disc, exact, math.inf) == 4
    assert rates.reliable_count(disc, exact, 0.6, "absolute") == 4
    assert rates.reliable_count(disc * 10, exact, 0.01) == 0
    with pytest.raises(ValueError):
        rates.reliable_count(disc, exact, 0.1, "log")


def test_reliability_p1_interval():
    spectra_ = []
    for n in (256, 512, 1024):
        h = 1 / n
        k = np.arange(1, n)
        lam_h = 6 / h**2 * (1 - np.cos(k * math.pi * h)) / (2 + np.cos(k * math.pi * h))
        spectra_.append((n - 1, lam_h))
    exact = (np.arange(1, 1024) * math.pi) ** 2
    rep = rates.reliability(spectra_, exact, 0.01)
    for N, c in zip(rep.N, rep.counts):
        assert abs(c / N - 0.110) <= 0.01
    assert abs(rep.exponent - 1.0) <= 0.1
    assert abs(rep.theta) <= 0.1
    assert rates.reliability(spectra_, exact, math.inf).counts == tuple(n - 1 for n in (256, 512, 1024))


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 200), st.floats(1e-4, 0.5))
def test_reliable_count_monotone_in_mesh(n, tol):
    k = np.arange(1, 2 * n)
    exact = (k * math.pi) ** 2

    def disp(m):
        h = 1 / m
        kk = np.arange(1, m)
        return 6 / h**2 * (1 - np.cos(kk * math.pi * h)) / (2 + np.cos(kk * math.pi * h))

    assert rates.reliable_count(disp(n), exact, tol) <= rates.reliable_count(disp(2 * n), exact, tol)


def test_reliability_errors_and_theta():
    s = [(3, [1.0]), (7, [1.0])]
    with pytest.raises(ValueError):
        rates.reliability(s, [1.0], 0.1)
    with pytest.raises(ValueError):
        rates.reliability(s + [(15, [1.0])], [1.0], 0.0)
    assert rates.theta_from_exponent(0.75, "relative", None) == 0.25
    assert rates.theta_from_exponent(0.5, "absolute", 2) == 0.0
    assert math.isnan(rates.theta_from_exponent(0.5, "absolute", None))
