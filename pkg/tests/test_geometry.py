import numpy as np
import pytest
import scipy.linalg as sla

from normsol.continuation import auto_grid, ground_states_from_state, init_state
from normsol.exceptions import ChartError
from normsol.geometry import (
    Chart,
    _gram,
    chart_energy,
    degree_sign,
    dilation_direction,
    hessian_form,
    lowest_tangent_basis,
    morse_index,
    morse_spectrum,
    orthonormal_tangent_basis,
    riesz_of_l2,
    stereo_fwd,
    stereo_inv,
    tangent_hessian,
    tangent_project,
)
from normsol.radial import h1_norm, inner_h1, integrate, l2_norm_sq
from normsol.system import SystemParams


def omega_i(M, ell=1, r=1.0):
    params = SystemParams.build(3, 3.0, [1.0] * ell, [r] * ell, 0.0, ell=ell)
    state = init_state(params, auto_grid(params, M=M))
    return params, ground_states_from_state(state, params)


@pytest.fixture(scope="module")
def gs():
    return omega_i(2001)[1][0]


@pytest.fixture(scope="module")
def coarse():
    return omega_i(401)[1][0]


def random_smooth(grid, rng, terms=4):
    vals = np.zeros(grid.M)
    for _ in range(terms):
        c, w = rng.normal(), rng.uniform(0.05, 0.5) * grid.R
        vals += c * np.exp(-(grid.r / w) ** 2)
    vals[-1] = 0.0
    return grid.field(vals)


def sphere_point(gs, rng):
    u = gs.field + random_smooth(gs.grid, rng) * (rng.uniform(0.1, 3.0) * gs.amplitude)
    return u * np.sqrt(gs.mass / l2_norm_sq(u))


def test_chart_base_maps_to_origin(gs):
    chart = Chart.at(gs.field)
    assert np.max(np.abs(stereo_fwd(chart, gs.field).values)) == 0.0
    assert np.array_equal(stereo_inv(chart, gs.grid.zeros()).values, gs.field.values)


def test_antipode_excluded(gs):
    with pytest.raises(ChartError, match="antipode"):
        stereo_fwd(Chart.at(gs.field), -gs.field)


def test_off_sphere_rejected(gs):
    with pytest.raises(ChartError):
        stereo_fwd(Chart.at(gs.field), 2 * gs.field)
    with pytest.raises(ChartError):
        Chart(gs.field, 2.0 * np.sqrt(gs.mass))


def test_chart_identities_random(gs, rng):
    chart = Chart.at(gs.field)
    r2 = chart.radius**2
    scale = h1_norm(gs.field)
    for _ in range(100):
        u = sphere_point(gs, rng)
        v = stereo_fwd(chart, u)
        assert abs(integrate(gs.field * v)) <= 1e-10 * chart.radius * (1 + np.sqrt(l2_norm_sq(v)))
        back = stereo_inv(chart, v)
        assert h1_norm(back - u) <= 1e-9 * (scale + h1_norm(u))
        w = tangent_project(gs.field, random_smooth(gs.grid, rng) * rng.uniform(0.1, 10) * gs.amplitude)
        x = stereo_inv(chart, w)
        assert abs(l2_norm_sq(x) - r2) <= 1e-10 * r2
        assert h1_norm(stereo_fwd(chart, x) - w) <= 1e-9 * (1 + h1_norm(w))


def test_projection(gs, rng):
    base = gs.field
    g = riesz_of_l2(base)
    assert h1_norm(tangent_project(base, g)) <= 1e-10 * h1_norm(g)
    v = random_smooth(gs.grid, rng)
    pv = tangent_project(base, v)
    assert abs(integrate(base * pv)) <= 1e-10 * h1_norm(v) * np.sqrt(gs.mass)
    assert h1_norm(tangent_project(base, pv) - pv) <= 1e-10 * h1_norm(pv)
    # H1-orthogonality of the removed part
    assert abs(inner_h1(v - pv, pv)) <= 1e-10 * h1_norm(v) ** 2


def test_basis_invariants(gs):
    basis = lowest_tangent_basis(gs, 20)
    assert np.max(np.abs(basis.gram() - np.eye(20))) < 1e-10
    assert np.max(np.abs(basis.tangency())) < 1e-10 * np.sqrt(gs.mass)
    H = tangent_hessian(gs, basis)
    assert np.array_equal(H, H.T)
    assert np.allclose(np.diag(H), basis.eigenvalues, rtol=1e-8, atol=1e-10)


def test_chart_hessian_finite_differences():
    _, (g,) = omega_i(801)
    chart = Chart.at(g.field)
    basis = lowest_tangent_basis(g, 6)
    H = tangent_hessian(g, basis)
    rng = np.random.default_rng(11)
    s = 1e-3
    phi0 = chart_energy(g, chart, g.grid.zeros())
    for _ in range(5):
        c = rng.normal(size=6)
        c /= np.linalg.norm(c)
        v = basis.field(0) * 0.0
        for a in range(6):
            v = v + c[a] * basis.field(a)
        fd = (chart_energy(g, chart, s * v) - 2 * phi0 + chart_energy(g, chart, -s * v)) / s**2
        assert fd == pytest.approx(4 * c @ H @ c, rel=1e-4)


def test_dense_eigen_oracle(coarse):
    H = hessian_form(coarse).toarray()
    G = _gram(coarse.grid).toarray()
    c = coarse.grid.weights[:-1] * coarse.field.values[:-1]
    Z = sla.null_space(c[None, :])
    dense = sla.eigh(Z.T @ H @ Z, Z.T @ G @ Z, eigvals_only=True)
    sparse = lowest_tangent_basis(coarse, 8).eigenvalues
    assert np.allclose(sparse, dense[:8], rtol=1e-8, atol=1e-10)


def test_morse_index_one(gs):
    for k in (50, 100):
        idx, gap = morse_index(tangent_hessian(gs, lowest_tangent_basis(gs, k)))
        assert idx == 1 and gap > 0
    spec = morse_spectrum(gs, 50)
    assert spec[0] < 0 < spec[1]


def test_morse_identity():
    assert morse_index(np.eye(5)) == (0, 1.0)


def test_nested_bases_decrease(gs, rng):
    # Courant-Fischer: adding directions can only lower each Ritz value
    vecs = [random_smooth(gs.grid, rng, terms=6) for _ in range(12)]
    vecs[0] = dilation_direction(gs)
    prev = None
    for k in (4, 8, 12):
        basis = orthonormal_tangent_basis(gs.field, vecs[:k])
        ev = np.linalg.eigvalsh(tangent_hessian(gs, basis))
        if prev is not None:
            assert np.all(ev[: len(prev)] <= prev + 1e-10 * np.max(np.abs(prev)))
        prev = ev


def test_dilation_direction_negative(gs):
    d = tangent_project(gs.field, dilation_direction(gs))
    dof = d.values[:-1]
    rq = dof @ (hessian_form(gs) @ dof) / h1_norm(d) ** 2
    assert rq < 0
    basis = lowest_tangent_basis(gs, 4)
    overlap = abs(inner_h1(d, basis.field(0))) / h1_norm(d)
    assert overlap > 0.9


@pytest.mark.parametrize("ell, expected", [(1, -1), (2, 1), (3, -1)])
def test_degree_sign(ell, expected):
    params, states = omega_i(1001, ell=ell)
    assert degree_sign(params, states, 50) == expected


def test_degree_sign_checks_count():
    params, states = omega_i(401, ell=2)
    with pytest.raises(ValueError):
        degree_sign(params, states[:1], 10)


def test_dense_and_lanczos_paths_agree(coarse, monkeypatch):
    import normsol.geometry as geo

    dense = lowest_tangent_basis(coarse, 10)
    monkeypatch.setattr(geo, "DENSE_MAX_DOF", 0)
    sparse = lowest_tangent_basis(coarse, 10)
    assert np.allclose(dense.eigenvalues, sparse.eigenvalues, rtol=1e-8, atol=1e-10)
    # eigenvectors agree up to sign (the spectrum is simple here)
    for a in range(10):
        d = abs(inner_h1(dense.field(a), sparse.field(a)))
        assert d == pytest.approx(1.0, abs=1e-6)
