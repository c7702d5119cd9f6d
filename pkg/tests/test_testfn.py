import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratdil.domain import boundary_grid, fixed_points, interior_points, reference_domain
from ratdil.harmonic import harmonic_char
from ratdil.testfn import (PiPoint, canonical_f, cofactor_vector, kernel_vector, m_matrix,
                           test_function)

B_TEST = -0.8


def random_p(D, rng, constrained=False):
    k = D.n if constrained else D.n + 1
    return PiPoint.from_angles(D, rng.uniform(-np.pi, np.pi, k), constrained)


def test_m_matrix_rank_and_signs(D, rng):
    for _ in range(10):
        M = m_matrix(D, random_p(D, rng))
        s = np.linalg.svd(M, compute_uv=False)
        assert s[D.n - 1] / s[0] > 1e-8
        for j in range(D.n):
            for i in range(D.n + 1):
                assert (M[j, i] > 0) == (i == j + 1)


def test_m_matrix_right_block_positive_determinant(D, rng):
    for _ in range(50):
        M = m_matrix(D, random_p(D, rng))
        assert np.linalg.det(M[:, 1:]) > 0


def test_m_matrix_rejects_off_curve_point(D):
    p = PiPoint((-1 + 0j, -0.5 + 0.2j, 0.65 + 0j))
    with pytest.raises(ValueError):
        m_matrix(D, p)


def test_kernel_vector_fifty_random_points(D, rng):
    for _ in range(50):
        p = random_p(D, rng)
        kv = kernel_vector(D, p, B_TEST)
        M = m_matrix(D, p)
        assert np.all(kv.kappa > 0)
        assert abs(kv.kappa.sum() - 1) < 1e-12
        assert np.max(np.abs(M @ kv.kappa)) < 1e-8
        # SVD route against the cofactor route
        assert kv.cosine > 1 - 1e-10


def test_cofactor_vector_spans_kernel():
    M = np.array([[1.0, 2.0, -1.0], [0.5, -1.0, 3.0]])
    v = cofactor_vector(M)
    assert np.max(np.abs(M @ v)) < 1e-12


def test_h_p_normalized_at_b(D, rng):
    from ratdil.harmonic import PoissonSum

    for _ in range(5):
        kv = kernel_vector(D, random_p(D, rng), B_TEST)
        h = PoissonSum(kv.kernels, kv.tau)
        assert abs(float(h(np.array([B_TEST]))[0]) - 1) < 1e-8


def test_canonical_f_properties(D, rng):
    p = random_p(D, rng)
    f = canonical_f(D, p, B_TEST)
    assert abs(complex(f(np.array([B_TEST]))[0]) - 1) < 1e-9
    w = interior_points(D, 100, seed=9)
    assert np.all(f(w).real > 0)


def test_canonical_f_boundary_values_vanish_off_support(D, rng):
    p = random_p(D, rng)
    f = canonical_f(D, p, B_TEST)
    g = boundary_grid(D, 128, offset=0.5)
    far = np.min(np.abs(g.point[:, None] - np.array(p.points)[None, :]), axis=1) >= 0.3
    assert np.max(np.abs(f(g.point[far]).real)) < 1e-6


def test_test_function_unimodular_and_vanishing(D, tp):
    g = boundary_grid(D, 256, offset=0.5)
    far = np.min(np.abs(g.point[:, None] - np.array(tp.p.points)[None, :]), axis=1) >= 0.1
    assert np.max(np.abs(np.abs(tp(g.point[far])) - 1)) < 1e-6
    assert abs(complex(tp(np.array([tp.b]))[0])) < 1e-8
    assert tp.winding == D.n + 1


def test_mirror_relation(D, tp, tq):
    z = interior_points(D, 20, seed=10)
    assert np.max(np.abs(np.conj(tp(np.conj(z))) - tq(z))) < 1e-6


def test_one_points_one_per_curve(D, tp):
    pts = tp.one_points()
    for i, (c, z) in enumerate(zip(D.circles, pts)):
        assert abs(abs(z - c.center) - c.radius) < 1e-12
    assert tp.curve_windings() == [1] * (D.n + 1)


def test_zeros_inside_domain(D, tp):
    assert np.all(D.contains(tp.zeros))
    assert len(tp.zeros) == D.n + 1


def test_select_offx_conditions(D, sel, tp):
    z = tp.zeros
    real = np.abs(z.imag) < 1e-9
    assert real.sum() == 1
    assert abs(z[real][0] - sel.b) < 1e-8
    assert np.min(np.abs(z[~real].imag)) >= 1e-3
    d = np.abs(z[:, None] - z[None, :])[np.triu_indices(len(z), 1)]
    assert d.min() >= 1e-3
    # no zero is the conjugate of another
    assert np.min(np.abs(z[~real][:, None] - np.conj(z[~real])[None, :])) >= 1e-3
    assert float(harmonic_char(D, 0)(np.array([sel.b]))[0]) > 0.5
    base = fixed_points(D).base_point
    assert abs(complex(tp(np.array([base]))[0]) - 1) < 1e-6


def test_constrained_and_free_differ_by_unimodular_constant(D, sel):
    a = test_function(D, sel.p, sel.b, constrain=True, locate_zeros=False)
    b = test_function(D, sel.p, sel.b, constrain=False, locate_zeros=False)
    z = interior_points(D, 30, seed=11)
    r = a(z) / b(z)
    assert np.max(np.abs(r - r[0])) < 1e-10
    assert abs(abs(r[0]) - 1) < 1e-12


def test_kappa_continuity(D, rng):
    angles = rng.uniform(-np.pi, np.pi, D.n + 1)
    k0 = kernel_vector(D, PiPoint.from_angles(D, angles), B_TEST).kappa
    k1 = kernel_vector(D, PiPoint.from_angles(D, angles + 1e-4), B_TEST).kappa
    assert np.max(np.abs(k1 - k0)) < 1e-3


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-3.1, 3.1), min_size=2, max_size=2))
def test_constrained_test_functions_are_inner(angles):
    D = reference_domain()
    p = PiPoint.from_angles(D, angles, constrained=True)
    psi = test_function(D, p, B_TEST)
    assert psi.winding == D.n + 1
    base = fixed_points(D).base_point
    assert abs(complex(psi(np.array([base]))[0]) - 1) < 1e-6
    z = interior_points(D, 30, seed=12)
    assert np.all(np.abs(psi(z)) < 1)
