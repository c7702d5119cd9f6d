import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratdil.domain import interior_points
from ratdil.matinner import (E1, E2, StandardZeroSetViolation, TeamOfProjections,
                             attempt_diagonalize, build_H, det_zeros, extra_nodes,
                             perturb_team, pick_matrix, psi, rotated_projection,
                             standard_zero_set, trivial_team, unitarity_residual)


@pytest.fixture(scope="module")
def samples(D):
    return interior_points(D, 8, seed=3)


# --- teams ---------------------------------------------------------------------

def test_team_rejects_non_projection():
    with pytest.raises(ValueError):
        TeamOfProjections((np.diag([1.0, 0.0]), np.array([[1.0, 0.1], [0.0, 0.0]])))


def test_team_pins_first_projection():
    with pytest.raises(ValueError):
        TeamOfProjections((np.diag([0.0, 1.0]), np.diag([1.0, 0.0])))


def test_team_rejects_trivial_pair():
    with pytest.raises(ValueError):
        TeamOfProjections((np.diag([1.0, 0.0]), np.eye(2)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.2))
def test_perturbed_team_is_a_team(t):
    S = perturb_team(t)
    for j in range(1, S.n + 1):
        P, M = S.pair(j)
        assert np.allclose(P + M, np.eye(2), atol=1e-15)
        assert np.max(np.abs(P @ P - P)) < 1e-12
        assert np.max(np.abs(P - P.conj().T)) < 1e-12


def test_perturbation_linear_in_t():
    S0 = trivial_team(2)
    ts = np.array([0.01, 0.02, 0.05])
    d = np.array([perturb_team(t).distance(S0) for t in ts])
    slopes = d / ts
    assert np.all(np.abs(slopes - 1) < 0.2)
    assert perturb_team(0.05).distance(S0) >= 1e-3
    assert perturb_team(0.0).distance(S0) == 0


def test_perturbation_bad_arguments():
    with pytest.raises(ValueError):
        perturb_team(0.1, n=2, hole=1)
    with pytest.raises(ValueError):
        perturb_team(-0.1)


# --- H -------------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.0, 0.05, 0.1])
def test_H_normalized_and_period_free(D, sel, rng, t):
    H = build_H(D, perturb_team(t), sel.p, sel.b)
    assert np.max(np.abs(H(np.array([complex(sel.b)]))[0] - np.eye(2))) < 1e-8
    for _ in range(5):
        x = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        x /= np.linalg.norm(x)
        assert np.max(np.abs(H.periods(x))) < 1e-7
    assert H.symmetry_defect < 1e-8


def test_H_trivial_team_is_diagonal(D, sel, tp, tq):
    H = build_H(D, trivial_team(2), sel.p, sel.b)
    z = interior_points(D, 20, seed=31)
    V = H(z)
    assert np.max(np.abs(V[:, 0, 1])) < 1e-14 and np.max(np.abs(V[:, 1, 0])) < 1e-14
    # h_p = Re((1 + psi)/(1 - psi)) recovers the scalar Herglotz functions
    for k, f in enumerate((tp, tq)):
        w = f(z)
        assert np.max(np.abs(V[:, k, k] - np.real((1 + w) / (1 - w)))) < 1e-8


def test_H_hermitian(D, sel):
    H = build_H(D, perturb_team(0.1), sel.p, sel.b)
    V = H(interior_points(D, 20, seed=32))
    assert np.max(np.abs(V - np.conj(np.swapaxes(V, -1, -2)))) < 1e-14
    assert np.min(np.linalg.eigvalsh(V)) > 0


# --- Psi -----------------------------------------------------------------------

def test_psi_trivial_is_diagonal(D, F0, tp, tq):
    z = interior_points(D, 50, seed=33)
    V = F0(z)
    assert np.max(np.abs(V[:, 0, 0] - tp(z))) < 1e-6
    assert np.max(np.abs(V[:, 1, 1] - tq(z))) < 1e-6
    assert np.max(np.abs(V[:, 0, 1])) < 1e-6 and np.max(np.abs(V[:, 1, 0])) < 1e-6


@pytest.mark.parametrize("t", [0.0, 0.05, 0.1])
def test_psi_inner_properties(D, sel, t):
    F = psi(D, perturb_team(t), sel.p, sel.b)
    assert unitarity_residual(F) < 1e-6
    assert np.max(np.abs(F(np.array([complex(sel.b)]))[0])) < 1e-8
    z = interior_points(D, 100, seed=34)
    assert np.max(np.linalg.norm(F(z), 2, axis=(-2, -1))) <= 1 + 1e-8
    assert np.max(np.abs(F.radial_limit(-1 + 0j) - np.eye(2))) < 1e-6


@pytest.mark.parametrize("t", [0.0, 0.05, 0.1])
def test_psi_eigenvector_pinning(D, sel, t):
    F = psi(D, perturb_team(t), sel.p, sel.b)
    p1 = sel.p.points[1]
    assert np.max(np.abs(F.radial_limit(p1) @ E1 - E1)) < 1e-6
    assert np.max(np.abs(F.radial_limit(np.conj(p1)) @ E2 - E2)) < 1e-6
    for i in range(1, D.n + 1):
        P = F.S.pair(i)[0]
        assert np.max(np.abs(F.radial_limit(sel.p.points[i]) @ P - P)) < 1e-6


def test_radial_limit_converges(D, sel):
    F = psi(D, perturb_team(0.1), sel.p, sel.b)
    P = F.S.pair(2)[0]
    q = sel.p.points[2]
    errs = [np.max(np.abs(F.radial_limit(q, h) @ P - P)) for h in (1e-3, 1e-4)]
    assert errs[1] < errs[0] / 100


def test_psi_converges_to_trivial(D, sel, F0):
    z = interior_points(D, 30, seed=35)
    base = F0(z)
    ts = np.array([0.01, 0.02, 0.04])
    dev = np.array([np.max(np.abs(psi(D, perturb_team(t), sel.p, sel.b)(z) - base)) for t in ts])
    C = dev / ts
    assert np.all(dev > 0)
    assert np.max(C) / np.min(C) < 1.5


# --- zeros ---------------------------------------------------------------------

def test_det_zeros_trivial(D, sel, F0, tp, tq):
    rep = F0.zero_report
    assert int(rep.multiplicities.sum()) == 2 * D.n + 2
    at_b = np.abs(rep.zeros - sel.b) < 1e-6
    assert int(rep.multiplicities[at_b].sum()) == 2
    expected = np.concatenate([tp.zeros, tq.zeros])
    expected = expected[np.abs(expected - sel.b) > 1e-6]
    found = rep.zeros[~at_b]
    d = np.abs(found[:, None] - expected[None, :])
    assert np.max(d.min(axis=1)) < 1e-6 and np.max(d.min(axis=0)) < 1e-6


def test_det_zeros_conjugate_pairs(sel, F0):
    z = F0.zero_report.zeros
    nonreal = z[np.abs(z.imag) > 1e-6]
    assert len(nonreal) > 0
    assert np.max(np.min(np.abs(nonreal[:, None] - np.conj(nonreal)[None, :]), axis=1)) < 1e-6


@pytest.mark.parametrize("t", [0.02, 0.05, 0.08, 0.1])
def test_det_zero_count_stable(D, sel, t):
    F = psi(D, perturb_team(t), sel.p, sel.b)
    assert int(det_zeros(F).multiplicities.sum()) == 2 * D.n + 2


def test_det_zeros_are_zeros(D, Ft):
    z = Ft.zero_report.zeros
    assert np.max(np.abs(Ft.det(z))) < 1e-10


# --- standard zero set ---------------------------------------------------------

def test_standard_zero_set_trivial(D, F0, crit):
    szs = standard_zero_set(F0, crit.points)
    n = D.n
    along_e1 = np.sum(np.abs(np.abs(szs.gammas[:, 0]) - 1) < 1e-6)
    assert along_e1 == n
    assert szs.report["conditions"]["critical_avoidance"]["margin"] > 1e-3
    for a, g in zip(szs.points, szs.gammas):
        assert np.linalg.norm(np.conj(F0(np.array([a]))[0]).T @ g) < 1e-6


def test_standard_zero_set_selected(D, Ft, crit, selected_t):
    t, _, szs, trace = selected_t
    assert 0 < t <= 0.1
    assert trace[-1]["szs"] and trace[-1]["eps"]
    conds = szs.report["conditions"]
    assert all(c["ok"] for c in conds.values())
    assert conds["not_collinear"]["margin"] > 1e-6


def test_standard_zero_set_violation_reported(F0):
    # a critical point placed on a zero violates the avoidance condition
    with pytest.raises(StandardZeroSetViolation) as info:
        standard_zero_set(F0, [F0.zero_report.zeros[1].real], sep_tol=1.0)
    assert "critical_avoidance" in str(info.value)
    assert not info.value.report["conditions"]["critical_avoidance"]["ok"]


# --- diagonalization -----------------------------------------------------------

def test_diagonalize_trivial(F0, tp, tq, samples):
    res = attempt_diagonalize(F0, samples)
    assert res.success and res.residual < 1e-6
    ref = np.stack([tp(samples), tq(samples)], axis=1)
    # each recovered phi_k equals one of psi_p, psi_mp up to a unimodular constant
    for k in range(2):
        ratios = [res.phi[:, k] / ref[:, j] for j in range(2)]
        spread = [np.ptp(np.abs(r)) + np.ptp(np.angle(r / r[0])) for r in ratios]
        j = int(np.argmin(spread))
        assert spread[j] < 1e-6
        assert abs(abs(ratios[j][0]) - 1) < 1e-6


def test_diagonalize_perturbed_fails(D, sel, samples):
    F = psi(D, perturb_team(0.05), sel.p, sel.b)
    res = attempt_diagonalize(F, samples)
    assert not res.success
    assert res.witness >= 1e-4


def test_diagonalize_unimodular_multiple(F0, samples):
    class Scaled:
        def __call__(self, z):
            return np.exp(0.7j) * F0(z)

    assert attempt_diagonalize(Scaled(), samples).success


@settings(max_examples=10, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(0, np.pi))
def test_diagonalize_unitary_invariance(a, b, c):
    from ratdil.domain import reference_domain
    from ratdil.testfn import select_offX

    D = reference_domain()
    sel = select_offX(D)
    z = interior_points(D, 8, seed=3)

    def unitary(x, y):
        return np.array([[np.cos(x), -np.exp(1j * y) * np.sin(x)],
                         [np.exp(-1j * y) * np.sin(x), np.cos(x)]])

    U, V = unitary(a, b), unitary(c, a)
    for t in (0.0, 0.05):
        F = psi(D, perturb_team(t), sel.p, sel.b)

        class Rotated:
            def __call__(self, w):
                return U @ F(w) @ V

        r0, r1 = attempt_diagonalize(F, z), attempt_diagonalize(Rotated(), z)
        assert r0.success == r1.success
        assert abs(r0.witness - r1.witness) < 1e-8


def test_diagonalize_needs_six_samples(F0, samples):
    with pytest.raises(ValueError):
        attempt_diagonalize(F0, samples[:5])


# --- Pick matrix ---------------------------------------------------------------

@pytest.mark.parametrize("backend", ["gram", "theta"])
def test_pick_rank_at_zero_set(D, sel, Ft, gram, kernel, selected_t, backend):
    szs = selected_t[2]
    base = np.concatenate([szs.points, [sel.b]])
    pts = np.concatenate([base, extra_nodes(D, base)])
    res = pick_matrix(Ft, {"gram": gram, "theta": kernel}[backend], pts)
    assert len(pts) == 2 * D.n + 3
    assert res.rank == 2 * D.n + 2
    assert res.min_eigenvalue >= -1e-8 * res.singular_values[0]


def test_pick_single_point(sel, Ft, gram):
    res = pick_matrix(Ft, gram, [sel.b])
    assert res.rank == 2
    assert np.allclose(res.matrix, np.eye(2) * gram.kernel(sel.b, sel.b).real, atol=1e-10)


def test_pick_psd_random(D, Ft, kernel):
    # the closed-form kernel stays accurate up to the boundary
    res = pick_matrix(Ft, kernel, interior_points(D, 10, seed=36))
    assert res.min_eigenvalue >= -1e-8 * res.singular_values[0]


def test_pick_psd_random_gram(D, Ft, gram):
    # the truncated Gram expansion is trusted away from the boundary
    res = pick_matrix(Ft, gram, interior_points(D, 10, seed=36, margin=0.1))
    assert res.min_eigenvalue >= -1e-8 * res.singular_values[0]


def test_rotated_projection_rank_one():
    P = rotated_projection(0.3)
    assert abs(np.trace(P) - 1) < 1e-15
    assert np.allclose(P @ P, P)
