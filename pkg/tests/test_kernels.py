import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gamma as G

from subdiff.kernels import (
    KernelError,
    KernelRow,
    alikhanov_a_coeffs,
    alikhanov_b_coeffs,
    alikhanov_kernel_row,
    apply_discrete_caputo,
    complementary_row,
    complementary_rows,
    identity_deviation_all,
    kernel_rows,
    l1_kernel_row,
    local_consistency,
    verify_complementary_identity,
    verify_kernel_assumptions,
    verify_p_bound,
)
from subdiff.mesh import build_custom_mesh, build_graded_mesh, build_uniform_mesh, random_mesh
from subdiff.special import omega

U = build_uniform_mesh(2, T=2.0)  # tau = 1


def b_quad(mesh, alpha, n, k):
    # 2/(tau_k (tau_k + tau_{k+1})) int_{cell k} (s - t_{k-1/2}) omega_{1-a}(t_{n-theta} - s) ds
    t = mesh.times
    toff = mesh.offset_time(n, alpha / 2)
    mid = 0.5 * (t[k - 1] + t[k])
    with warnings.catch_warnings():
        # far cells: the integrand nearly cancels; quad may report it cannot
        # certify 1e-12, the comparison below still does
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(
            lambda s: (s - mid) * (toff - s) ** (-alpha) / G(1 - alpha),
            t[k - 1], t[k], epsabs=0, epsrel=1e-12, limit=200,
        )
    tk, tk1 = mesh.tau(k), mesh.tau(k + 1)
    return 2.0 / (tk * (tk + tk1)) * val


# ---- L1


def test_l1_uniform_small_rows():
    r1 = l1_kernel_row(U, 0.5, 1)
    assert r1.coeffs[0] == pytest.approx(1 / G(1.5), rel=1e-14)
    r2 = l1_kernel_row(U, 0.5, 2)
    assert r2.coeffs[0] == pytest.approx(1 / G(1.5), rel=1e-14)
    # A_1 = (sqrt 2 - 1)/Gamma(1.5)
    assert r2.coeffs[1] == pytest.approx((math.sqrt(2) - 1) / G(1.5), rel=1e-14)
    assert r2.coeffs[1] == pytest.approx(0.46738995, abs=1e-8)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_l1_matches_cell_integral(alpha):
    # A_{n-k} = (1/tau_k) int_{cell k} omega_{1-a}(t_n - s) ds, by quadrature
    mesh = build_graded_mesh(2.0, 12)
    n = 9
    row = l1_kernel_row(mesh, alpha, n)
    t = mesh.times
    for k in range(1, n + 1):
        val, _ = integrate.quad(lambda s: omega(1 - alpha, t[n] - s), t[k - 1], t[k], epsrel=1e-13, limit=200)
        assert row.coeffs[n - k] == pytest.approx(val / mesh.tau(k), rel=1e-10)


# ---- Alikhanov


def test_alikhanov_a_uniform():
    a1 = alikhanov_a_coeffs(U, 0.5, 1)
    assert a1[0] == pytest.approx(math.sqrt(0.75) / G(1.5), rel=1e-14)
    assert a1[0] == pytest.approx(0.9772050238, abs=1e-10)
    a2 = alikhanov_a_coeffs(U, 0.5, 2)
    assert a2[1] == pytest.approx((math.sqrt(1.75) - math.sqrt(0.75)) / G(1.5), rel=1e-14)
    # computed oracle: 0.5155003..., not the printed 0.51550828
    assert a2[1] == pytest.approx(0.51550031, abs=1e-8)


def test_alikhanov_b_uniform_example():
    b = alikhanov_b_coeffs(U, 0.5, 2)
    assert b[0] == 0.0
    ref = b_quad(U, 0.5, 2, 1)
    assert b[1] == pytest.approx(ref, rel=1e-10)
    mpmath.mp.dps = 30
    direct = mpmath.quad(lambda s: (s - 0.5) * (1.75 - s) ** -0.5, [0, 1]) / mpmath.sqrt(mpmath.pi)
    assert b[1] == pytest.approx(float(direct), rel=1e-12)
    assert b[1] == pytest.approx(0.01793186, abs=1e-8)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_alikhanov_b_against_quadrature(seed, alpha):
    mesh = random_mesh(40, rng=seed)
    for n in (2, 7, 40):
        b = alikhanov_b_coeffs(mesh, alpha, n)
        for k in range(1, n):
            ref = b_quad(mesh, alpha, n, k)
            assert b[n - k] == pytest.approx(ref, rel=1e-9, abs=1e-15 * abs(b[n - 1]))
            assert b[n - k] > 0


def test_tiny_first_cell_kernels_mpmath():
    # tau_1 ~ 5e-10 on this mesh: (omega(t_n) - omega(t_n - tau_1)) / tau_1
    # must keep its digits
    mesh = build_graded_mesh(5.0, 256)
    alpha = 0.5
    t = mesh.times
    mpmath.mp.dps = 40
    n = 200
    tn, t1 = mpmath.mpf(t[n]), mpmath.mpf(t[1])
    ref = (tn ** (1 - alpha) - (tn - t1) ** (1 - alpha)) / mpmath.gamma(2 - alpha) / t1
    assert l1_kernel_row(mesh, alpha, n).coeffs[n - 1] == pytest.approx(float(ref), rel=1e-13)
    toff = (1 - mpmath.mpf(alpha) / 2) * mpmath.mpf(t[n]) + mpmath.mpf(alpha) / 2 * mpmath.mpf(t[n - 1])
    ref = ((toff - mpmath.mpf(t[0])) ** (1 - alpha) - (toff - t1) ** (1 - alpha)) / mpmath.gamma(2 - alpha) / t1
    assert alikhanov_a_coeffs(mesh, alpha, n)[n - 1] == pytest.approx(float(ref), rel=1e-12)


def test_alikhanov_b_tiny_cells_no_overflow():
    # gamma = 5, N = 2048 puts t_1 near 1e-14; the series must stay finite
    mesh = build_graded_mesh(5.0, 2048)
    for n in (3, 6, 12):
        b = alikhanov_b_coeffs(mesh, 0.4, n)
        assert np.all(np.isfinite(b))
        for k in range(1, n):
            assert b[n - k] == pytest.approx(b_quad(mesh, 0.4, n, k), rel=1e-9)


def test_alikhanov_b_far_cells_series_branch():
    # far cells relative to their width go through the series; compare with
    # quadrature on a strongly graded mesh
    mesh = build_graded_mesh(5.0, 200)
    n = 200
    b = alikhanov_b_coeffs(mesh, 0.4, n)
    for k in (1, 2, 5, 20, 60, 120):
        assert b[n - k] == pytest.approx(b_quad(mesh, 0.4, n, k), rel=1e-8)


def test_alikhanov_row_composition():
    r = alikhanov_kernel_row(U, 0.5, 2)
    a = alikhanov_a_coeffs(U, 0.5, 2)
    b = alikhanov_b_coeffs(U, 0.5, 2)
    assert r.coeffs[0] == pytest.approx(a[0] + b[1], rel=1e-15)
    assert r.coeffs[1] == pytest.approx(a[1] - b[1], rel=1e-15)
    assert r.coeffs[0] == pytest.approx(0.99513689, abs=1e-8)
    # computed oracle: 0.49756844, not the printed 0.4975746
    assert r.coeffs[1] == pytest.approx(0.49756844, abs=1e-7)
    assert alikhanov_kernel_row(U, 0.5, 1).coeffs[0] == pytest.approx(0.9772050238, abs=1e-10)


# ---- exactness on linear data


@pytest.mark.parametrize("scheme", ["l1", "fraccn"])
@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_exact_on_linear(scheme, alpha):
    theta = alpha / 2 if scheme == "fraccn" else 0.0
    for mesh in (build_graded_mesh(3.0, 64), random_mesh(64, rng=7)):
        rows = kernel_rows(scheme, mesh, alpha)
        for row in rows:
            n = row.n
            val = apply_discrete_caputo(rows, mesh.times[: n + 1])
            exact = omega(2 - alpha, mesh.offset_time(n, theta))
            assert val == pytest.approx(exact, rel=1e-12)


def test_constant_history_gives_zero():
    mesh = random_mesh(20, rng=3)
    rows = kernel_rows("fraccn", mesh, 0.3)
    assert apply_discrete_caputo(rows, np.full(21, 2.5)) == 0.0
    with pytest.raises(KernelError):
        apply_discrete_caputo(rows[3], np.zeros(3))


def test_local_consistency_linear_is_roundoff():
    mesh = build_graded_mesh(2.0, 50)
    rows = kernel_rows("l1", mesh, 0.5)
    ups = local_consistency(rows, mesh, 0.0, lambda t: t, lambda t: omega(1.5, t))
    assert np.max(np.abs(ups)) < 1e-13


def test_local_consistency_largest_at_first_step():
    mesh = build_uniform_mesh(64)
    sigma = 0.5
    rows = kernel_rows("l1", mesh, 0.5)
    ups = local_consistency(rows, mesh, 0.0, lambda t: omega(1 + sigma, t), lambda t: omega(1 + sigma - 0.5, t))
    assert int(np.argmax(np.abs(ups))) == 0


# ---- complementary kernels


def test_complementary_small():
    rows = kernel_rows("l1", U, 0.5)
    p1 = complementary_row(rows[:1])
    assert p1.coeffs[0] == pytest.approx(G(1.5), rel=1e-14)
    assert abs(p1.coeffs[0] * rows[0].coeffs[0] - 1) == 0.0
    p2 = complementary_row(rows)
    hand = (rows[1].coeffs[0] - rows[1].coeffs[1]) * p2.coeffs[0] / rows[0].coeffs[0]
    assert p2.coeffs[1] == pytest.approx(hand, rel=1e-15)
    # computed oracle 0.51913971 (printed value 0.5191479 is off in the 5th digit)
    assert p2.coeffs[1] == pytest.approx(0.51913971, abs=1e-8)
    assert abs(p2.coeffs[0] * rows[1].coeffs[1] + p2.coeffs[1] * rows[0].coeffs[0] - 1) < 1e-12


def dense_complementary(rows):
    # P = K^{-1} applied to the identity sum_j P^(n)_{n-j} A^(j)_{j-k} = 1:
    # solve Q K = lower-triangular ones, row by row with mpmath
    N = len(rows)
    mpmath.mp.dps = 40
    K = mpmath.zeros(N, N)
    for r in rows:
        for k in range(1, r.n + 1):
            K[r.n - 1, k - 1] = mpmath.mpf(float(r.coeffs[r.n - k]))
    out = []
    for n in range(1, N + 1):
        Ksub = K[:n, :n]
        rhs = mpmath.matrix([[1] * n])
        q = rhs * Ksub**-1
        out.append(np.array([float(q[0, n - 1 - j]) for j in range(n)]))
    return out


@pytest.mark.parametrize("scheme", ["l1", "fraccn"])
def test_complementary_against_dense_oracle(scheme):
    mesh = random_mesh(12, rng=11)
    rows = kernel_rows(scheme, mesh, 0.6)
    ref = dense_complementary(rows)
    for p, r in zip(complementary_rows(rows), ref):
        np.testing.assert_allclose(p.coeffs, r, rtol=1e-12)


def test_column_and_row_recursions_agree():
    mesh = build_graded_mesh(3.0, 40)
    rows = kernel_rows("fraccn", mesh, 0.4)
    allp = complementary_rows(rows)
    for n in (1, 5, 40):
        np.testing.assert_allclose(complementary_row(rows[:n]).coeffs, allp[n - 1].coeffs, rtol=1e-13)


@pytest.mark.parametrize(
    "scheme, mesh",
    [("l1", build_graded_mesh(2.0, 64)), ("fraccn", random_mesh(64, rng=5))],
)
def test_identity_deviation(scheme, mesh):
    rows = kernel_rows(scheme, mesh, 0.5)
    p = complementary_rows(rows)
    assert identity_deviation_all(p, rows) < 1e-12
    assert verify_complementary_identity(p[-1], rows) < 1e-12


def test_complementary_rejects_bad_rows():
    rows = kernel_rows("l1", U, 0.5)
    with pytest.raises(KernelError):
        complementary_row(rows[1:])
    bad = KernelRow(1, 0.0, 0.5, np.array([-1.0]))
    with pytest.raises(KernelError):
        complementary_row([bad])


def test_p_bound():
    mesh = build_graded_mesh(3.0, 128)
    for scheme, pi_a in (("l1", 1.0), ("fraccn", 11 / 4)):
        rows = kernel_rows(scheme, mesh, 0.5)
        p = complementary_rows(rows)
        for m in (0, 1):
            assert verify_p_bound(p, mesh, 0.5, m, pi_a) >= 0
    # m = 1 with omega_1 = 1: the weighted sum is the plain row sum
    p = complementary_rows(kernel_rows("l1", mesh, 0.5))
    marg = verify_p_bound(p[:1], mesh, 0.5, 1, 1.0)
    assert marg == pytest.approx(omega(1.5, mesh.times[1]) - p[0].coeffs.sum(), rel=1e-12)


# ---- assumptions


def test_assumptions_l1_uniform():
    mesh = build_uniform_mesh(64)
    rep = verify_kernel_assumptions(kernel_rows("l1", mesh, 0.3), mesh, 0.0)
    assert rep.ok
    assert rep.a2_pi_a <= 1 + 1e-12
    assert rep.l1_difference_margin > 0


def test_assumptions_alikhanov_graded():
    mesh = build_graded_mesh(3.0, 128)
    rep = verify_kernel_assumptions(kernel_rows("fraccn", mesh, 0.4), mesh, 0.2)
    assert rep.ok
    assert all(v > 0 for v in rep.thm41_margins.values())
    assert rep.a2_pi_a <= 11 / 4


def test_assumptions_adversarial_mesh_reports():
    mesh = build_custom_mesh([0, 0.8, 0.9, 1.0])
    rep = verify_kernel_assumptions(kernel_rows("fraccn", mesh, 0.5), mesh, 0.25)
    assert isinstance(rep.ok, bool)
    assert rep.as_dict()["thm41_margins"] is not None


@given(st.integers(0, 10**6), st.floats(0.05, 0.95))
@settings(max_examples=15, deadline=None)
def test_l1_kernels_positive_decreasing(seed, alpha):
    mesh = random_mesh(30, rng=seed)
    for row in kernel_rows("l1", mesh, alpha):
        assert np.all(row.coeffs > 0)
        assert np.all(np.diff(row.coeffs) <= 0)
