import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subdiff.mesh import (
    MeshError,
    TimeMesh,
    build_custom_mesh,
    build_graded_mesh,
    build_uniform_mesh,
    default_t0,
    graded_n0,
    load_mesh_csv,
    mesh_diagnostics,
    random_mesh,
    save_mesh_csv,
)


def graded_oracle(gamma, N, T=1.0):
    # straight transcription of the definition, one point at a time
    T0 = min(1.0 / gamma, 2.0 ** (-gamma), T)
    n0 = math.ceil(round(gamma * N * T0 / (T + (gamma - 1) * T0), 10))
    pts = []
    for k in range(N + 1):
        if k <= n0:
            pts.append((k / n0) ** gamma * T0)
        else:
            pts.append(T0 + (k - n0) * (T - T0) / (N - n0))
    return n0, np.array(pts)


@pytest.mark.parametrize("gamma", [1.0, 1.2, 5 / 3, 2.0, 2.5, 3.0, 15 / 4, 5.0])
@pytest.mark.parametrize("N", [16, 100, 257])
def test_graded_matches_definition(gamma, N):
    n0, t = graded_oracle(gamma, N)
    mesh = build_graded_mesh(gamma, N)
    assert graded_n0(gamma, N, 1.0, default_t0(gamma)) == n0
    np.testing.assert_allclose(mesh.times, t, rtol=1e-14, atol=1e-16)
    assert mesh.times[-1] == 1.0
    assert mesh.N == N


def test_gamma_one_is_uniform():
    # T0 = 1/2, N0 = N/2: both phases have step 1/N
    mesh = build_graded_mesh(1.0, 64)
    np.testing.assert_allclose(mesh.steps, 1 / 64, rtol=1e-13)


def test_gamma_two_small_example():
    # T0 = 1/4, N0 = ceil(2*8*0.25/1.25) = 4
    mesh = build_graded_mesh(2.0, 8)
    expected = [0, 1 / 64, 4 / 64, 9 / 64, 16 / 64, 0.4375, 0.625, 0.8125, 1.0]
    np.testing.assert_allclose(mesh.times, expected, rtol=1e-14)


def test_first_step_order():
    for gamma in (2.0, 3.0):
        rep = mesh_diagnostics(build_graded_mesh(gamma, 2048), gamma)
        assert rep.tau1_order == pytest.approx(gamma, abs=0.2)


def test_mesh_validation():
    with pytest.raises(MeshError):
        build_graded_mesh(0.5, 10)
    with pytest.raises(MeshError):
        build_graded_mesh(2.0, 1)
    with pytest.raises(MeshError):
        TimeMesh(np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(MeshError):
        TimeMesh(np.array([0.1, 0.5]))
    with pytest.raises(MeshError):
        build_custom_mesh([0.0, np.nan])
    with pytest.raises(MeshError):
        build_graded_mesh(2.0, 10, T0=2.0)


def test_mesh_accessors():
    m = build_custom_mesh([0.0, 0.1, 0.3, 0.6])
    assert m.tau(1) == pytest.approx(0.1)
    assert m.tau(3) == pytest.approx(0.3)
    assert m.rho(1) == pytest.approx(0.5)
    assert m.offset_time(2, 0.25) == pytest.approx(0.25 * 0.1 + 0.75 * 0.3)
    with pytest.raises(IndexError):
        m.tau(0)
    with pytest.raises(IndexError):
        m.rho(3)
    assert not m.times.flags.writeable


@given(st.integers(2, 400), st.floats(1.01, 4.0), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_random_mesh_ratio_bound(N, rho, seed):
    m = random_mesh(N, rho=rho, rng=seed)
    assert m.T == 1.0
    assert np.all(m.steps > 0)
    assert m.ratios.max() <= rho * (1 + 1e-12)
    assert m.ratios.min() >= (1 / rho) * (1 - 1e-12)


@given(st.floats(1.0, 6.0), st.integers(8, 600))
@settings(max_examples=60, deadline=None)
def test_graded_monotone_and_bounded_ratio(gamma, N):
    try:
        m = build_graded_mesh(gamma, N)
    except MeshError:
        return
    assert np.all(np.diff(m.times) > 0)
    rep = mesh_diagnostics(m, gamma)
    # local ratios tau_k / tau_{k+1} <= 1 inside the graded phase; the
    # junction can exceed 1 by a bounded amount
    assert rep.rho_max < 7.0


def test_diagnostics_uniform():
    rep = mesh_diagnostics(build_uniform_mesh(32), 1.0)
    assert rep.rho_max == pytest.approx(1.0)
    assert rep.a3_ok
    assert rep.mconv_step == pytest.approx(1.0)


def test_csv_round_trip(tmp_path):
    m = build_graded_mesh(5 / 3, 50)
    p = tmp_path / "m.csv"
    save_mesh_csv(m, p)
    assert load_mesh_csv(p) == m
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(MeshError):
        load_mesh_csv(tmp_path / "empty.csv")
