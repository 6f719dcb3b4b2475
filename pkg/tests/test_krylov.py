import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plasmafem.errors import ConvergenceError, InvalidParameterError
from plasmafem.krylov import GmresConfig, gmres


def _system(n, seed):
    rng = np.random.default_rng(seed)
    A = np.eye(n) * 4 + (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return A, b


def test_identity_one_iteration():
    b = np.arange(1, 8) + 1j
    res = gmres(lambda v: v, b)
    assert res.iterations == 1
    assert np.allclose(res.x, b, atol=1e-14)
    assert res.history[0] == 1.0 and res.history[-1] <= 1e-10


def test_random_system_matches_direct():
    A, b = _system(50, 0)
    assert np.linalg.cond(A) < 10
    res = gmres(A, b, GmresConfig(restart=50, tolerance=1e-12))
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(res.x - ref) <= 1e-11 * np.linalg.norm(ref)
    assert np.linalg.norm(b - A @ res.x) / np.linalg.norm(b) == pytest.approx(res.residual)


def test_restart_robustness():
    A, b = _system(50, 1)
    tol = 1e-10
    x5 = gmres(A, b, GmresConfig(restart=5, tolerance=tol)).x
    x50 = gmres(A, b, GmresConfig(restart=50, tolerance=tol)).x
    assert np.linalg.norm(x5 - x50) <= 10 * tol * np.linalg.norm(x50)


def test_convergence_error_carries_best_iterate():
    A, b = _system(50, 2)
    with pytest.raises(ConvergenceError) as info:
        gmres(A, b, GmresConfig(restart=3, max_iterations=6, tolerance=1e-12))
    err = info.value
    assert err.best is not None and len(err.history) >= 7
    best_res = np.linalg.norm(b - A @ err.best) / np.linalg.norm(b)
    assert best_res < 1.0


def test_history_is_monotone_within_cycle():
    A, b = _system(40, 3)
    h = gmres(A, b, GmresConfig(restart=40)).history
    assert all(b_ <= a_ * (1 + 1e-12) for a_, b_ in zip(h, h[1:]))


def test_zero_rhs():
    res = gmres(np.eye(4), np.zeros(4))
    assert res.iterations == 0 and not res.x.any()


def test_right_preconditioner():
    rng = np.random.default_rng(4)
    d = np.logspace(0, 4, 60)
    A = np.diag(d) + 0.01 * rng.standard_normal((60, 60))
    b = rng.standard_normal(60) + 0j
    plain = gmres(A, b, GmresConfig(restart=60, max_iterations=500))
    pre = gmres(A, b, GmresConfig(restart=60), M=lambda v: v / d)
    assert pre.iterations < plain.iterations
    assert np.linalg.norm(b - A @ pre.x) <= 1e-10 * np.linalg.norm(b)


@pytest.mark.parametrize("kw", [dict(tolerance=0.0), dict(tolerance=1.0), dict(restart=0),
                                dict(max_iterations=0), dict(preconditioner="ilu")])
def test_config_validation(kw):
    with pytest.raises(InvalidParameterError):
        GmresConfig(**kw)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 20), restart=st.integers(1, 25), seed=st.integers(0, 2**16))
def test_residual_contract(n, restart, seed):
    A, b = _system(n, seed)
    res = gmres(A, b, GmresConfig(restart=restart, max_iterations=2000))
    assert np.linalg.norm(b - A @ res.x) <= 1e-10 * np.linalg.norm(b) * (1 + 1e-6)
