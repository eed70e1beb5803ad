import numpy as np
import pytest

from consonet.consolidation import build_system_matrix
from consonet.errors import SingularMatrixError, ValidationError
from consonet.tridiag import Tridiagonal, thomas_solve


def test_identity_system():
    a = Tridiagonal(lower=np.zeros(2), diag=np.ones(3), upper=np.zeros(2))
    rhs = np.array([3.0, 7.0, 2.0])
    assert np.allclose(thomas_solve(a, rhs), rhs, rtol=0, atol=0)


def test_two_by_two_symmetric():
    # [[2, 1], [1, 2]] @ [1, 1] = [3, 3]
    a = Tridiagonal(lower=np.array([1.0]), diag=np.array([2.0, 2.0]),
                    upper=np.array([1.0]))
    x = thomas_solve(a, np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-14)


def test_matches_dense_elimination_oracle():
    rng = np.random.default_rng(42)
    n = 50
    lower = rng.uniform(-1, 1, n - 1)
    upper = rng.uniform(-1, 1, n - 1)
    # force strict diagonal dominance
    diag = np.abs(rng.uniform(1, 2, n))
    diag[:-1] += np.abs(upper)
    diag[1:] += np.abs(lower)
    a = Tridiagonal(lower=lower, diag=diag, upper=upper)
    rhs = rng.standard_normal(n)
    x = thomas_solve(a, rhs)
    x_dense = np.linalg.solve(a.dense(), rhs)
    assert np.linalg.norm(x - x_dense) / np.linalg.norm(x_dense) < 1e-10


def test_roundtrip_on_implicit_diffusion_systems():
    # thomas_solve(M, M @ x) recovers x for M = I - dt*A
    rng = np.random.default_rng(3)
    for nz, dz, cv, dt in ((10, 0.1, 0.5, 0.01), (50, 1 / 49, 1.0, 0.1),
                           (7, 0.2, 0.31, 1.0), (100, 1 / 99, 0.77, 1e-3),
                           (20, 0.05, 0.5, 0.5)):
        a = build_system_matrix(nz, dz, cv)
        m = Tridiagonal(lower=-dt * a.lower, diag=1.0 - dt * a.diag,
                        upper=-dt * a.upper)
        x = rng.standard_normal(m.n)
        back = thomas_solve(m, m.matvec(x))
        assert np.linalg.norm(back - x) / np.linalg.norm(x) < 1e-10


def test_singular_pivot_raises():
    # elimination hits an exact zero pivot in row 1
    a = Tridiagonal(lower=np.array([1.0]), diag=np.array([1.0, 1.0]),
                    upper=np.array([1.0]))
    with pytest.raises(SingularMatrixError):
        thomas_solve(a, np.array([1.0, 1.0]))


def test_scalar_system():
    a = Tridiagonal(lower=np.zeros(0), diag=np.array([4.0]), upper=np.zeros(0))
    assert thomas_solve(a, np.array([8.0]))[0] == pytest.approx(2.0)


def test_band_validation():
    with pytest.raises(ValidationError):
        Tridiagonal(lower=np.zeros(3), diag=np.ones(3), upper=np.zeros(2))
    with pytest.raises(ValidationError):
        Tridiagonal(lower=np.array([np.nan]), diag=np.ones(2), upper=np.zeros(1))
    a = Tridiagonal(lower=np.zeros(1), diag=np.ones(2), upper=np.zeros(1))
    with pytest.raises(ValidationError):
        thomas_solve(a, np.ones(3))
