import math

import numpy as np
import pytest

from consonet.consolidation import (
    ConsolidationCase,
    SolutionField,
    analytical_field,
    analytical_solution,
    average_degree_of_consolidation,
    build_system_matrix,
    time_factor,
    tv_to_time,
    uniform_case,
)
from consonet.errors import ConvergenceError, ValidationError


def direct_series(z, tv, u0, terms):
    # independent plain-loop summation oracle
    s = 0.0
    for m in range(terms):
        big_m = math.pi / 2 * (2 * m + 1)
        s += (2 * u0 / big_m) * math.sin(big_m * z) * math.exp(-big_m**2 * tv)
    return s


class TestTimeFactor:
    def test_identity_case(self):
        assert time_factor(1.0, 1.0, 1.0) == 1.0

    def test_zero_time(self):
        assert time_factor(0.3, 0.0, 1.0) == 0.0

    def test_direct_substitution(self):
        assert time_factor(0.5, 4.0, 1.0) == pytest.approx(2.0)

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            time_factor(0.0, 1.0, 1.0)
        with pytest.raises(ValidationError):
            time_factor(0.5, 1.0, 0.0)

    def test_inverse(self):
        t = tv_to_time(0.7, 1.3)
        assert time_factor(0.7, t) == pytest.approx(1.3, rel=1e-14)


class TestAnalyticalSolution:
    def test_drained_boundary_is_zero(self):
        assert analytical_solution(0.0, 0.5, 10e3) == 0.0

    def test_initial_condition_at_bottom(self):
        # series of a constant; alternating terms converge slowly, so a
        # loose tolerance keeps the term count sane
        u = analytical_solution(1.0, 0.0, 10000.0, tol=1e-3, max_terms=100_000)
        assert abs(u - 10000.0) < 1e-3 * 10000.0

    def test_against_direct_summation_oracle(self):
        # frozen from a 50-term direct summation at tolerance 1e-12
        expected = 7723.116068585907
        got = analytical_solution(1.0, 0.2, 10000.0)
        assert got == pytest.approx(expected, abs=1e-6)
        assert direct_series(1.0, 0.2, 10000.0, 50) == pytest.approx(expected, abs=1e-9)

    def test_gibbs_region_raises(self):
        with pytest.raises(ConvergenceError):
            analytical_solution(0.01, 0.0, 10e3, tol=1e-12, max_terms=500)

    def test_truncation_stability(self):
        # past the stopping point, extra terms change nothing beyond tol*u0
        for tv in (0.01, 0.1, 1.0):
            base = analytical_solution(0.73, tv, 10e3, tol=1e-9)
            long = direct_series(0.73, tv, 10e3, 3000)
            assert abs(base - long) < 1e-9 * 10e3

    def test_monotone_decay_in_tv(self):
        zs = np.linspace(0, 1, 20)
        tvs = np.linspace(0.0, 2.0, 20)
        field = analytical_field(zs, tvs, 10e3)
        drops = np.diff(field, axis=1)
        assert np.all(drops <= 1e-9 * 10e3)

    def test_vectorized_matches_scalar(self):
        zs = np.array([0.0, 0.31, 0.77, 1.0])
        tvs = np.array([0.05, 0.4, 1.7])
        field = analytical_field(zs, tvs, 12e3)
        for i, z in enumerate(zs):
            for j, tv in enumerate(tvs):
                assert field[i, j] == pytest.approx(
                    analytical_solution(z, tv, 12e3), abs=1e-6
                )

    def test_field_initial_column_is_limit(self):
        field = analytical_field(np.array([0.0, 0.5, 1.0]), np.array([0.0]), 9e3)
        assert field[0, 0] == 0.0
        assert field[1, 0] == 9e3
        assert field[2, 0] == 9e3

    def test_validation(self):
        with pytest.raises(ValidationError):
            analytical_solution(-0.1, 0.5, 1e4)
        with pytest.raises(ValidationError):
            analytical_solution(0.5, -0.5, 1e4)
        with pytest.raises(ValidationError):
            analytical_solution(0.5, 0.5, 1e4, tol=0.0)


class TestDegreeOfConsolidation:
    def test_no_dissipation_at_zero(self):
        assert average_degree_of_consolidation(0.0) == pytest.approx(0.0, abs=1e-12)

    def test_full_dissipation_limit(self):
        # exact remainder at tv=5 is (8/pi^2) e^-12.34 = 3.55e-6; the
        # 1e-6 window is reached just past tv=6
        assert average_degree_of_consolidation(5.0) == pytest.approx(1.0, abs=5e-6)
        assert average_degree_of_consolidation(6.0) == pytest.approx(1.0, abs=1e-6)

    def test_half_consolidation_point(self):
        # frozen from a 200-term summation oracle
        assert average_degree_of_consolidation(0.197) == pytest.approx(
            0.5003381228248266, abs=1e-9
        )

    def test_monotone(self):
        tvs = np.linspace(0, 3, 40)
        us = [average_degree_of_consolidation(tv) for tv in tvs]
        assert np.all(np.diff(us) >= -1e-12)


class TestSystemMatrix:
    def test_direct_transcription(self):
        a = build_system_matrix(4, 1.0, 1.0)
        expected = np.array([[-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
        assert np.array_equal(a.dense(), expected)

    def test_symmetry(self):
        for nz, dz, cv in ((5, 0.25, 0.3), (17, 1 / 16, 1.2), (100, 1 / 99, 0.5)):
            d = build_system_matrix(nz, dz, cv).dense()
            assert np.array_equal(d, d.T)

    def test_negative_definite_dense_oracle(self):
        a = build_system_matrix(10, 1 / 9, 0.5)
        ev = np.linalg.eigvalsh(a.dense())
        assert np.max(ev) < 0

    def test_negative_definite_random_draws(self):
        rng = np.random.default_rng(12)
        for _ in range(5):
            nz = int(rng.integers(3, 60))
            dz = float(rng.uniform(0.01, 0.5))
            cv = float(rng.uniform(0.1, 2.0))
            ev = np.linalg.eigvalsh(build_system_matrix(nz, dz, cv).dense())
            assert np.max(ev) < 0

    def test_validation(self):
        with pytest.raises(ValidationError):
            build_system_matrix(2, 0.1, 1.0)
        with pytest.raises(ValidationError):
            build_system_matrix(5, 0.0, 1.0)
        with pytest.raises(ValidationError):
            build_system_matrix(5, 0.1, -1.0)


class TestDomainTypes:
    def test_case_validation(self):
        depths = np.linspace(0, 1, 5)
        ConsolidationCase(cv=0.5, h_dr=1.0, u0=np.ones(5), sensor_depths=depths)
        with pytest.raises(ValidationError):
            ConsolidationCase(cv=-1.0, h_dr=1.0, u0=np.ones(5), sensor_depths=depths)
        with pytest.raises(ValidationError):
            ConsolidationCase(cv=0.5, h_dr=1.0, u0=np.ones(4), sensor_depths=depths)
        bad = depths.copy()
        bad[-1] = 0.9  # last sensor must sit at the bottom
        with pytest.raises(ValidationError):
            ConsolidationCase(cv=0.5, h_dr=1.0, u0=np.ones(5), sensor_depths=bad)
        with pytest.raises(ValidationError):
            ConsolidationCase(cv=0.5, h_dr=1.0, u0=np.array([1, np.nan, 1, 1, 1.0]),
                              sensor_depths=depths)

    def test_uniform_case_builder(self):
        case = uniform_case(15e3, 0.5, m=10)
        assert case.m == 10
        assert np.all(case.u0 == 15e3)
        assert case.sensor_depths[0] == 0.0 and case.sensor_depths[-1] == 1.0

    def test_solution_field_boundary_enforced(self):
        depths = np.linspace(0, 1, 4)
        times = np.array([0.0, 1.0])
        ok = np.zeros((4, 2))
        SolutionField(depths=depths, times=times, values=ok, tv_times=times)
        bad = ok.copy()
        bad[0, 1] = 5.0  # drained top must stay at zero for t > 0
        with pytest.raises(ValidationError):
            SolutionField(depths=depths, times=times, values=bad, tv_times=times)
        nan = ok.copy()
        nan[2, 1] = np.nan
        with pytest.raises(ValidationError):
            SolutionField(depths=depths, times=times, values=nan, tv_times=times)
