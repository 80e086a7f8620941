import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmbeam.optimize import EvaluationError, RatioProgram, alternating_gee_max, dinkelbach_max


def log_ratio():
    return RatioProgram(lambda p: math.log2(1 + 10 * p), lambda p: p + 1, 1e-3, 100.0)


def grid_oracle(prog, n=1_000_000):
    p = np.geomspace(prog.p_min, prog.p_max, n)
    r = np.log2(1 + 10 * p) / (p + 1)
    return p[int(np.argmax(r))]


def test_log_ratio_matches_fine_grid():
    trace = dinkelbach_max(log_ratio())
    p_ref = grid_oracle(log_ratio())
    assert trace.converged
    assert abs(trace.p_star_w - p_ref) / p_ref < 1e-4
    assert all(b >= a for a, b in zip(trace.lambda_sequence, trace.lambda_sequence[1:]))


def test_linear_numerator_hits_upper_bound():
    prog = RatioProgram(lambda p: 3.0 * p, lambda p: 2.0 * p + 0.5, 0.01, 7.0)
    trace = dinkelbach_max(prog)
    assert trace.p_star_w == pytest.approx(7.0, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 100.0), st.floats(1.01, 5.0), st.floats(0.01, 50.0), st.floats(1e-4, 1.0), st.floats(2.0, 100.0))
def test_trace_invariants(a, eta, c, p_min, p_max):
    prog = RatioProgram(lambda p: math.log2(1 + a * p), lambda p: eta * p + c, p_min, p_max)
    trace = dinkelbach_max(prog)
    lam = trace.lambda_sequence
    assert all(b >= a_ for a_, b in zip(lam, lam[1:]))
    assert trace.gee_star == pytest.approx(prog.ratio(trace.p_star_w), rel=1e-15)
    assert trace.gee_star >= max(prog.ratio(p_min), prog.ratio(p_max)) - 1e-9
    n, d = prog.evaluate(trace.p_star_w)
    if trace.converged:
        assert n - lam[-2] * d < 1e-6 * d


def test_nonfinite_value_reports_point():
    prog = RatioProgram(lambda p: math.nan if p > 1 else p, lambda p: 1.0, 0.1, 2.0)
    with pytest.raises(EvaluationError) as info:
        dinkelbach_max(prog)
    assert info.value.p > 1


def test_invalid_programs():
    with pytest.raises(ValueError):
        RatioProgram(lambda p: p, lambda p: 1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        dinkelbach_max(RatioProgram(lambda p: p, lambda p: -1.0, 0.0, 1.0))


def test_bimodal_subproblem_is_flagged():
    num = lambda p: math.exp(-((p - 1) ** 2) / 0.01) + 0.9 * math.exp(-((p - 4) ** 2) / 0.01) + 1e-3  # noqa: E731
    trace = dinkelbach_max(RatioProgram(num, lambda p: 1.0, 0.0, 5.0))
    assert trace.multimodal


def _toy_gee():
    # concave rate with per-antenna circuit cost: interior optimum in every coordinate
    num = lambda nt, nr, p: 5e8 * math.log2(1 + 1e3 * nt * nr * p)  # noqa: E731
    den = lambda nt, nr, p: 2 * p + 0.02 * nt + 0.03 * nr + 0.5  # noqa: E731
    return num, den


def test_alternating_single_point_grids_reduce_to_dinkelbach():
    num, den = _toy_gee()
    res = alternating_gee_max(num, den, [16], [8], (1e-3, 10.0))
    ref = dinkelbach_max(RatioProgram(lambda p: num(16, 8, p), lambda p: den(16, 8, p), 1e-3, 10.0))
    assert res.p_t_w == pytest.approx(ref.p_star_w, rel=1e-9)
    assert res.gee == pytest.approx(ref.gee_star, rel=1e-12)


def test_alternating_coordinate_optimality():
    num, den = _toy_gee()
    nt_grid, nr_grid = list(range(2, 129, 2)), list(range(1, 65))
    res = alternating_gee_max(num, den, nt_grid, nr_grid, (1e-3, 10.0))
    gee = lambda nt, nr: num(nt, nr, res.p_t_w) / den(nt, nr, res.p_t_w)  # noqa: E731
    i, j = nt_grid.index(res.n_t), nr_grid.index(res.n_r)
    neighbours = [(nt_grid[a], res.n_r) for a in (i - 1, i + 1) if 0 <= a < len(nt_grid)]
    neighbours += [(res.n_t, nr_grid[b]) for b in (j - 1, j + 1) if 0 <= b < len(nr_grid)]
    # the stopping rule leaves at most a 1e-4 relative improvement on the table
    assert all(res.gee >= gee(*nb) * (1 - 1e-4) for nb in neighbours)
    assert all(b >= a for a, b in zip(res.history, res.history[1:]))
    assert 0 < i < len(nt_grid) - 1


def test_alternating_rejects_empty_grids():
    num, den = _toy_gee()
    with pytest.raises(ValueError):
        alternating_gee_max(num, den, [], [1], (0.1, 1.0))
