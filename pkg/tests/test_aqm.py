import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpmsim.aqm import CodelState, Decision, codel_evaluate, control_law
from rpmsim.units import MS, US

from .oracles import codel_trace

TARGET, INTERVAL = 1 * MS, 20 * MS


def run(times, sojourns, target=TARGET, interval=INTERVAL):
    st_ = CodelState(target=target, interval=interval)
    return [codel_evaluate(st_, s, t) is Decision.SIGNAL for t, s in zip(times, sojourns)]


class TestControlLaw:
    def test_unit_count(self):
        assert control_law(0, 1, 20 * MS) == 20 * MS

    def test_four(self):
        assert control_law(0, 4, 20 * MS) == 10 * MS

    def test_offset(self):
        assert control_law(5 * MS, 16, 20 * MS) == 10 * MS

    def test_rounds_half_up(self):
        assert control_law(0, 3, 20 * MS) == 11_547_005  # 11547005.38...

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            control_law(0, 0, INTERVAL)


def test_below_target_forwards():
    assert not any(run([0, MS, 30 * MS], [500 * US] * 3))


def test_constant_two_ms_first_signal_at_interval():
    times = list(range(0, 100 * MS, 100 * US))
    sig = run(times, [2 * MS] * len(times))
    first = times[sig.index(True)]
    assert first == 20 * MS
    second = times[sig.index(True, sig.index(True) + 1)]
    assert second == 40 * MS
    third = times[sig.index(True, sig.index(True, sig.index(True) + 1) + 1)]
    # drop_next advanced by 20/sqrt(2) ms after the second signal
    assert third - second == pytest.approx(14.142 * MS, abs=100 * US)


def test_dip_below_target_resets():
    times = list(range(0, 60 * MS, MS))
    soj = [2 * MS] * len(times)
    soj[15] = 0
    sig = run(times, soj)
    assert times[sig.index(True)] == 16 * MS + 20 * MS


def test_signal_spacing_shrinks_under_sustained_congestion():
    times = list(range(0, 2000 * MS, 50 * US))
    sig = run(times, [5 * MS] * len(times))
    at = [t for t, s in zip(times, sig) if s]
    gaps = [b - a for a, b in zip(at, at[1:])]
    assert len(gaps) > 20
    # gaps are quantised to the 50 us dequeue grid
    assert all(b <= a + 50 * US for a, b in zip(gaps, gaps[1:]))


@given(st.lists(st.integers(0, TARGET - 1), min_size=1, max_size=500))
def test_never_signals_below_target(sojourns):
    times = [i * 100 * US for i in range(len(sojourns))]
    assert not any(run(times, sojourns))


def _trace(rng, n):
    times, soj = [], []
    t = 0
    regime = 0
    for _ in range(n):
        t += rng.choice((10 * US, 120 * US, 1200 * US, rng.randrange(1, 5 * MS)))
        if rng.random() < 0.01:
            regime = rng.randrange(4)
        base = (0, 900 * US, 3 * MS, 12 * MS)[regime]
        soj.append(max(0, base + rng.randrange(-800 * US, 800 * US)))
        times.append(t)
    return times, soj


@pytest.mark.parametrize("seed", range(5))
def test_matches_oracle_on_long_traces(seed):
    rng = random.Random(seed)
    times, soj = _trace(rng, 10_000)
    got = run(times, soj)
    assert got == codel_trace(times, soj, TARGET, INTERVAL)
    assert 0 < sum(got) < len(got)


@settings(max_examples=300)
@given(
    st.lists(st.tuples(st.integers(1, 3 * MS), st.integers(0, 4 * MS)), min_size=1, max_size=400),
    st.sampled_from([(TARGET, INTERVAL), (5 * MS, 100 * MS), (1, 10)]),
)
def test_matches_oracle_property(steps, params):
    times, t = [], 0
    for dt, _ in steps:
        t += dt
        times.append(t)
    soj = [s for _, s in steps]
    assert run(times, soj, *params) == codel_trace(times, soj, *params)


def test_state_invariants():
    rng = random.Random(7)
    times, soj = _trace(rng, 5000)
    st_ = CodelState(target=TARGET, interval=INTERVAL)
    for t, s in zip(times, soj):
        codel_evaluate(st_, s, t)
        assert st_.count >= 0
        if st_.in_dropping:
            assert st_.count >= 1
