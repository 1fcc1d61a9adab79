import numpy as np
import pytest
from hypothesis import given, strategies as st

from greencr.errors import DegenerateInputError, DomainError
from greencr.sensing import (at_least_k_probability, fuse_k_out_of_n, posterior_idle_given_busy,
                             posterior_missed, posterior_occupied)

prob = st.floats(0.0, 1.0)


def test_posterior_occupied_examples():
    assert posterior_occupied(0.4, 0.1, 0.0) == 1.0
    assert posterior_occupied(0.0, 0.1, 0.2) == 0.0
    assert posterior_occupied(0.3, 0.05, 0.1) == pytest.approx(0.285 / 0.355, rel=1e-12)


def test_posterior_missed_examples():
    assert posterior_missed(0.3, 0.0, 0.1) == 0.0
    assert posterior_missed(1.0, 0.2, 0.7) == 1.0
    assert posterior_missed(0.3, 0.05, 0.1) == pytest.approx(0.015 / 0.645, rel=1e-12)


def test_degenerate_denominators():
    with pytest.raises(DegenerateInputError):
        posterior_occupied(0.0, 0.1, 0.0)
    with pytest.raises(DegenerateInputError):
        posterior_missed(1.0, 0.0, 0.3)
    with pytest.raises(DomainError):
        posterior_occupied(1.2, 0.1, 0.1)


@given(prob, prob, prob)
def test_busy_posteriors_complementary(q, qm, qf):
    num = q * (1 - qm) + (1 - q) * qf
    if num <= 0:
        return
    assert posterior_occupied(q, qm, qf) + posterior_idle_given_busy(q, qm, qf) == \
        pytest.approx(1.0, abs=1e-12)


def test_arrays_elementwise():
    q = np.array([0.1, 0.3, 0.7])
    out = posterior_occupied(q, 0.05, 0.1)
    assert out.shape == (3,)
    assert out[1] == pytest.approx(posterior_occupied(0.3, 0.05, 0.1))


def test_fusion_examples():
    qm, _ = fuse_k_out_of_n([1.0, 1.0, 1.0], [0.1] * 3, 2)
    assert qm == 0.0
    qm, qf = fuse_k_out_of_n([0.9] * 3, [0.1] * 3, 2)
    assert 1 - qm == pytest.approx(0.972, abs=1e-12)
    assert qf == pytest.approx(0.028, abs=1e-12)
    qm, qf = fuse_k_out_of_n([0.8], [0.05], 1)
    assert qm == pytest.approx(0.2) and qf == pytest.approx(0.05)


def test_fusion_errors():
    with pytest.raises(DomainError):
        fuse_k_out_of_n([], [], 1)
    with pytest.raises(DomainError):
        fuse_k_out_of_n([0.5, 0.5], [0.1], 1)
    with pytest.raises(DomainError):
        at_least_k_probability([0.5], 2)


@given(st.lists(prob, min_size=1, max_size=7), st.data())
def test_at_least_k_matches_enumeration(ps, data):
    k = data.draw(st.integers(1, len(ps)))
    n = len(ps)
    total = 0.0
    for mask in range(1 << n):
        fired = [(mask >> i) & 1 for i in range(n)]
        if sum(fired) >= k:
            p = 1.0
            for f, pi in zip(fired, ps):
                p *= pi if f else 1 - pi
            total += p
    assert at_least_k_probability(ps, k) == pytest.approx(total, abs=1e-12)
