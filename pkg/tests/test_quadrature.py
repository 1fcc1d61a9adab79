import math

import numpy as np
import pytest

from greencr.quadrature import QuadratureError, adaptive_simpson


def test_polynomial_exact():
    assert adaptive_simpson(lambda x: x ** 3 - 2 * x, 0.0, 2.0) == pytest.approx(0.0, abs=1e-12)
    assert adaptive_simpson(lambda x: x ** 2, 0.0, 3.0) == pytest.approx(9.0, rel=1e-12)


def test_reversed_limits_change_sign():
    f = np.exp
    assert adaptive_simpson(f, 1.0, 0.0) == pytest.approx(-(math.e - 1.0), rel=1e-9)


def test_oscillatory_sinc_squared():
    # integral of sinc^2 over [-50, 50] (numpy sinc) is 1 minus the two tails
    val = adaptive_simpson(lambda x: np.sinc(x) ** 2, -50.0, 50.0, rtol=1e-10, initial=800)
    tail = 1.0 / (math.pi ** 2 * 50.0)
    assert val == pytest.approx(1.0 - tail, abs=2e-5)


def test_full_output_fields():
    res = adaptive_simpson(np.sin, 0.0, math.pi, full_output=True)
    assert res.value == pytest.approx(2.0, rel=1e-9)
    assert res.error >= 0 and res.intervals >= 16


def test_budget_exhaustion_raises_with_diagnostics():
    with pytest.raises(QuadratureError) as info:
        adaptive_simpson(lambda x: np.sin(1.0 / x), 1e-6, 1.0, rtol=1e-14, max_intervals=64)
    assert info.value.intervals <= 64
