import json

import mpmath as mp
import numpy as np
import pytest

from cpsb.battery import (
    BatteryParams,
    BatteryState,
    PiecewiseCurrent,
    circuit_values,
    default_params,
    derivatives,
    integrate,
    output_voltage,
)
from cpsb.errors import InvalidParams, SingularCapacitance
from cpsb.stability import thresholds

P = default_params()


def mp_values(x1, p):
    mp.mp.dps = 40
    k = [mp.mpf(repr(v)) for v in p.k]
    x = mp.mpf(repr(x1))
    return {
        "C_ts": -k[3] * mp.exp(-k[0] * x) + k[2],
        "C_tl": -k[5] * mp.exp(-k[1] * x) + k[4],
        "R_s": k[6] * mp.exp(-k[7] * x) + k[8],
        "R_ts": k[9] * mp.exp(-k[10] * x) + k[11],
        "R_tl": k[12] * mp.exp(-k[13] * x) + k[14],
        "E_o": -k[15] * mp.exp(-k[16] * x) + k[17] + k[18] * x - k[19] * x**2 + k[20] * x**3,
    }


@pytest.mark.parametrize("x1", [1.0, 0.5, 0.05, 0.003])
def test_circuit_values_high_precision(x1):
    cv = circuit_values(x1, P)
    for name, ref in mp_values(x1, P).items():
        assert float(getattr(cv, name)) == pytest.approx(float(ref), rel=1e-12, abs=1e-12)


def test_capacity():
    assert P.Cc == pytest.approx(990.0)
    assert P.with_f2(0.5).Cc == pytest.approx(495.0)
    with pytest.raises(InvalidParams):
        P.with_f2(0.0)


def test_param_invariants():
    k = list(P.k)
    with pytest.raises(InvalidParams):
        BatteryParams(tuple(k[:20]), 0.275)
    bad = k.copy()
    bad[2], bad[3] = bad[3], bad[2]
    with pytest.raises(InvalidParams):
        BatteryParams(tuple(bad), 0.275)
    neg = k.copy()
    neg[10] = -1.0
    with pytest.raises(InvalidParams):
        BatteryParams(tuple(neg), 0.275)


def test_param_file_roundtrip(tmp_path):
    f = tmp_path / "b.json"
    P.with_f2(0.7).save(f)
    assert BatteryParams.load(f) == P.with_f2(0.7)
    d = json.loads(f.read_text())
    del d["k7"]
    f.write_text(json.dumps(d))
    with pytest.raises(InvalidParams):
        BatteryParams.load(f)


def test_resistances_positive_everywhere():
    cv = circuit_values(np.linspace(0, 1, 1001), P)
    assert (cv.R_s > 0).all() and (cv.R_ts > 0).all() and (cv.R_tl > 0).all()


def test_capacitance_signs_track_thresholds():
    th = thresholds(P)
    x = np.linspace(0.0005, 0.9995, 1999)
    cv = circuit_values(x, P)
    assert ((cv.C_ts <= 0) == (x <= th.delta1)).all()
    assert ((cv.C_tl <= 0) == (x <= th.delta2)).all()


def test_derivatives():
    assert derivatives(BatteryState(0.5), 0.0, P) == (0.0, 0.0, 0.0)
    d = derivatives(BatteryState(0.5, 0.02, 0.03), 0.0, P)
    assert d[0] == 0 and d[1] < 0 and d[2] < 0
    with pytest.raises(SingularCapacitance):
        derivatives(BatteryState(thresholds(P).delta2), 1.0, P)


def test_output_voltage():
    s = BatteryState(0.5, 0.01, 0.01)
    ref = mp_values(0.5, P)
    assert output_voltage(s, 1.0, P) == pytest.approx(float(ref["E_o"] - 0.02 - ref["R_s"]), rel=1e-13)
    assert output_voltage(BatteryState(0.7), 0.0, P) == pytest.approx(float(mp_values(0.7, P)["E_o"]))
    dy = output_voltage(s, 1.0, P) - output_voltage(s, 1.25, P)
    assert dy == pytest.approx(0.25 * float(ref["R_s"]), rel=1e-10)


def naive_rk4(s0, current, t0, t1, h, p):
    """Textbook scalar RK4 on the full state."""
    x = np.array(tuple(s0), dtype=float)
    out = [x.copy()]
    n = int(round((t1 - t0) / h))
    for j in range(n):
        t = t0 + j * h
        i = current(t)

        def f(y):
            return np.array(derivatives(BatteryState(*y), i, p))

        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.array(out)


def test_matches_naive_rk4():
    cur = PiecewiseCurrent([0.0, 20.0, 35.0], [0.8, 2.0, 0.3])
    traj = integrate(BatteryState(0.9, 0.01, 0.0), cur, 0.0, 60.0, 0.5, P)
    ref = naive_rk4(BatteryState(0.9, 0.01, 0.0), cur, 0.0, 60.0, 0.5, P)
    np.testing.assert_allclose(traj.x1, ref[:, 0], rtol=1e-13)
    np.testing.assert_allclose(traj.x2, ref[:, 1], rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(traj.x3, ref[:, 2], rtol=1e-10, atol=1e-14)


def test_zero_current_relaxation():
    traj = integrate(BatteryState(0.6, 0.05, 0.04), 0.0, 0.0, 200.0, 0.1, P)
    assert (traj.x1 == 0.6).all()
    assert (np.diff(traj.x2) < 0).all() and (np.diff(traj.x3) < 0).all()


def test_constant_discharge_analytic():
    traj = integrate(BatteryState(1.0), 1.0, 0.0, 99.0, 1e-3, P)
    assert abs(traj.x1[-1] - 0.9) / 0.9 < 1e-9
    np.testing.assert_allclose(traj.x1, 1.0 - traj.t / 990.0, rtol=1e-9)


def test_breakpoints_on_grid_and_charge_conservation():
    cur = PiecewiseCurrent([0.0, 0.333, 7.01, 12.5], [0.6, 2.1, 0.7, 1.3])
    traj = integrate(BatteryState(0.8), cur, 0.0, 20.0, 0.1, P, dense=True)
    for b in cur.times[1:]:
        assert np.any(traj.t == b)
    expected = 0.8 - cur.charge(0.0, 20.0) / P.Cc
    assert traj.x1[-1] == pytest.approx(expected, rel=1e-13)
    regular = integrate(BatteryState(0.8), cur, 0.0, 20.0, 0.1, P)
    assert len(regular) == 201


def test_monotone_soc_and_voltage():
    traj = integrate(BatteryState(1.0), 1.0, 0.0, 850.0, 0.05, P)
    assert (np.diff(traj.x1) <= 0).all()
    # voltage never rises during discharge until close to depletion
    body = traj.y[traj.x1 > 0.05]
    assert (np.diff(body[20:]) <= 1e-12).all()


def test_singular_capacitance_reports_partial():
    with pytest.raises(SingularCapacitance) as info:
        integrate(BatteryState(0.05), 1.0, 0.0, 100.0, 0.1, P)
    exc = info.value
    assert exc.partial is not None and len(exc.partial) > 1
    assert exc.partial.x1[-1] > thresholds(P).delta2
    assert exc.t == pytest.approx((0.05 - thresholds(P).delta2) * 990, abs=0.2)


def test_clamp_events_recorded():
    # below delta1 both capacitances are negative but nonzero, so discharge
    # can run through x1 = 0 where the clamp takes over
    traj = integrate(BatteryState(0.001), 1.0, 0.0, 2.0, 0.1, P, check=False)
    assert traj.clamp_events and traj.clamp_events[0][1] < 0
    assert traj.x1.min() == 0.0 and traj.x1[-1] == 0.0
