import math

import numpy as np
import pytest
from scipy.integrate import quad

from leofl.channel import (
    AbsorptionModel,
    LinkBudget,
    PathClass,
    PointingModel,
    absorption,
    aperture_gain,
    capacity,
    dbm_to_watts,
    load_absorption_table,
    noise_density,
    per_satellite_rate,
    pointing_loss,
    transmission_latency,
)

C = 299_792_458.0


def test_absorption_examples():
    am = AbsorptionModel.constant(0.001)
    assert float(absorption(am, 97e9, 0.0)) == 1.0
    assert float(absorption(AbsorptionModel.constant(0.0), 97e9, 1234.0)) == 1.0
    assert float(absorption(am, 97e9, 1000.0)) == pytest.approx(math.e, rel=1e-12)


def test_absorption_interpolates_and_rejects_out_of_range():
    am = AbsorptionModel({PathClass.SPACE_AIR: ((90e9, 1.0), (100e9, 3.0)),
                          PathClass.AIR_GROUND: ((90e9, 0.0), (100e9, 0.0))})
    assert float(am.kappa(95e9)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        am.kappa(120e9)
    with pytest.raises(ValueError):
        AbsorptionModel({PathClass.SPACE_AIR: ((1.0, -1.0), (2.0, 0.0))})


def test_air_ground_absorbs_more_than_space_air():
    am = AbsorptionModel()
    f = np.linspace(94.1e9, 100e9, 7)
    assert np.all(am.kappa(f, PathClass.AIR_GROUND) > am.kappa(f, PathClass.SPACE_AIR))


def test_absorption_table_file(tmp_path):
    p = tmp_path / "k.txt"
    p.write_text("# freq kappa\n100e9, 3e-5\n90e9 2e-5\n")
    assert load_absorption_table(p) == ((90e9, 2e-5), (100e9, 3e-5))


def test_noise_density_examples():
    assert noise_density(220.0, 0.0) == pytest.approx(1.380649e-23 * 220.0)
    assert noise_density(220.0, 10.0) == pytest.approx(3.0374278e-20, rel=1e-7)


def _pointing_oracle(z, f, w0, a, alpha):
    wz = C * z / (math.pi * f * w0)
    v = math.sqrt(math.pi / 2) * a / wz
    weq2 = wz ** 2 * math.sqrt(math.pi) * math.erf(v) / (2 * v * math.exp(-v * v))
    return math.exp(-2 * (z * math.tan(alpha)) ** 2 / weq2)


def test_pointing_examples():
    assert float(pointing_loss(PointingModel(0.0), 5e5, 97e9)) == 1.0
    assert float(pointing_loss(PointingModel(math.pi / 4), 5e5, 97e9)) < 1e-300
    pm = PointingModel(1e-6, 0.1, 0.25)
    expected = _pointing_oracle(5e5, 97e9, 0.1, 0.25, 1e-6)
    assert float(pointing_loss(pm, 5e5, 97e9)) == pytest.approx(expected, rel=1e-12)


def test_pointing_small_v_limit():
    # far field: v -> 0 and the equivalent width tends to w_z
    pm = PointingModel(1e-9, 1e-4, 1e-9)
    got = float(pointing_loss(pm, 1e7, 94.1e9))
    wz = C * 1e7 / (math.pi * 94.1e9 * 1e-4)
    assert got == pytest.approx(math.exp(-2 * (1e7 * math.tan(1e-9)) ** 2 / wz ** 2), rel=1e-9)


def test_pointing_sampling():
    pm = PointingModel(1e-6, error_std=1e-6)
    s = pm.sample(np.random.default_rng(0))
    assert s.error_std == 0.0 and s.error_angle >= 0
    assert PointingModel(1e-6).sample(np.random.default_rng(0)) == PointingModel(1e-6)


def _capacity_oracle(lb, kappa_fn, pm, d):
    n0 = 1.380649e-23 * lb.temperature * 10 ** (lb.noise_figure / 10)
    psd = lb.tx_power / (lb.f_hi - lb.f_lo)

    def se(f):
        gt = (math.pi * lb.tx_diameter * f / C) ** 2
        gr = (math.pi * lb.rx_diameter * f / C) ** 2
        fspl = (C / (4 * math.pi * f * d)) ** 2
        hpe = _pointing_oracle(d, f, pm.beam_waist_tx, pm.rx_aperture_radius, pm.error_angle)
        snr = psd * gt * gr * fspl * hpe / (math.exp(kappa_fn(f) * d / 1000) * n0)
        return math.log2(1 + snr)

    return quad(se, lb.f_lo, lb.f_hi, limit=200)[0]


def test_capacity_matches_quadrature_oracle():
    lb = LinkBudget(tx_power=dbm_to_watts(20.0), sub_bands=256)
    am = AbsorptionModel()
    pm = PointingModel()

    def kap(f):
        return float(am.kappa(f))

    for d in (1e5, 5e5, 1.5e6):
        assert capacity(lb, am, pm, d) == pytest.approx(_capacity_oracle(lb, kap, pm, d), rel=1e-6)


def test_capacity_examples():
    am, pm = AbsorptionModel(), PointingModel()
    assert capacity(LinkBudget(tx_power=0.0), am, pm, 1e5) == 0.0
    lb = LinkBudget(tx_power=dbm_to_watts(20.0))
    caps = [capacity(lb, am, pm, d * 1e3) for d in range(100, 1600, 100)]
    assert all(a > b for a, b in zip(caps, caps[1:]))
    assert caps[-1] > 1e9
    with pytest.raises(ValueError):
        capacity(lb, am, pm, 0.0)


def test_psd_profile_conserves_power():
    lb = LinkBudget(tx_power=0.1, psd_profile=(1.0, 3.0))
    f = np.linspace(lb.f_lo, lb.f_hi, 200001)
    p = np.trapezoid(lb.psd(f), f) if hasattr(np, "trapezoid") else np.trapz(lb.psd(f), f)
    assert p == pytest.approx(0.1, rel=1e-3)


def test_aperture_gain_formula():
    assert float(aperture_gain(0.5, 97e9)) == pytest.approx((math.pi * 0.5 * 97e9 / C) ** 2)


def test_rate_and_latency_examples():
    assert per_satellite_rate(5e9, 1) == 5e9
    assert per_satellite_rate(38e9, 200) == pytest.approx(190e6)
    assert transmission_latency(0, 1e8) == 0.0
    assert transmission_latency(2.6e6, 100e6) == pytest.approx(0.208)
    assert transmission_latency(548e6, 10e6) == pytest.approx(438.4)
    with pytest.raises(ValueError):
        per_satellite_rate(1.0, 0)
    with pytest.raises(ValueError):
        transmission_latency(1.0, 0.0)


def test_link_budget_validation():
    with pytest.raises(ValueError):
        LinkBudget(f_lo=100e9, f_hi=90e9)
    with pytest.raises(ValueError):
        LinkBudget(tx_power=-1.0)
    with pytest.raises(ValueError):
        LinkBudget(psd_profile=(-1.0, 2.0))
