import numpy as np
import pytest
from scipy.integrate import quad

from nullwave import (SampleRegion, minkowski, reissner_nordstrom, verify_h0)
from nullwave.background import Background


def test_minkowski_trivials():
    mk = minkowski()
    assert mk.r(0.0, 10.0) == 10.0
    assert mk.dr_dv(3.0, 7.0) == 1.0
    assert mk.dr_du(3.0, 7.0) == -1.0
    assert mk.omega2(123.0, 456.0) == 4.0
    for deriv in (mk.d2r_dudv, mk.d2r_dvdv, mk.d3r_dudvdv, mk.domega2_dv):
        assert deriv(2.0, 9.0) == 0.0


def test_rn_lapse_value():
    sch = reissner_nordstrom(1.0, 0.0)
    assert sch.D(4.0) == pytest.approx(0.5, abs=1e-15)
    assert sch.omega2(0.0, sch.rstar(4.0)) == pytest.approx(2.0, rel=1e-10)


def test_rn_reduces_to_minkowski():
    flat = reissner_nordstrom(0.0, 0.0)
    v = np.linspace(5.0, 50.0, 11)
    assert np.allclose(flat.r(1.0, v), v - 1.0, atol=0)
    assert np.allclose(flat.omega2(1.0, v), 4.0, atol=0)


def test_rn_tortoise_round_trip():
    rn = reissner_nordstrom(1.0, 0.5)
    x = np.linspace(20.0, 2000.0, 257)
    residual = np.abs(rn.rstar(rn.r_of_rho(rn.rstar(x))) - rn.rstar(x))
    assert np.max(np.abs(rn.r_of_rho(rn.rstar(x)) - x) / x) < 1e-12
    assert np.max(residual) < 1e-10
    # invert, then re-map, compare in rstar; r* -> r is ill-conditioned near
    # the horizon (dr/dr* = D -> 0), hence the moderate lower end here
    rho = np.linspace(-10.0, 1990.0, 257)
    back = rn.rstar(rn.r_of_rho(rho))
    assert np.max(np.abs(back - rho)) < 1e-10


def test_rn_tortoise_against_quadrature():
    # independent oracle: r*(r) - 3M = integral of 1/D from 3M to r
    rn = reissner_nordstrom(1.0, 0.5)
    for r in (3.5, 7.0, 42.0, 400.0):
        expected, err = quad(lambda s: 1.0 / rn.D(s), 3.0, r, limit=200)
        assert rn.rstar(r) - 3.0 == pytest.approx(expected, abs=max(1e-9, 10 * err))


def test_rn_extremal_round_trip():
    rn = reissner_nordstrom(1.0, 1.0)
    rho = np.linspace(-5.0, 500.0, 64)
    r = rn.r_of_rho(rho)
    assert np.all(r > rn.r_plus)
    assert np.max(np.abs(rn.rstar(r) - rho)) < 1e-9


def test_rn_rejects_bad_parameters():
    with pytest.raises(ValueError):
        reissner_nordstrom(1.0, 1.5)
    rn = reissner_nordstrom(1.0, 0.5)
    with pytest.raises(ValueError):
        rn.rstar(rn.r_plus)
    with pytest.raises(ValueError):
        reissner_nordstrom(0.0, 0.0).r_of_rho(-1.0)


def test_monotone_null_derivatives():
    rn = reissner_nordstrom(1.0, 0.5)
    rho = np.linspace(-10.0, 3000.0, 200)
    assert np.all(rn.dr_dv(0.0, rho) > 0)
    assert np.all(rn.dr_du(0.0, rho) < 0)


@pytest.mark.parametrize("bg", [reissner_nordstrom(1.0, 0.5),
                                reissner_nordstrom(1.0, 0.0)])
def test_derivative_consistency_order(bg):
    # analytic samplers vs centered differences of r and Omega^2: the FD
    # error must shrink at measured order >= 1.9 under h -> h/2
    u, v = 3.0, 120.0

    def fd_err(h):
        dv_fd = (bg.r(u, v + h) - bg.r(u, v - h)) / (2 * h)
        du_fd = (bg.r(u + h, v) - bg.r(u - h, v)) / (2 * h)
        om_fd = (bg.omega2(u, v + h) - bg.omega2(u, v - h)) / (2 * h)
        mixed_fd = (bg.dr_dv(u + h, v) - bg.dr_dv(u - h, v)) / (2 * h)
        return max(
            abs(dv_fd - bg.dr_dv(u, v)),
            abs(du_fd - bg.dr_du(u, v)),
            abs(om_fd - bg.domega2_dv(u, v)),
            abs(mixed_fd - bg.d2r_dudv(u, v)),
        )

    e1, e2 = fd_err(0.2), fd_err(0.1)
    assert np.log2(e1 / e2) > 1.9


def test_verify_h0_minkowski_exact():
    rep = verify_h0(minkowski(), SampleRegion(1.0, 40.0, 60.0, 4000.0))
    assert rep.passed
    assert all(v == 0.0 for k, v in rep.as_dict().items()
               if k.startswith(("r|", "r^2|")))


def test_verify_h0_rn_values():
    rn = reissner_nordstrom(1.0, 0.5)
    rep = verify_h0(rn, SampleRegion(1.0, 400.0, 420.0, 40000.0))
    assert rep.passed
    # sup r|Omega^2 - 4| = sup |{-8M + 4e^2/r}| -> 8M at large r
    assert rep.sup_r_omega2_minus_4 == pytest.approx(8.0, rel=0.05)
    # sup r^2 |d2r/dudv| = sup r^2 |D D'| -> 2M
    assert rep.sup_r2_d2r_dudv == pytest.approx(2.0, rel=0.05)


class _SlowlyFlat(Background):
    """Deliberate (H0) violator: Omega^2 - 4 decays only like r^(-1/2)."""

    def r_of_rho(self, rho):
        return np.asarray(rho, dtype=float)

    def D(self, r):
        return 1.0 + 0.25 * np.asarray(r, dtype=float) ** -0.5

    def dD(self, r):
        return -0.125 * np.asarray(r, dtype=float) ** -1.5

    def d2D(self, r):
        return 0.1875 * np.asarray(r, dtype=float) ** -2.5

    def d3D(self, r):
        return -0.46875 * np.asarray(r, dtype=float) ** -3.5


def test_verify_h0_detects_slow_decay():
    rep = verify_h0(_SlowlyFlat(), SampleRegion(1.0, 40.0, 60.0, 400000.0))
    assert not rep.passed
    # r |Omega^2 - 4| = r^(1/2) grows without bound over the region
    assert rep.sup_r_omega2_minus_4 > 100.0
    assert "exceeds ceiling" in rep.failure
