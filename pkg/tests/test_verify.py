import json
import math

import numpy as np
import pytest

from tvdnpl.verify import (
    BoundReport,
    bernoulli_logit_family,
    check_concentration,
    check_consistency,
    check_robustness_bound,
    concentration_delta,
    contaminated_poisson_pmf,
    joint_tvd,
    poisson_tvd_minimiser,
    run_claims,
)

GRID = np.linspace(-5, 5, 101)
# 28 e^-10, mpmath
DELTA_500 = 0.001271198033349575843


def test_robustness_no_contamination():
    fam = bernoulli_logit_family()
    q = np.array([[0.0, 1.0], [0.0, 0.0]])
    rep = check_robustness_bound(fam, q, 0.0, GRID, theta_true=0.3)
    assert rep.passed and rep.observed == 0.0


def test_robustness_contaminant_equal_to_model():
    fam = bernoulli_logit_family()
    rep = check_robustness_bound(fam, fam.joint(0.3), 0.3, GRID, theta_true=0.3)
    assert rep.passed and rep.observed < 1e-15


@pytest.mark.parametrize("cell", range(4))
def test_robustness_opposite_point_mass_is_tight(cell):
    fam = bernoulli_logit_family()
    q = np.zeros(4)
    q[cell] = 1.0
    q = q.reshape(2, 2)
    eps = 0.15
    rep = check_robustness_bound(fam, q, eps, GRID, theta_true=0.3)
    assert rep.passed and rep.observed <= 0.30
    # triangle inequality: the gap never exceeds TVD(c, p_true) = eps * TVD(q, p_true)
    attainable = eps * joint_tvd(q, fam.joint(0.3))
    assert rep.observed <= attainable + 1e-12
    assert rep.observed >= 0.95 * attainable


def test_robustness_rejects_invalid_q():
    fam = bernoulli_logit_family()
    with pytest.raises(ValueError):
        check_robustness_bound(fam, np.full((2, 2), 0.3), 0.1, GRID, theta_true=0.0)


def test_concentration_delta():
    assert concentration_delta(500, 0.2, 2, 2) == pytest.approx(DELTA_500, rel=1e-14)
    assert concentration_delta(125, 0.2, 2, 2) > 1


def test_concentration_small_run():
    rep = check_concentration(n_grid=(125, 500), trials=400, seed=3)
    rows = rep.details["by_n"]
    assert rows[0]["vacuous"]
    assert rows[1]["exceedance"] == 0.0
    assert rep.details["truth"] > 0


def test_concentration_rejects_large_alphabets():
    with pytest.raises(ValueError):
        check_concentration(Kx=4, Ky=4)


def test_poisson_minimiser_well_specified():
    pmf = contaminated_poisson_pmf(3.0, 0.0, 10)
    assert poisson_tvd_minimiser(pmf) == pytest.approx(3.0, abs=1e-4)


def test_poisson_minimiser_contaminated_differs_from_mle_target():
    target = poisson_tvd_minimiser(contaminated_poisson_pmf(3.0, 0.15, 10))
    assert abs(target - 3.0) < 0.25
    assert abs(target - 4.5) > 1.0


def test_contaminated_pmf_normalised():
    pmf = contaminated_poisson_pmf(3.0, 0.15, 10)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.dot(np.arange(len(pmf)), pmf) == pytest.approx(4.5, abs=1e-10)


def test_consistency_short_run():
    rep = check_consistency(n_grid=(100, 800), trials=12, seed=1)
    meds = [r["median_abs_err"] for r in rep.details["by_n"]]
    assert meds[1] < meds[0]
    assert rep.details["mle_target"] == 4.5


def test_reports_are_reproducible_and_serialisable():
    a = run_claims(["robustness"], seed=4)
    b = run_claims(["robustness"], seed=4)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]
    assert len(a) == 16 and all(isinstance(r, BoundReport) for r in a)
    assert json.loads(a[0].to_json())["claim"] == "robustness"
    with pytest.raises(ValueError):
        run_claims(["nonsense"])
