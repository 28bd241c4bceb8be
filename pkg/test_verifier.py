import math

import pytest

from birkhoff_ps.errors import UsageError
from birkhoff_ps.verifier import IdentityVerifier


def test_cgl_suite_passes():
    report = IdentityVerifier("cgl", 64, trials=10).verify_identities()
    assert report["verification_successful"]
    assert report["failed"] == []
    assert len(report["items"]) == 10
    names = [item["name"] for item in report["items"]]
    assert "inverse-a" in names and "boundary-column-b" in names
    assert "modal-round-trip" in names


def test_lgl_suite_has_no_modal_item():
    items = IdentityVerifier("lgl", 32, trials=10).run_verification()
    assert all(item.passed for item in items)
    assert len(items) == 9
    assert "modal-round-trip" not in {item.name for item in items}


BIRKHOFF_ITEMS = [
    "inverse-a", "inverse-b",
    "interpolant-agreement-a", "interpolant-agreement-b",
    "boundary-column-a", "boundary-column-b",
]


@pytest.mark.parametrize("kind", ["cgl", "lgl"])
@pytest.mark.parametrize("n", [8, 16, 32, 64, 128, 256])
def test_birkhoff_identities_hold_on_spectral_grids(kind, n):
    items = {item.name: item for item in IdentityVerifier(kind, n, trials=100).run_verification()}
    for name in BIRKHOFF_ITEMS:
        assert items[name].passed, items[name].error_message


@pytest.mark.parametrize("n", [4, 8])
def test_uniform_low_orders_pass(n):
    report = IdentityVerifier("uniform", n, trials=100).verify_identities()
    assert report["verification_successful"], report["failed"]


def test_uniform_breaks_down_at_order_sixteen():
    report = IdentityVerifier("uniform", 16, trials=100).verify_identities()
    assert not report["verification_successful"]
    assert {"inverse-a", "inverse-b", "interpolant-agreement-a", "interpolant-agreement-b"} <= set(report["failed"])


def test_uniform_small_order_passes():
    report = IdentityVerifier("uniform", 8, trials=5).verify_identities()
    assert report["verification_successful"]
    assert report["grid"] == "uniform"
    assert report["N"] == 8


def test_kronecker_is_exact():
    items = {item.name: item for item in IdentityVerifier("cgl", 16, trials=3).run_verification()}
    assert items["kronecker"].residual == 0.0
    assert items["kronecker"].threshold == 0.0


def test_trials_must_be_positive():
    with pytest.raises(UsageError):
        IdentityVerifier("cgl", 8, trials=0)


def test_failed_identity_is_reported(monkeypatch):
    monkeypatch.setattr("birkhoff_ps.verifier.inverse_residual", lambda ops, birk: 1.0)
    report = IdentityVerifier("cgl", 8, trials=2).verify_identities()
    assert not report["verification_successful"]
    assert report["failed"] == ["inverse-a", "inverse-b"]
    failed = next(item for item in report["items"] if item["name"] == "inverse-a")
    assert "exceeds" in failed["error_message"]


def test_non_finite_residual_fails(monkeypatch):
    monkeypatch.setattr("birkhoff_ps.verifier.boundary_column_residual", lambda ops, birk: math.nan)
    items = {item.name: item for item in IdentityVerifier("lgl", 8, trials=2).run_verification()}
    assert not items["boundary-column-a"].passed
    assert items["row-sum"].passed


def test_one_nan_trial_fails_the_item(monkeypatch):
    trials = iter([math.nan, 0.0, 0.0])
    monkeypatch.setattr("birkhoff_ps.verifier.interpolant_agreement_residual",
                        lambda ops, birk, boundary, V: next(trials, 0.0))
    items = {item.name: item for item in IdentityVerifier("cgl", 8, trials=3).run_verification()}
    item = items["interpolant-agreement-a"]
    assert not item.passed
    assert math.isnan(item.residual)
