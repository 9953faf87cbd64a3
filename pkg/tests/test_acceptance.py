"""Acceptance gate: every numbered criterion at its stated tolerance.

Each suite runs once per session at reference resolution; one line per
criterion is printed as it is checked (run with -s to watch them live).
"""
import pytest

from polykin import verification


def _by_prefix(results, prefix):
    picked = [r for r in results if r.cid.startswith(prefix)]
    assert picked, f"no criteria with prefix {prefix}"
    return picked


def _assert_all(results):
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    assert not failed, "; ".join(r.line() for r in failed)


@pytest.fixture(scope="session")
def props_results():
    return verification.suite_props()


@pytest.fixture(scope="session")
def t21_results():
    return verification.suite_t21()


@pytest.fixture(scope="session")
def t23_results():
    return verification.suite_t23()


@pytest.fixture(scope="session")
def t24_results():
    return verification.suite_t24()


@pytest.fixture(scope="session")
def t26_results():
    return verification.suite_t26()


@pytest.fixture(scope="session")
def t28_results():
    return verification.suite_t28()


def test_c01_mass_conservation(props_results):
    _assert_all(_by_prefix(props_results, "c1."))


def test_c02_critical_size_concentration(t23_results):
    _assert_all(_by_prefix(t23_results, "c2."))


def test_c03_characteristic_spread_envelope(t23_results):
    _assert_all(_by_prefix(t23_results, "c3."))


def test_c04_entropy_dissipation(t23_results, t24_results):
    _assert_all(_by_prefix(t23_results, "c4.") + _by_prefix(t24_results, "c4."))


def test_c05_nucleation_linear_growth(t24_results):
    _assert_all(_by_prefix(t24_results, "c5."))


def test_c06_nucleation_sublinear_growth(t24_results):
    _assert_all(_by_prefix(t24_results, "c6."))


def test_c07_shattering_rates(t26_results):
    _assert_all(_by_prefix(t26_results, "c7."))


def test_c08_low_monomer_relaxation(t21_results):
    _assert_all(_by_prefix(t21_results, "c8."))


def test_c09_steady_profile_pipeline(t28_results):
    _assert_all(_by_prefix(t28_results, "c9."))


def test_c10_property_suite(props_results):
    _assert_all(_by_prefix(props_results, "c10."))
