import numpy as np
import pytest

from stresslab.market_data import GarchParams, SynthSpec, compute_returns, generate_synthetic

_acceptance: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): exit criterion, reported in the terminal summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = report.user_properties and dict(report.user_properties).get("acceptance")
    if label:
        _acceptance.append((label, report.outcome))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("acceptance")
    if m and ("acceptance", m.args[0]) not in item.user_properties:
        item.user_properties.append(("acceptance", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in sorted(_acceptance):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {label}")


def one_factor_spec(**kw) -> SynthSpec:
    """25 assets / 5 sectors, one market factor with positive loadings."""
    base = dict(
        assets=25,
        sectors=5,
        days=2000,
        loadings=np.linspace(0.6, 1.4, 25),
        factor_vols=(0.01,),
        garch=GarchParams(2e-6, 0.08, 0.90),
        seed=11,
    )
    base.update(kw)
    return SynthSpec(**base)


@pytest.fixture(scope="session")
def one_factor_returns():
    return compute_returns(generate_synthetic(one_factor_spec()))


@pytest.fixture(scope="session")
def rank1_window():
    """Standardized 504 x 25 window dominated by a single factor."""
    rng = np.random.default_rng(5)
    f = rng.standard_normal((504, 1))
    L = rng.uniform(0.5, 1.5, size=(1, 25))
    X = f @ L + 0.05 * rng.standard_normal((504, 25))
    return (X - X.mean(0)) / X.std(0, ddof=1)


def central_fd(loss, arrays, h=1e-5):
    """Central finite-difference gradient of ``loss()`` w.r.t. each array, perturbed in place."""
    out = []
    for a in arrays:
        g = np.empty_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss()
            flat[i] = keep - h
            down = loss()
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))
