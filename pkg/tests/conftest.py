import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import build_desk_fixture  # noqa: E402


@pytest.fixture(scope="session")
def desk_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    planted = build_desk_fixture(root)
    return {"root": root, **planted}


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1].replace("test_criterion_", "")
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {verdict} ({report.duration:.2f}s)", flush=True)
