import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from srltrace import pipeline, simgen


@pytest.fixture(scope="session")
def small_bundle(tmp_path_factory) -> simgen.SimBundle:
    """A 40-student bundle used by pipeline and mining tests."""
    out = tmp_path_factory.mktemp("bundle_small")
    cfg = simgen.SimConfig(n_students=40, attempts_per_student=25, seed=4242)
    return simgen.simulate(cfg, out)


@pytest.fixture(scope="session")
def closure_bundle(tmp_path_factory) -> simgen.SimBundle:
    """The 100-student bundle for generator/analyzer closure checks."""
    out = tmp_path_factory.mktemp("bundle_closure")
    cfg = simgen.SimConfig(n_students=100, attempts_per_student=30, seed=1729)
    return simgen.simulate(cfg, out)


def bundle_config(bundle: simgen.SimBundle, out_dir: Path) -> pipeline.ProjectConfig:
    return pipeline.ProjectConfig(
        transactions=bundle.transactions_path,
        segments=bundle.segments_dir,
        anchors=bundle.anchors_path,
        codes=bundle.codes_path,
        out_dir=out_dir,
    )
