"""Shared fixtures for the main suite.

The acceptance-criteria PASS/FAIL reporter lives in the repo-root conftest,
where it can see criterion-marked tests from every collected suite.
"""
from __future__ import annotations

import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_corpus_root() -> Path:
    return FIXTURES / "corpus"


@pytest.fixture(scope="session")
def fixture_config_path() -> Path:
    return FIXTURES / "run_config.json"


@pytest.fixture(scope="session")
def fixture_run(fixture_config_path, tmp_path_factory):
    """One completed pipeline run over the fixture corpus, report included.

    Session-scoped because the run takes ~30 s; tests that mutate artifacts
    must copy it (see ``copy_run``) instead of touching this directory.
    """
    from iojudge.pipeline import RunConfig, RunDir, run_pipeline, write_report

    cfg = RunConfig.load(fixture_config_path)
    rundir = RunDir(tmp_path_factory.mktemp("fixture-run"))
    run_pipeline(cfg, rundir)
    write_report(rundir)
    return cfg, rundir


@pytest.fixture()
def copy_run(fixture_run, tmp_path):
    """Writable copy of the session run for tests that corrupt artifacts."""
    from iojudge.pipeline import RunDir

    _, rundir = fixture_run
    dest = tmp_path / "run-copy"
    shutil.copytree(rundir.root, dest)
    (dest / ".lock").unlink(missing_ok=True)
    return RunDir(dest)
