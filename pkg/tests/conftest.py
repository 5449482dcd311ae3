"""Shared fixtures: the synthetic corpus and one forest trained on it."""
import re
from pathlib import Path

import pytest

from forestaudit.datasets import build_corpus, default_trace_model
from forestaudit.ensemble import compute_thresholds
from forestaudit.forest import train_forest
from forestaudit.model_io import save_dataset, save_model

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"

CORPUS_EPOCHS = 240
CORPUS_SEED = 7
FOREST_SEED = 3

# Acceptance tests stash short free-text notes here; the terminal summary
# hook appends them to the per-criterion verdict line.
ACCEPTANCE_NOTES: dict[str, str] = {}


@pytest.fixture(scope="session")
def trace_model():
    return default_trace_model()


@pytest.fixture(scope="session")
def corpus(trace_model):
    return build_corpus(trace_model, CORPUS_EPOCHS, CORPUS_SEED)


@pytest.fixture(scope="session")
def trained(trace_model, corpus):
    X, y = corpus
    ensemble = train_forest(X, y, trace_model.schema, seed=FOREST_SEED)
    return ensemble, compute_thresholds(ensemble, X, y)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory, trace_model, corpus, trained):
    """Corpus CSV and trained model JSON on disk, for CLI-level tests."""
    out = tmp_path_factory.mktemp("artifacts")
    X, y = corpus
    save_dataset(str(out / "corpus.csv"), X, y, trace_model.schema)
    save_model(str(out / "model.json"), trained[0], trained[1])
    return out


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts: dict[str, bool] = {}
    for status, ok in (("passed", True), ("failed", False), ("error", False)):
        for rep in terminalreporter.stats.get(status, []):
            m = re.search(r"test_acceptance\.py::test_(c\d+)_",
                          getattr(rep, "nodeid", ""))
            if m:
                cid = m.group(1).upper()
                verdicts[cid] = verdicts.get(cid, True) and ok
    if not verdicts:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for cid in sorted(verdicts, key=lambda c: int(c[1:])):
        line = f"{cid}: {'PASS' if verdicts[cid] else 'FAIL'}"
        note = ACCEPTANCE_NOTES.get(cid)
        if note:
            line += f" ({note})"
        terminalreporter.write_line(line)
