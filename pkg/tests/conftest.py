import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fusepath.dataset import SynthSpec, synthesize_corpus  # noqa: E402
from fusepath.training import prepare_corpus  # noqa: E402

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _criteria.get(n)
        status = "PASS" if rep.outcome == "passed" else "FAIL"
        if prev is None or prev[0] == "PASS":
            _criteria[n] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, text = _criteria[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_corpus")
    synthesize_corpus(SynthSpec(n_per_class=10, seed=7), out)
    return out


@pytest.fixture(scope="session")
def default_corpus_dir(tmp_path_factory):
    """The default 2-class, 200-clip synthetic corpus."""
    out = tmp_path_factory.mktemp("default_corpus")
    synthesize_corpus(SynthSpec(), out)
    return out


@pytest.fixture(scope="session")
def tiny_examples(tiny_corpus_dir):
    from fusepath.dataset import load_manifest

    return prepare_corpus(load_manifest(tiny_corpus_dir / "manifest.jsonl"))


@pytest.fixture(scope="session")
def default_examples(default_corpus_dir):
    from fusepath.dataset import load_manifest

    return prepare_corpus(load_manifest(default_corpus_dir / "manifest.jsonl"))


@pytest.fixture(scope="session")
def pipeline(default_examples):
    """Stage 1 on both paths then stage 2 on the default corpus, with desk defaults."""
    import time

    from fusepath import training as tr
    from fusepath.config import from_dict

    run = from_dict({})
    spec, cfg = run.model_spec(2), run.train(2)
    t0 = time.perf_counter()
    r_tdnn = tr.stage1_train_tdnn(default_examples, spec, cfg)
    r_ac = tr.stage1_train_acoustic(default_examples, spec, cfg)
    r_fused = tr.stage2_finetune(default_examples, r_tdnn.params.state(), r_ac.params.state(), spec, cfg)
    wall = time.perf_counter() - t0
    return {"spec": spec, "cfg": cfg, "tdnn": r_tdnn, "acoustic": r_ac, "fused": r_fused, "wall_time": wall}
