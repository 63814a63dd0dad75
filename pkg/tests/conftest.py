import warnings
from pathlib import Path

import pytest

from hpclm import corpus

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS_DIR = FIXTURES / "corpus"
ARRAY_MAIN = "int main() { int r[2800 + 1]; }"


def fixture_functions():
    """(code, language) for every function extracted from the bundled corpus."""
    out = []
    for repo, path, full, lang in corpus.iter_source_files(CORPUS_DIR):
        text = Path(full).read_text()
        for rec in corpus.extract_functions(text, lang, repo, path):
            out.append((rec.code, rec.language))
    return out


_CACHE = {}


def _cached(key, fn):
    if key not in _CACHE:
        _CACHE[key] = fn()
    return _CACHE[key]


@pytest.fixture(scope="session")
def functions():
    return _cached("functions", fixture_functions)


@pytest.fixture(scope="session")
def prepared():
    return _cached("prep", lambda: corpus.prepare_corpus(CORPUS_DIR, seed=0, ratios=(0.7, 0.1, 0.2)))


@pytest.fixture(scope="session")
def partitioned(prepared):
    def run():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", corpus.InsufficientRecords)
            return corpus.partition_openmp(prepared.splits["test"], seed=0)

    return _cached("partition", run)


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
