import functools

from lred.pipeline import Run
from lred.problem import corpus_files, load

FIXTURES = {p.name.replace(".lred.json", ""): p for p in corpus_files()}


def fixture_path(name):
    return FIXTURES[name]


@functools.lru_cache(maxsize=None)
def spec_of(name):
    return load(FIXTURES[name])


@functools.lru_cache(maxsize=None)
def run_of(name):
    """A lazily evaluated Run on a fresh load (stages are cached inside)."""
    return Run(load(FIXTURES[name]))


@functools.lru_cache(maxsize=None)
def report_of(name, command="all"):
    return Run(load(FIXTURES[name])).report(command)


# -- acceptance summary --------------------------------------------------------

ACCEPTANCE = {}


def record(number, title, ok, detail):
    ACCEPTANCE[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
