import functools

import pytest

from bloch_threads.chimney import trace_chimney
from bloch_threads.system import figure_system
from bloch_threads.threads import alternate_threads, main_threads


@functools.lru_cache(maxsize=None)
def cached_main(k, dr=1e-3):
    return main_threads(figure_system(k), dr)


@functools.lru_cache(maxsize=None)
def cached_alternates(k, dr=1e-3):
    return tuple(alternate_threads(figure_system(k), dr))


@functools.lru_cache(maxsize=None)
def cached_chimney(k):
    threads = list(cached_main(k)) + list(cached_alternates(k))
    return trace_chimney(figure_system(k), threads=threads)


@pytest.fixture(params=[1, 2, 3, 4], ids=lambda k: f"fig{k}")
def figure_index(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
