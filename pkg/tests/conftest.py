import pytest

from streamtune.corpus import build_corpus
from streamtune.simulator import WorkloadSpec

# Master seed for runs over the bundled corpus.
CORPUS_SEED = 7


def make_workload(**kw):
    base = dict(
        program_id="p", dataset_id="d", elements=1000,
        bytes_per_element_in=4.0, bytes_per_element_out=4.0,
        transfer_alpha=1e-9, transfer_beta=1e-5,
        compute_eta=1e-8, compute_gamma=1e-5,
        thread_overhead=0.0, partition_overhead=0.0,
        total_cores=8, outer_iterations=1, noise_sigma=0.0,
    )
    base.update(kw)
    return WorkloadSpec(**base)


@pytest.fixture(scope="session")
def default_corpus():
    return build_corpus(seed=CORPUS_SEED)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
