import pytest

from checknet.basemodel import BaseArch, SynthSpec, synth_dataset, train_base
from checknet.crosscheck import HeadHyper
from checknet.hashcheck import HashHyper
from checknet.numerics import RngStream
from checknet.verifier import CheckNetHyper, protect

SMALL_SPEC = SynthSpec(n_classes=4, dim=8, n_train=1500, n_test=400, separation=3.0)
SMALL_HYPER = CheckNetHyper(n_outputs=24, n_sets=6, bits=16, n_pairs=2,
                            head=HeadHyper(epochs=15, batch_size=64),
                            hash=HashHyper(hidden=32, epochs=15, batch_size=64))


@pytest.fixture(scope="session")
def small_data():
    return synth_dataset(SMALL_SPEC, RngStream(11, "data"))


@pytest.fixture(scope="session")
def small_base(small_data):
    train, test = small_data
    return train_base(train, BaseArch(hidden=(32, 16), epochs=6, batch_size=64), RngStream(11, "base"), test)


@pytest.fixture(scope="session")
def small_bundle(small_base, small_data):
    train, test = small_data
    return protect(small_base, train, SMALL_HYPER, RngStream(11, "protect"), test)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")
