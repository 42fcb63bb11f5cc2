import numpy as np
import pytest

from rarelstd.mrp import (
    ChainSpec,
    Mrp,
    build_chain,
    committor_reward,
    mfpt_reward,
    w4_chain,
    with_quantity,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def w4():
    return w4_chain()


@pytest.fixture
def w4_committor():
    return w4_chain().with_reward(committor_reward(4))


@pytest.fixture
def w4_mfpt():
    return w4_chain().with_reward(mfpt_reward(4, (1, 2)))


def zoo():
    """Small chains used by property-style tests (name, Mrp)."""
    from oracles import random_chain

    rng = np.random.default_rng(20240611)
    out = [
        ("w4-committor", w4_chain().with_reward(committor_reward(4))),
        ("w4-mfpt", w4_chain().with_reward(mfpt_reward(4, (1, 2)))),
    ]
    for q in ("mfpt", "committor"):
        out.append((f"bistable8-{q}", with_quantity(build_chain(ChainSpec("bistable", 8)), q)))
        out.append((f"lazy8-{q}", with_quantity(build_chain(ChainSpec("lazy-bistable", 8)), q)))
    for k in range(4):
        P, R, D, mu = random_chain(rng, 5 + k % 2)
        out.append((f"random{k}", Mrp(P=P, R=R, D=D, mu=mu)))
    return out
