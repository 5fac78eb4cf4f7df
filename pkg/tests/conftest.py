import math

import numpy as np
import pytest

from dhrec import env as sim

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_profile(base, sat=0.0, null=0.0, patience=math.inf, conv=0.0, segment=0):
    return sim.CustomerProfile(
        base_utility=np.asarray(base, dtype=float),
        satiation_rate=sat,
        patience=patience,
        null_utility=null,
        conversion_prob=conv,
        segment=segment,
    )


def make_session(profile, seed=0, cap=20):
    from dhrec.core.rng import substream
    from dhrec.core.types import Context, ExposureState

    return sim.SessionHandle(
        session_id=0,
        context=Context("u-test", "s-test"),
        profile=profile,
        state=ExposureState.zeros(len(profile.base_utility)),
        session_cap=cap,
        env_rng=substream(seed, 2),
        policy_rng=substream(seed, 3),
    )


@pytest.fixture
def profile_factory():
    return make_profile
