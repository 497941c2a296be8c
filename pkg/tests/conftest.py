from __future__ import annotations

import pytest

from tdpim.archcfg import preset


@pytest.fixture(scope="session")
def timely():
    return preset("timely_8b")


@pytest.fixture(scope="session")
def prime():
    return preset("prime_like")


def small_cfg(B=8, R_cb=2, K_cb=2, bpc=4, wb=8, ib=8, **kw):
    """A timely_8b variant with a tiny geometry, counts rebound to match."""
    base = preset("timely_8b")
    return base.replace(B=B, R_cb=R_cb, K_cb=K_cb, gamma=1, bits_per_cell=bpc,
                        weight_bits=wb, input_bits=ib, **kw).rebind_counts()
