import pytest

from mpcert.netsim import graph as g
from mpcert.netsim.world import SimWorld

_original = SimWorld.node_disjoint_paths


def _checked(self, source, dest, k):
    paths = _original(self, source, dest, k)
    assert g.paths_internally_disjoint(paths), paths
    assert all(g.route_is_valid(self.graph, p) and p[0] == source and p[-1] == dest for p in paths)
    assert len(paths) <= k
    return paths


@pytest.fixture(autouse=True)
def disjointness_checked(monkeypatch):
    """Every path set a simulation computes is verified while tests run."""
    monkeypatch.setattr(SimWorld, "node_disjoint_paths", _checked)
