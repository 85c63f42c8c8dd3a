"""Bundled example networks.

All fixtures carry a single ``cost`` attribute; use ``beta=(-1,)`` so that
``u_a = -cost_a``.
"""

from __future__ import annotations

from importlib import resources

from rlca.network import Edge, Network, parse_network

FIXTURES = ("bridge", "complex", "nested")


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return resources.files("rlca.data").joinpath(f"{name}.net").read_text(encoding="utf-8")


def load_fixture(name: str) -> Network:
    return parse_network(fixture_text(name))


def braess_network(
    c1: float, c2: float, c3: float, c4: float, c5: float | None = None
) -> Network:
    """Two parallel two-edge routes s-i1-t and s-i2-t.

    With ``c5`` given, a connector ``a5: i1 -> i2`` is added, opening the
    route ``(a1, a5, a4)``.
    """
    edges = [
        Edge("a1", "s", "i1", (c1,)),
        Edge("a2", "i1", "t", (c2,)),
        Edge("a3", "s", "i2", (c3,)),
        Edge("a4", "i2", "t", (c4,)),
    ]
    if c5 is not None:
        edges.append(Edge("a5", "i1", "i2", (c5,)))
    return Network(("s", "i1", "i2", "t"), tuple(edges), ("cost",), "s", ("t",))


def braess_pair(x: float) -> tuple[Network, Network]:
    """Outer edges cost ``x``, inner edges cost 1, connector is free."""
    return braess_network(x, 1.0, 1.0, x), braess_network(x, 1.0, 1.0, x, 0.0)
