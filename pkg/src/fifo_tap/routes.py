"""Route-set generation: K loop-free shortest routes by free-flow time."""
from __future__ import annotations

import itertools
import math

import networkx as nx

from .exceptions import ValidationError
from .network import Route


def _expanded_graph(links) -> nx.DiGraph:
    # a midpoint node per link keeps parallel links distinct in a simple DiGraph
    g = nx.DiGraph()
    for link in links:
        mid = ("link", link.id)
        g.add_edge(("node", link.tail), mid, weight=float(link.free_flow_time))
        g.add_edge(mid, ("node", link.head), weight=0.0)
    return g


def k_shortest_routes(links, od_pairs, K: int, rtol: float = 1e-12) -> tuple[Route, ...]:
    """Up to K simple routes per O-D pair, ordered by free-flow time then link ids.

    Routes tied with the K-th cost are all enumerated before truncating, so
    the result does not depend on networkx's internal tie order.
    """
    if int(K) != K or K < 1:
        raise ValidationError("K must be a positive integer")
    g = _expanded_graph(links)
    t0 = {link.id: float(link.free_flow_time) for link in links}
    routes = []
    for i, od in enumerate(od_pairs):
        src, dst = ("node", od.origin), ("node", od.destination)
        if src not in g or dst not in g or not nx.has_path(g, src, dst):
            raise ValidationError(f"O-D ({od.origin}, {od.destination}) is not connected")
        found = []
        limit = math.inf
        for path in nx.shortest_simple_paths(g, src, dst, weight="weight"):
            ids = tuple(n[1] for n in path if n[0] == "link")
            cost = sum(t0[j] for j in ids)
            if cost > limit * (1 + rtol):
                break
            found.append((cost, ids))
            if len(found) == K:
                limit = cost
        found.sort()
        routes.extend(Route(i, ids) for _, ids in itertools.islice(found, K))
    return tuple(routes)
