"""Domain errors shared across the package."""


class HomemeshError(Exception):
    """Base class for every error this package raises deliberately."""


class InvalidInput(HomemeshError):
    pass


class UnknownNode(HomemeshError):
    def __init__(self, node):
        super().__init__(f"unknown node id {node!r}")
        self.node = node


class AsymmetricTable(HomemeshError):
    """Strict validation found a pair with cost[i][j] != cost[j][i]."""

    def __init__(self, i, j, cost_ij, cost_ji):
        super().__init__(
            f"asymmetric distances between nodes {i} and {j}: "
            f"cost[{i}][{j}]={cost_ij} but cost[{j}][{i}]={cost_ji}"
        )
        self.i = i
        self.j = j
        self.cost_ij = cost_ij
        self.cost_ji = cost_ji


class NoPath(HomemeshError):
    """No feasible path exists under the given per-hop radius."""

    def __init__(self, src, dst, radius):
        super().__init__(f"no path from {src} to {dst} with every hop <= {radius}")
        self.src = src
        self.dst = dst
        self.radius = radius


class InvalidPath(HomemeshError):
    pass


class InstanceTooLarge(HomemeshError):
    """The exhaustive enumerator refuses networks above its size bound."""


class MisroutedFrame(HomemeshError):
    """A radio frame arrived at a node that is not its current hop."""


class NoCoordinator(HomemeshError):
    """A command was dispatched while no coordinator session is connected."""
