"""Runtime aborts raised while simulating Brownian paths and couplings."""


class SimulationAbort(RuntimeError):
    """A trial cannot be completed at the requested resolution."""


class UnderResolvedError(SimulationAbort):
    """Time step or grid spacing too coarse for the geometric scale."""


class CrossingJumpError(SimulationAbort):
    """A coordinate crossed two or more integer levels within one grid step."""
