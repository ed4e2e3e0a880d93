"""Parameter record for one interference-experiment configuration."""
from dataclasses import asdict, dataclass, fields, replace

from ._validation import check_efficiency, check_gain, check_unit_interval

__all__ = ["ExperimentModel"]


@dataclass(frozen=True)
class ExperimentModel:
    """Everything needed to predict the H-mode output of the interference crystal.

    Attributes
    ----------
    g : float
        Parametric gain of the interference crystal.
    o1, o2 : float
        Overlap of the heralded H (V) photon with the crystal's H (V) mode.
    g1, g2 : float
        Gains of the heralding sources. ``1.0`` selects the ideal limit in
        which each trigger heralds exactly one photon.
    eta_t1, eta_t2 : float
        Trigger-detector efficiencies of the two heralding arms.
    eta : float
        Per-detector efficiency of the analysis array.
    n_d : int
        Dead time in pulses.
    transmission : float
        Transmission of the neutral filter in front of the crystal, applied
        to both heralded photons.
    """

    g: float = 1.0
    o1: float = 1.0
    o2: float = 1.0
    g1: float = 1.0
    g2: float = 1.0
    eta_t1: float = 1.0
    eta_t2: float = 1.0
    eta: float = 0.13
    n_d: int = 0
    transmission: float = 1.0

    def __post_init__(self):
        check_gain(self.g, "g")
        check_gain(self.g1, "g1")
        check_gain(self.g2, "g2")
        for name in ("o1", "o2", "eta_t1", "eta_t2", "transmission"):
            check_unit_interval(getattr(self, name), name)
        check_efficiency(self.eta)
        if int(self.n_d) != self.n_d or self.n_d < 0:
            raise ValueError("n_d must be a non-negative integer")
        object.__setattr__(self, "n_d", int(self.n_d))

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        return cls(**data)
