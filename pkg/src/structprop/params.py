"""Hyperparameter bundle shared by the propagation pipeline and tuning."""
from __future__ import annotations

from dataclasses import dataclass

# Default RNG seed used by the CLI and the synthetic generator.
DEFAULT_SEED = 73


@dataclass(frozen=True)
class Hyperparams:
    """Ridge weight, alignment weight, per-space bandwidths, iteration count.

    ``sigma_sources`` may be a single float (same bandwidth for every
    semantic source) or a per-source mapping.
    """

    lam: float
    gamma: float
    sigma_image: float = 1.0
    sigma_sources: float | dict[str, float] = 1.0
    iters: int = 10

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.sigma_image <= 0:
            raise ValueError(f"sigma_image must be positive, got {self.sigma_image}")
        sigmas = (
            self.sigma_sources.values()
            if isinstance(self.sigma_sources, dict)
            else [self.sigma_sources]
        )
        if any(s <= 0 for s in sigmas):
            raise ValueError(f"source bandwidths must be positive, got {self.sigma_sources}")
        if self.iters < 1:
            raise ValueError(f"iters must be at least 1, got {self.iters}")

    def sigma_for(self, source: str) -> float:
        if isinstance(self.sigma_sources, dict):
            try:
                return self.sigma_sources[source]
            except KeyError:
                raise KeyError(f"no bandwidth configured for source {source!r}") from None
        return self.sigma_sources

    def replace(self, **changes) -> "Hyperparams":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "gamma": self.gamma,
            "sigma_image": self.sigma_image,
            "sigma_sources": self.sigma_sources,
            "iters": self.iters,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(
            lam=d["lam"],
            gamma=d["gamma"],
            sigma_image=d.get("sigma_image", 1.0),
            sigma_sources=d.get("sigma_sources", 1.0),
            iters=d.get("iters", 10),
        )
