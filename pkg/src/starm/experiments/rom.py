"""Reduced bases for wave-equation snapshots under fixed and learned transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import structlog

from starm.optim import LowRankObjective, OptimConfig, OptimTrace, optimize
from starm.tensor import Matrix, Tensor3, Transform
from starm.transforms import TransformSpec, learned
from starm.tsvdm import EnergyProfile, energy_profile, projection_error, truncate, tsvdm

logger = structlog.get_logger()


@dataclass
class BasisResult:
    """Quality of the rank-``k`` tensor basis under one transform.

    Attributes:
        name: Label such as ``dct`` or ``learned[identity]``.
        transform: The transform used.
        global_error: ``||X - U_k * U_k^T * X||_F / ||X||_F``.
        per_param: The same ratio for each parameter slice.
        energy: Per-slice transform-domain energy profile.
        trace: Optimization trace for learned transforms.
    """

    name: str
    transform: Transform
    global_error: float
    per_param: npt.NDArray[np.float64]
    energy: EnergyProfile
    trace: OptimTrace | None = field(default=None, repr=False)

    def summary(self, k: int) -> dict[str, object]:
        """JSON digest for the report."""
        doc: dict[str, object] = {
            "name": self.name,
            "global_error": self.global_error,
            "per_param_error": self.per_param.tolist(),
            "energy_captured_at_k": self.energy.captured(k).tolist(),
        }
        if self.trace is not None:
            doc["optimization"] = self.trace.summary()
        return doc


@dataclass
class RomResult:
    """All bases compared on one snapshot tensor."""

    k: int
    bases: list[BasisResult]

    @property
    def learned(self) -> list[BasisResult]:
        """Learned transforms, one per initialization."""
        return [b for b in self.bases if b.trace is not None]

    @property
    def heuristics(self) -> list[BasisResult]:
        """Fixed transforms."""
        return [b for b in self.bases if b.trace is None]

    @property
    def best_learned(self) -> BasisResult:
        """Learned transform with the lowest global error."""
        return min(self.learned, key=lambda b: b.global_error)


def evaluate_basis(
    x: Tensor3, transform: Transform, k: int, name: str, trace: OptimTrace | None = None
) -> BasisResult:
    """Build the rank-``k`` basis under ``transform`` and measure it."""
    uk, _, _ = truncate(tsvdm(x, transform), k)
    global_error, per_param = projection_error(x, uk, transform)
    logger.info("basis_evaluated", name=name, k=k, global_error=global_error)
    return BasisResult(
        name=name,
        transform=transform,
        global_error=global_error,
        per_param=per_param,
        energy=energy_profile(x, transform),
        trace=trace,
    )


def run_rom(
    x: Tensor3,
    k: int,
    cfg: OptimConfig,
    *,
    inits: list[str] | None = None,
    random_baseline: bool = True,
) -> RomResult:
    """Compare fixed transforms with transforms learned from each of them.

    Args:
        x: Snapshot tensor, space by time by parameter.
        k: Basis size.
        cfg: Optimizer settings for the learned transforms.
        inits: Transform specs used as baselines and starting points.
        random_baseline: Add a random orthogonal baseline seeded by ``cfg.seed``.
    """
    n3 = x.shape[2]
    specs = [TransformSpec.parse(s) for s in inits or ["identity", "dct", "data"]]
    obj = LowRankObjective(x, k)

    bases: list[BasisResult] = []
    starts: list[tuple[str, Matrix]] = []
    for spec in specs:
        transform = spec.materialize(n3, data=x)
        bases.append(evaluate_basis(x, transform, k, str(spec)))
        starts.append((str(spec), np.array(transform.matrix)))
    if random_baseline:
        spec = TransformSpec.parse(f"random:{cfg.seed}")
        bases.append(evaluate_basis(x, spec.materialize(n3), k, str(spec)))

    for label, m0 in starts:
        trace = optimize(obj, m0, cfg)
        assert trace.final_m is not None
        bases.append(
            evaluate_basis(x, learned(trace.final_m), k, f"learned[{label}]", trace)
        )

    result = RomResult(k=k, bases=bases)
    logger.info(
        "rom_complete",
        best=result.best_learned.name,
        best_error=result.best_learned.global_error,
    )
    return result
