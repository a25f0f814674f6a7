"""Experiment reports with deterministic JSON serialization.

Reports round-trip through JSON losslessly (floats use shortest-roundtrip
repr) and are byte-identical for identical seeds and chunk sizes regardless
of worker count. Wall-clock timing therefore never enters the JSON; the CLI
prints it on stderr instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundReport


def to_jsonable(obj):
    """Recursively convert numpy containers/scalars to plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, BoundReport):
        return to_jsonable(obj.to_jsonable())
    return obj


def stable_json(payload: dict) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n"


@dataclass
class ExperimentReport:
    """Everything one experiment run certifies, in serializable form."""

    experiment: str
    config: dict
    lam: np.ndarray
    sigma: np.ndarray
    sigma_isqrt_max_norm: float
    sigma_isqrt_spectral_norm: float
    bound: BoundReport
    gap: float
    gap_stderr: float
    passed: bool
    seed: int
    samples: int
    chunk_size: int
    extras: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        payload = {
            "experiment": self.experiment,
            "config": self.config,
            "lambda": self.lam,
            "sigma": self.sigma,
            "sigma_isqrt_max_norm": self.sigma_isqrt_max_norm,
            "sigma_isqrt_spectral_norm": self.sigma_isqrt_spectral_norm,
            "bound": self.bound,
            "gap": self.gap,
            "gap_stderr": self.gap_stderr,
            "pass": self.passed,
            "seed": self.seed,
            "samples": self.samples,
            "chunk_size": self.chunk_size,
        }
        payload.update(self.extras)
        return to_jsonable(payload)

    def to_json(self) -> str:
        return stable_json(self.to_jsonable())

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "BOUND VIOLATED"
        return (
            f"{self.experiment}: bound={self.bound.total:.6g} "
            f"gap={self.gap:.6g} (stderr {self.gap_stderr:.2g}) "
            f"[{verdict}]"
        )
