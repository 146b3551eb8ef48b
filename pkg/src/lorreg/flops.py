"""Closed-form per-evaluation flop and memory model for the cubic
B-spline evaluation kernels (N sample points, M histogram bins)."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class FlopModel:
    """Flop totals per objective evaluation."""

    n_samples: int
    bins: int

    def ssd(self) -> float:
        return 1134.0 * self.n_samples

    def pw_nmi(self) -> float:
        return 1331.0 * self.n_samples + 9.0 * self.bins ** 2 + 6.0 * self.bins

    def pnorm(self) -> float:
        return 1379.0 * self.n_samples

    def gpv_nmi(self) -> float:
        return 1383.0 * self.n_samples + 9.0 * self.bins ** 2 + 6.0 * self.bins

    def ratio_to_ssd(self, which: str) -> float:
        return {"ssd": self.ssd, "pw_nmi": self.pw_nmi,
                "pnorm": self.pnorm, "gpv_nmi": self.gpv_nmi}[which]() / self.ssd()

    def memory_bytes(self, which: str) -> int:
        """Working-set bytes at 64-bit precision: GPV trades memory for its
        single-pass histogram updates."""
        doubles_per_sample = {"ssd": 8, "pw_nmi": 8, "pnorm": 8, "gpv_nmi": 192}
        return doubles_per_sample[which] * self.n_samples * 8
