"""Per-forward instrumentation record.

Latency and memory on a deployment runtime are hardware-specific, so the
engine tracks portable proxies instead: how often features are unfolded and
folded back, how many attention GEMMs are launched, how many batch-sized
intermediate buffers get materialized, and the peak number of live scratch
bytes. A fresh ``OpCounters`` is passed explicitly through one forward pass;
nothing is global, so concurrent forwards never share counter state.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class OpCounters:
    """Counts accumulated during a single forward pass.

    ``unfolds``/``folds`` count patch unfold/fold copies. ``gemm_calls``
    counts matrix multiplies on the attention path (QKV projection, score
    and value products); convolutions and the attention output projection
    are not GEMM-counted. ``intermediate_tensors_materialized`` counts
    batch-shaped buffers allocated between the QKV projection and the
    output write. ``peak_scratch_bytes`` is the high-water mark of live
    scratch bytes; ops that allocate transient buffers release them on
    return, so the peak reflects a single layer's working set.
    """

    unfolds: int = 0
    folds: int = 0
    gemm_calls: int = 0
    peak_scratch_bytes: int = 0
    intermediate_tensors_materialized: int = 0
    _live_scratch_bytes: int = field(default=0, repr=False)

    def count_unfold(self) -> None:
        self.unfolds += 1

    def count_fold(self) -> None:
        self.folds += 1

    def count_gemm(self, n: int = 1) -> None:
        self.gemm_calls += n

    def count_intermediates(self, n: int) -> None:
        self.intermediate_tensors_materialized += n

    def scratch_alloc(self, nbytes: int) -> None:
        self._live_scratch_bytes += nbytes
        if self._live_scratch_bytes > self.peak_scratch_bytes:
            self.peak_scratch_bytes = self._live_scratch_bytes

    def scratch_release(self, nbytes: int) -> None:
        self._live_scratch_bytes -= nbytes

    def summary_lines(self, prefix: str = "counter") -> list[str]:
        """Machine-readable ``key = value`` lines for reports."""
        return [
            f"{prefix}.unfolds = {self.unfolds}",
            f"{prefix}.folds = {self.folds}",
            f"{prefix}.gemm_calls = {self.gemm_calls}",
            f"{prefix}.intermediate_tensors_materialized = {self.intermediate_tensors_materialized}",
            f"{prefix}.peak_scratch_bytes = {self.peak_scratch_bytes}",
        ]
