"""Cost of pooled versus full key/value tokens, and end-to-end throughput."""
from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Sequence

import torch

from .attention import DEFAULT_WINDOWS, MultiHeadCrossAttention, pooled_token_count, pooled_tokens, tokenize
from .config import RunConfig


def attention_multiplies(num_queries: int, num_keys: int, dim: int) -> int:
    """Scalar multiplies of one cross attention: three projections, scores, weighted sum."""
    projections = num_queries * dim * dim * 2 + num_keys * dim * 2 * dim
    return projections + 2 * num_queries * num_keys * dim


def _median_seconds(fn: Callable[[], object], repeats: int) -> float:
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


@dataclass
class AttentionBench:
    source: int
    windows: tuple
    full_tokens: int
    pooled_tokens: int
    full_multiplies: int
    pooled_multiplies: int
    full_seconds: float
    pooled_seconds: float

    @property
    def token_reduction(self) -> float:
        return 100.0 * (1 - self.pooled_tokens / self.full_tokens)

    @property
    def multiply_reduction(self) -> float:
        return 100.0 * (1 - self.pooled_multiplies / self.full_multiplies)


def bench_attention(
    source: int = 32, dim: int = 64, heads: int = 4, windows: Sequence[int] = DEFAULT_WINDOWS, repeats: int = 20
) -> AttentionBench:
    """Global queries over a ``source x source`` key map, pooled vs un-pooled."""
    torch.manual_seed(0)
    attn = MultiHeadCrossAttention(dim, heads)
    query = tokenize(torch.randn(1, dim, source, source))
    feats = torch.randn(1, dim, source, source)
    full_kv = tokenize(feats)
    n_full = source * source
    n_pooled = pooled_token_count(source, source, windows)

    with torch.no_grad():
        full_t = _median_seconds(lambda: attn(query, full_kv, full_kv), repeats)
        pooled_t = _median_seconds(lambda: attn(query, *(2 * [pooled_tokens(feats, windows)])), repeats)
    return AttentionBench(
        source,
        tuple(windows),
        n_full,
        n_pooled,
        attention_multiplies(n_full, n_full, dim),
        attention_multiplies(n_full, n_pooled, dim),
        full_t,
        pooled_t,
    )


def bench_throughput(config: RunConfig, repeats: int = 3) -> float:
    """Inference images per second at ``config.image_size``."""
    from .training import build_model, seed_everything

    seed_everything(config.seed)
    model = build_model(config).eval()
    image = torch.rand(1, 3, config.image_size, config.image_size)
    with torch.no_grad():
        seconds = _median_seconds(lambda: model(image), repeats)
    return 1.0 / seconds


def run_bench(config: RunConfig, repeats: int = 20, echo: Callable[[str], None] | None = None) -> Dict[str, float]:
    ab = bench_attention(dim=config.dim, heads=config.heads, windows=config.windows, repeats=repeats)
    ips = bench_throughput(config)
    result = {k: v for k, v in asdict(ab).items() if k != "windows"}
    result.update(
        token_reduction_pct=ab.token_reduction,
        multiply_reduction_pct=ab.multiply_reduction,
        images_per_second=ips,
    )
    if echo is not None:
        for k, v in result.items():
            echo(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
    return result
