import logging
import sys
import time
from contextlib import contextmanager
from datetime import datetime
from typing import Dict, Iterator

import numpy as np

# RNG stream ids; every random draw is keyed by (seed, stream, ...).
STREAM_INIT = 0
STREAM_BOUNDARY = 1
STREAM_EDGES = 2
STREAM_DROPOUT = 3
STREAM_PARTITION = 4
STREAM_DATA = 5


def rng_for(seed: int, stream: int, *keys: int) -> np.random.Generator:
    """Independent, reproducible generator for a (seed, stream, keys...) tuple."""
    return np.random.default_rng([seed, stream, *keys])


def debug_print(debug: bool, *args: str) -> None:
    if not debug:
        return
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    message = " ".join(map(str, args))
    print(f"\033[97m[\033[90m{timestamp}\033[97m]\033[90m {message}\033[0m", file=sys.stderr)


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level.upper()),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


class PhaseTimer:
    """Accumulates wall time per named phase, in milliseconds."""

    def __init__(self):
        self.totals: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            self.totals[name] = self.totals.get(name, 0.0) + elapsed

    def get(self, name: str) -> float:
        return self.totals.get(name, 0.0)

    def reset(self) -> None:
        self.totals.clear()
