"""Helper Utilities for the UBIC PDE discovery package"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Sequence, TypeVar, Union

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Fixed spawn keys of the root seed, one per random stage.
SEED_STAGES = {"noise": 0, "dictionary": 1, "subdomains": 2}

PRNG_NAME = "PCG64"


# File and Path Utilities
def ensure_directory(path: Union[str, Path]) -> Path:
    """Ensure a directory exists, create if it doesn't."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_json_file(file_path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON file."""
    with open(file_path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_json_file(file_path: Union[str, Path], data: Dict[str, Any], indent: int = 2) -> Path:
    """Write data to a JSON file with a stable layout (same data, same bytes)."""
    file_path = Path(file_path)
    ensure_directory(file_path.parent)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=indent, ensure_ascii=False, allow_nan=True)
        f.write("\n")
    return file_path


# Randomness
def derive_seed(root_seed: int, stage: str) -> np.random.SeedSequence:
    """Sub-seed of ``root_seed`` for one random stage (noise, dictionary, subdomains)."""
    if stage not in SEED_STAGES:
        raise KeyError(f"Unknown seed stage '{stage}', expected one of {sorted(SEED_STAGES)}")
    return np.random.SeedSequence(root_seed, spawn_key=(SEED_STAGES[stage],))


def stage_seed(root_seed: int, stage: str) -> int:
    """64-bit integer seed for one stage, drawn from its seed sequence."""
    return int(derive_seed(root_seed, stage).generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: Union[int, np.random.SeedSequence]) -> np.random.Generator:
    """Create the package's generator (PCG64) from an integer or a seed sequence."""
    return np.random.Generator(np.random.PCG64(seed))


# Time Utilities
def format_duration(seconds: float) -> str:
    """Format duration in seconds to human readable format."""
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes, secs = divmod(seconds, 60)
    return f"{int(minutes)}m {secs:.0f}s"


class Timer:
    """Context manager for timing operations."""

    def __init__(self, name: str = "Operation"):
        self.name = name
        self.start_time = None
        self.end_time = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.end_time = time.perf_counter()

    @property
    def elapsed(self) -> float:
        """Get elapsed time in seconds."""
        if self.start_time is not None and self.end_time is not None:
            return self.end_time - self.start_time
        return 0.0

    def __str__(self) -> str:
        return f"{self.name}: {format_duration(self.elapsed)}"


# Threading Utilities
def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Map ``func`` over ``items`` on a thread pool; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def chunk_list(lst: Sequence[T], chunk_size: int) -> List[Sequence[T]]:
    """Split a list into chunks of specified size."""
    return [lst[i:i + chunk_size] for i in range(0, len(lst), chunk_size)]


# Parsing Utilities
def parse_range(text: str) -> np.ndarray:
    """Parse ``start:stop:count`` into evenly spaced values (both ends included)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"Expected 'start:stop:count', got '{text}'")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ValueError("count must be positive")
    return np.linspace(start, stop, count)


def parse_int_range(text: str) -> List[int]:
    """Parse ``start:stop:step`` into integers with ``stop`` included."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"Expected 'start:stop:step', got '{text}'")
    start, stop, step = (int(p) for p in parts)
    if step <= 0:
        raise ValueError("step must be positive")
    return list(range(start, stop + 1, step))
