"""L0-constrained least squares: one best model per support size."""

import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from ubic.core.logger import get_logger
from ubic.utils.exceptions import FieldFormatException, SubsetBudgetException, SubsetException
from ubic.utils.helpers import chunk_list, parallel_map, read_json_file, write_json_file

from .weaklib import WeakLibrary

logger = get_logger(__name__)

DEFAULT_BUDGET = 1_000_000
SOLVERS = ("exhaustive", "frols", "refine")

# Relative squared norm below which an orthogonalized column counts as degenerate
DEGENERATE_TOL = 1e-12


@dataclass
class SubsetModel:
    """Best model of one support size; ``coefficients`` align with ``support``."""

    support: List[int]
    coefficients: np.ndarray
    sse: float
    rank_deficient: bool = False

    def __post_init__(self):
        self.support = [int(i) for i in self.support]
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.support != sorted(set(self.support)):
            raise SubsetException("support must be sorted and free of duplicates")
        if self.coefficients.shape != (len(self.support),):
            raise SubsetException("one coefficient per support index is required")

    @property
    def support_size(self) -> int:
        return len(self.support)

    def full_coefficients(self, n_q: int) -> np.ndarray:
        """Dense length-``n_q`` coefficient vector, zero off the support."""
        dense = np.zeros(n_q)
        dense[self.support] = self.coefficients
        return dense

    def to_dict(self, labels: Optional[Sequence[str]] = None) -> Dict[str, Any]:
        data = {
            "support_size": self.support_size,
            "support": list(self.support),
            "coefficients": self.coefficients.tolist(),
            "sse": self.sse,
            "rank_deficient": self.rank_deficient,
        }
        if labels is not None:
            data["terms"] = [labels[i] for i in self.support]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SubsetModel":
        return cls(
            support=data["support"],
            coefficients=np.asarray(data["coefficients"], dtype=np.float64),
            sse=float(data["sse"]),
            rank_deficient=bool(data.get("rank_deficient", False)),
        )


@dataclass
class SubsetSweep:
    """Models for an increasing sequence of support sizes."""

    models: List[SubsetModel]
    solver: str
    n_candidates: int
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.models:
            raise SubsetException("a sweep needs at least one model")
        sizes = self.support_sizes
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise SubsetException(f"support sizes must increase strictly, got {sizes}")
        if any(i >= self.n_candidates for m in self.models for i in m.support):
            raise SubsetException("support index outside the library")

    @property
    def support_sizes(self) -> List[int]:
        return [m.support_size for m in self.models]

    @property
    def sse(self) -> np.ndarray:
        return np.array([m.sse for m in self.models])

    def model_for_size(self, s: int) -> SubsetModel:
        for model in self.models:
            if model.support_size == s:
                return model
        raise SubsetException(f"no model of support size {s} in the sweep")

    def check_library(self, library: WeakLibrary) -> None:
        if library.n_candidates != self.n_candidates:
            raise SubsetException(
                f"sweep was fitted on {self.n_candidates} candidates, library has {library.n_candidates}"
            )

    def to_dict(self) -> Dict[str, Any]:
        labels = self.labels or None
        return {
            "solver": self.solver,
            "n_q": self.n_candidates,
            "labels": list(self.labels),
            "models": [m.to_dict(labels) for m in self.models],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SubsetSweep":
        return cls(
            models=[SubsetModel.from_dict(m) for m in data["models"]],
            solver=data["solver"],
            n_candidates=int(data["n_q"]),
            labels=list(data.get("labels", [])),
        )


def least_squares(phi: np.ndarray, q0: np.ndarray, support: Sequence[int]) -> Tuple[np.ndarray, float, bool]:
    """OLS on ``phi[:, support]``: coefficients, SSE and a rank-deficiency flag.

    Rank-deficient subsets get the minimum-norm solution.
    """
    sub = phi[:, list(support)]
    coefficients, _, rank, _ = np.linalg.lstsq(sub, q0, rcond=None)
    residual = q0 - sub @ coefficients
    return coefficients, float(residual @ residual), bool(rank < sub.shape[1])


def _check_budget(n_q: int, s: int, budget: int) -> int:
    total = math.comb(n_q, s)
    if total > budget:
        raise SubsetBudgetException(
            f"exhaustive search over C({n_q}, {s}) = {total} subsets exceeds the budget of {budget}; "
            f"use the frols or refine solver"
        )
    return total


def _best_subset(
    phi: np.ndarray,
    q0: np.ndarray,
    s: int,
    budget: int,
    threads: int,
) -> SubsetModel:
    n_q = phi.shape[1]
    if not 1 <= s <= n_q:
        raise SubsetException(f"support size {s} outside 1..{n_q}")
    total = _check_budget(n_q, s, budget)
    candidates = list(combinations(range(n_q), s))

    def best_in(chunk) -> Optional[Tuple[Tuple[bool, float], SubsetModel]]:
        best = None
        for support in chunk:
            coefficients, sse, deficient = least_squares(phi, q0, support)
            # full-rank subsets beat rank-deficient ones; strict < keeps the lexicographic first
            key = (deficient, sse)
            if best is None or key < best[0]:
                best = (key, SubsetModel(list(support), coefficients, sse, deficient))
        return best

    chunk_size = max(1, math.ceil(total / (4 * threads)))
    partial = parallel_map(best_in, chunk_list(candidates, chunk_size), threads)

    best = None
    for item in partial:
        if item is not None and (best is None or item[0] < best[0]):
            best = item
    model = best[1]
    if model.rank_deficient:
        logger.warning(f"every subset of size {s} is rank deficient; using the minimum-norm fit")
    return model


def exhaustive(
    library: WeakLibrary,
    s: int,
    budget: int = DEFAULT_BUDGET,
    threads: int = 1,
) -> SubsetModel:
    """Globally SSE-minimal support of size ``s`` and its OLS coefficients.

    Ties are broken by the lexicographically smallest support.
    """
    return _best_subset(library.phi, library.q0, s, budget, threads)


def _frols_order(phi: np.ndarray, q0: np.ndarray, max_s: int) -> List[int]:
    """Selection order of forward regression with orthogonal least squares."""
    n_q = phi.shape[1]
    qq = float(q0 @ q0)
    selected: List[int] = []
    basis: List[np.ndarray] = []
    for _ in range(max_s):
        best_j, best_err, best_w = None, -1.0, None
        for j in range(n_q):
            if j in selected:
                continue
            column = phi[:, j]
            norm0 = float(column @ column)
            if norm0 == 0.0:
                continue
            w = column.copy()
            for b in basis:
                w -= (b @ column) / (b @ b) * b
            norm = float(w @ w)
            if norm <= DEGENERATE_TOL * norm0:
                continue
            err = (w @ q0) ** 2 / (norm * qq) if qq > 0 else 0.0
            if err > best_err:
                best_j, best_err, best_w = j, err, w
        if best_j is None:
            logger.warning(f"FROLS stopped after {len(selected)} terms: remaining columns are degenerate")
            break
        selected.append(best_j)
        basis.append(best_w)
        logger.debug(f"FROLS step {len(selected)}: column {best_j}, ERR={best_err:.4g}")
    return selected


def frols(library: WeakLibrary, max_s: int) -> SubsetSweep:
    """Greedy forward selection by error-reduction ratio, OLS refit on each prefix."""
    n_q = library.n_candidates
    if not 1 <= max_s <= n_q:
        raise SubsetException(f"max support {max_s} outside 1..{n_q}")
    order = _frols_order(library.phi, library.q0, max_s)
    if not order:
        raise SubsetException("FROLS found no usable column")
    models = []
    for size in range(1, len(order) + 1):
        support = sorted(order[:size])
        coefficients, sse, deficient = least_squares(library.phi, library.q0, support)
        models.append(SubsetModel(support, coefficients, sse, deficient))
    return SubsetSweep(models, "frols", n_q, library.labels)


def sweep(
    library: WeakLibrary,
    max_s: Optional[int] = None,
    solver: str = "exhaustive",
    budget: int = DEFAULT_BUDGET,
    threads: int = 1,
    progress: bool = False,
) -> SubsetSweep:
    """Best models for ``s = 1 .. max_s`` with the chosen solver.

    ``refine`` runs exhaustive search restricted to the union of the FROLS
    prefix members and maps the supports back to library columns.
    """
    n_q = library.n_candidates
    max_s = n_q if max_s is None else max_s
    if solver not in SOLVERS:
        raise SubsetException(f"unknown solver '{solver}', expected one of {SOLVERS}")
    if not 1 <= max_s <= n_q:
        raise SubsetException(f"max support {max_s} outside 1..{n_q}")

    if solver == "frols":
        result = frols(library, max_s)
    else:
        if solver == "refine":
            pool = sorted(frols(library, max_s).models[-1].support)
            logger.info(f"refine pool: {[library.labels[i] for i in pool]}")
        else:
            pool = list(range(n_q))
        phi = library.phi[:, pool]
        sizes = range(1, min(max_s, len(pool)) + 1)
        for s in sizes:
            _check_budget(len(pool), s, budget)
        models = []
        for s in tqdm(sizes, desc=f"{solver} search", disable=not progress):
            local = _best_subset(phi, library.q0, s, budget, threads)
            models.append(
                SubsetModel([pool[i] for i in local.support], local.coefficients, local.sse, local.rank_deficient)
            )
        result = SubsetSweep(models, solver, n_q, library.labels)

    for model in result.models:
        logger.debug(
            f"s={model.support_size}: {[library.labels[i] for i in model.support]} sse={model.sse:.6g}"
        )
    logger.info(f"{solver} sweep: {len(result.models)} models, N_q={n_q}")
    return result


def write_sweep(result: SubsetSweep, path: Union[str, Path]) -> Path:
    return write_json_file(path, result.to_dict())


def read_sweep(path: Union[str, Path]) -> SubsetSweep:
    try:
        return SubsetSweep.from_dict(read_json_file(path))
    except (KeyError, TypeError, ValueError) as e:
        raise FieldFormatException(f"{path}: malformed sweep file: {e}") from e
