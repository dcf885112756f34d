"""Observation-noise reduction before library construction.

Three denoisers are provided:

- regularized K-SVD: dictionary learning on a zero-mean stack of overlapping
  flattened patches with orthogonal matching pursuit (OMP) for sparse coding. The
  dictionary update minimises ``||S - DA||_F^2 + rho ||A||_F^2`` atom by atom
  through a rank-1 SVD of the restricted residual, damping the code row by
  ``1 / (1 + rho)``.
- 2D Savitzky-Golay: tensor-product least-squares polynomial smoothing.
- truncated SVD: best rank-r reconstruction (Eckart-Young).
"""

from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import linalg
from scipy.signal import savgol_filter
from tqdm import tqdm

from ubic.core.logger import get_logger
from ubic.utils.exceptions import DenoiseException
from ubic.utils.helpers import make_rng

from .grid import Axis, Field

logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# Patch stacks
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PatchStack:
    """Zero-mean flattened patches, one per column (``p*p`` rows)."""

    patch_size: int
    data: np.ndarray
    patch_origins: List[Tuple[int, int]]
    removed_mean: float
    field_shape: Tuple[int, int]

    @property
    def n_signals(self) -> int:
        return self.data.shape[1]


def _tile_starts(n: int, p: int, stride: Optional[int] = None) -> List[int]:
    """Starts every ``stride`` points (default ``p``); a remainder gets one patch flush with the end."""
    starts = list(range(0, n - p + 1, p if stride is None else stride))
    if starts[-1] + p < n:
        starts.append(n - p)
    return starts


def to_patches(field: Field, p: int, stride: Optional[int] = None) -> PatchStack:
    """Stack flattened ``p x p`` patches of the mean-removed field as columns.

    Without ``stride`` the patches tile the field; with ``1 <= stride < p``
    neighbouring patches overlap. Either way every grid point is covered.
    """
    nx, nt = field.shape
    if p < 1 or p > min(nx, nt):
        raise DenoiseException(f"patch size {p} must lie in [1, min({nx}, {nt})]")
    if stride is not None and not 1 <= stride <= p:
        raise DenoiseException(f"patch stride {stride} must lie in [1, {p}]")
    mean = float(field.values.mean())
    centered = field.values - mean
    xs, ts = _tile_starts(nx, p, stride), _tile_starts(nt, p, stride)
    windows = np.lib.stride_tricks.sliding_window_view(centered, (p, p))[np.ix_(xs, ts)]
    data = windows.reshape(len(xs) * len(ts), p * p).T.copy()
    origins = [(i, j) for i in xs for j in ts]
    return PatchStack(p, data, origins, mean, (nx, nt))


def from_patches(stack: PatchStack, axes: Tuple[Axis, Axis]) -> Field:
    """Reassemble a field from a stack; overlapped pixels are averaged."""
    p = stack.patch_size
    total = np.zeros(stack.field_shape)
    counts = np.zeros(stack.field_shape)
    for col, (i, j) in enumerate(stack.patch_origins):
        total[i:i + p, j:j + p] += stack.data[:, col].reshape(p, p)
        counts[i:i + p, j:j + p] += 1.0
    return Field(axes[0], axes[1], total / counts + stack.removed_mean)


# ---------------------------------------------------------------------------
# Orthogonal matching pursuit
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SparseCode:
    """OMP result: code matrix (atoms x signals) and rank-deficiency flag."""

    code: np.ndarray
    rank_deficient: bool = False


OMP_CHUNK = 128


def _solve_supports(gram_s: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Batched normal equations; singular systems fall back to the pseudo-inverse."""
    try:
        values = np.linalg.solve(gram_s, rhs[..., None])[..., 0]
        if np.all(np.isfinite(values)):
            return values, False
    except np.linalg.LinAlgError:
        pass
    return np.einsum("aij,aj->ai", np.linalg.pinv(gram_s, hermitian=True), rhs), True


def _omp_chunk(atoms: np.ndarray, gram: np.ndarray, signals: np.ndarray, sparsity: int) -> Tuple[np.ndarray, bool]:
    n_atoms, m = atoms.shape[1], signals.shape[1]
    corr0 = atoms.T @ signals
    energy = np.sum(signals ** 2, axis=0)
    tol = 1e-14 * np.maximum(energy, 1.0)
    residual_corr = corr0.copy()
    residual_energy = energy.copy()
    support = np.full((m, sparsity), -1, dtype=np.int64)
    values = np.zeros((m, sparsity))
    active = np.ones(m, dtype=bool)
    flagged = False
    for k in range(sparsity):
        active &= residual_energy > tol
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        score = np.abs(residual_corr[:, idx])
        if k:
            score[support[idx, :k].T, np.arange(idx.size)] = -1.0
        support[idx, k] = np.argmax(score, axis=0)
        chosen = support[idx, :k + 1]
        rhs = corr0[chosen, idx[:, None]]
        x, deficient = _solve_supports(gram[chosen[:, :, None], chosen[:, None, :]], rhs)
        flagged |= deficient
        values[idx, :k + 1] = x
        # gram is symmetric, so gram[chosen] holds the columns of the chosen atoms
        residual_corr[:, idx] = corr0[:, idx] - np.matmul(x[:, None, :], gram[chosen])[:, 0, :].T
        residual_energy[idx] = energy[idx] - np.sum(x * rhs, axis=1)

    code = np.zeros((n_atoms, m))
    used = support >= 0
    columns = np.broadcast_to(np.arange(m)[:, None], support.shape)
    code[support[used], columns[used]] = values[used]
    return code, flagged


def omp(atoms: np.ndarray, signals: np.ndarray, sparsity: int) -> SparseCode:
    """Greedy sparse coding of each signal column with at most ``sparsity`` atoms.

    Atoms are picked by maximum absolute correlation with the current
    residual; the coefficients on the chosen support are the least-squares fit
    (minimum-norm when the chosen atoms are linearly dependent, which is
    flagged). Signals are coded in blocks of ``OMP_CHUNK`` columns through the
    atom Gram matrix; a signal stops early once its residual is at rounding level.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    signals = np.asarray(signals, dtype=np.float64)
    single = signals.ndim == 1
    if single:
        signals = signals[:, None]
    if sparsity < 1 or sparsity > atoms.shape[1]:
        raise DenoiseException(f"sparsity {sparsity} must lie in [1, {atoms.shape[1]}]")
    gram = atoms.T @ atoms
    code = np.zeros((atoms.shape[1], signals.shape[1]))
    flagged = False
    for start in range(0, signals.shape[1], OMP_CHUNK):
        block = slice(start, start + OMP_CHUNK)
        code[:, block], deficient = _omp_chunk(atoms, gram, signals[:, block], sparsity)
        flagged |= deficient
    if flagged:
        logger.warning("OMP hit a rank-deficient support; used minimum-norm coefficients")
    return SparseCode(code[:, 0] if single else code, flagged)


# ---------------------------------------------------------------------------
# Regularized K-SVD
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Dictionary:
    """Unit-norm atoms (``p*p x c``) and their sparse code (``c x f``)."""

    atoms: np.ndarray
    code: np.ndarray
    objective_history: List[float] = dataclass_field(default_factory=list)
    reseeded_atoms: int = 0


def ksvd_objective(signals: np.ndarray, atoms: np.ndarray, code: np.ndarray, rho: float) -> float:
    """``||S - DA||_F^2 + rho ||A||_F^2``."""
    residual = signals - atoms @ code
    return float(np.sum(residual ** 2) + rho * np.sum(code ** 2))


def _column_objective(signals, atoms, code, rho) -> np.ndarray:
    residual = signals - atoms @ code
    return np.sum(residual ** 2, axis=0) + rho * np.sum(code ** 2, axis=0)


def learn_dictionary(
    signals: np.ndarray,
    n_atoms: int,
    rho: float,
    train_sparsity: int = 1,
    iterations: int = 30,
    seed: Union[int, np.random.SeedSequence] = 0,
    progress: bool = False,
) -> Dictionary:
    """Alternate OMP coding and regularized per-atom updates for a fixed budget."""
    if rho < 0:
        raise DenoiseException("rho must be non-negative")
    if n_atoms < 1 or train_sparsity < 1 or iterations < 0:
        raise DenoiseException("atoms, train_sparsity must be positive and iterations non-negative")
    dim, n_signals = signals.shape
    limit = max(1, n_signals // 2)
    if n_atoms > limit:
        logger.warning(f"capping dictionary size {n_atoms} at half the number of signals ({limit})")
        n_atoms = limit
    train_sparsity = min(train_sparsity, n_atoms)

    rng = make_rng(seed)
    chosen = np.sort(rng.choice(n_signals, size=n_atoms, replace=False))
    atoms = signals[:, chosen].copy()
    norms = np.linalg.norm(atoms, axis=0)
    for j in np.flatnonzero(norms <= 1e-12):
        atoms[:, j] = rng.standard_normal(dim)
    atoms /= np.linalg.norm(atoms, axis=0)

    code = np.zeros((n_atoms, n_signals))
    history: List[float] = []
    reseeded = 0
    for it in tqdm(range(iterations), desc="K-SVD", disable=not progress):
        # Sparse coding; a column keeps its previous code if that scores better.
        candidate = omp(atoms, signals, train_sparsity).code
        if it > 0:
            keep = _column_objective(signals, atoms, code, rho) < _column_objective(signals, atoms, candidate, rho)
            candidate[:, keep] = code[:, keep]
        code = candidate

        # Atom-by-atom update on the signals that use each atom.
        residual = signals - atoms @ code
        for j in range(n_atoms):
            users = np.flatnonzero(code[j])
            if users.size == 0:
                # Unused atom: re-seed from the worst-represented signal (DA is unchanged).
                worst = int(np.argmax(np.sum(residual ** 2, axis=0)))
                replacement = residual[:, worst]
                norm = np.linalg.norm(replacement)
                if norm > 1e-12:
                    atoms[:, j] = replacement / norm
                    reseeded += 1
                continue
            restricted = residual[:, users] + np.outer(atoms[:, j], code[j, users])
            u, s, vt = linalg.svd(restricted, full_matrices=False)
            atoms[:, j] = u[:, 0]
            code[j, users] = s[0] * vt[0] / (1.0 + rho)
            residual[:, users] = restricted - np.outer(atoms[:, j], code[j, users])

        history.append(ksvd_objective(signals, atoms, code, rho))
        logger.debug(f"K-SVD iteration {it + 1}/{iterations}: objective {history[-1]:.6g}")

    return Dictionary(atoms, code, history, reseeded)


def default_stride(p: int) -> int:
    """Patch stride used for K-SVD: every point for small patches, coarser for large ones."""
    return max(1, p // 6)


def rksvd_denoise(
    field: Field,
    p: int = 8,
    atoms: Optional[int] = None,
    rho: float = 0.05,
    train_sparsity: int = 1,
    iterations: int = 30,
    seed: Union[int, np.random.SeedSequence] = 0,
    progress: bool = False,
    stride: Optional[int] = None,
) -> Field:
    """Denoise ``field`` with regularized K-SVD on its overlapping ``p x p`` patches.

    Patches start every ``stride`` points on both axes (``default_stride(p)``
    when omitted), so the dictionary trains on many more signals than atoms and
    each grid point is rebuilt as the average of all patches covering it. The
    dictionary size defaults to ``2 p^2`` atoms, at most one per ten patches.
    After training, every patch is re-encoded with sparsity ``floor(p^2 / 10)``
    (at least 1) and the field is rebuilt from ``D A``.
    """
    stack = to_patches(field, p, default_stride(p) if stride is None else stride)
    n_atoms = max(1, min(2 * p * p, stack.n_signals // 10)) if atoms is None else atoms
    dictionary = learn_dictionary(stack.data, n_atoms, rho, train_sparsity, iterations, seed, progress)
    sparsity = min(max(p * p // 10, 1), dictionary.atoms.shape[1])
    code = omp(dictionary.atoms, stack.data, sparsity).code
    stack.data = dictionary.atoms @ code
    logger.info(
        f"K-SVD denoise: p={p}, atoms={dictionary.atoms.shape[1]}, signals={code.shape[1]}, "
        f"rho={rho}, final sparsity={sparsity}"
    )
    return from_patches(stack, (field.x_axis, field.t_axis))


# ---------------------------------------------------------------------------
# Savitzky-Golay
# ---------------------------------------------------------------------------

def _as_pair(value: Union[int, Sequence[int]]) -> Tuple[int, int]:
    if isinstance(value, (int, np.integer)):
        return int(value), int(value)
    first, second = value
    return int(first), int(second)


class SavgolSpec(BaseModel):
    """Window length and polynomial order per axis (x, t)."""

    model_config = ConfigDict(frozen=True)

    window: Tuple[int, int] = (11, 11)
    polyorder: Tuple[int, int] = (2, 2)

    @classmethod
    def square(cls, window: int, polyorder: int = 2) -> "SavgolSpec":
        return cls(window=(window, window), polyorder=(polyorder, polyorder))

    @model_validator(mode="before")
    @classmethod
    def expand_scalars(cls, data: Any):
        if isinstance(data, dict):
            data = dict(data)
            for key in ("window", "polyorder"):
                if key in data:
                    data[key] = _as_pair(data[key])
        return data

    @model_validator(mode="after")
    def validate_orders(self):
        for window, order in zip(self.window, self.polyorder):
            if window < 3 or window % 2 == 0:
                raise ValueError("window must be an odd integer >= 3 on each axis")
            if order < 0 or order >= window:
                raise ValueError("polyorder must satisfy 0 <= polyorder < window on each axis")
        return self


def savgol_smooth(values: np.ndarray, spec: SavgolSpec) -> np.ndarray:
    """Tensor-product Savitzky-Golay smoothing of a 2D array.

    The bivariate least-squares fit over a rectangular window with basis
    ``x^a t^b`` (``a <= px``, ``b <= pt``) separates into one 1D filter per
    axis. Near edges the window is shifted inward (``mode="interp"``), so
    polynomials up to the order are reproduced everywhere.
    """
    values = np.asarray(values, dtype=np.float64)
    for axis in (0, 1):
        if spec.window[axis] > values.shape[axis]:
            raise DenoiseException(
                f"window {spec.window[axis]} does not fit axis {axis} of length {values.shape[axis]}"
            )
    out = savgol_filter(values, spec.window[0], spec.polyorder[0], axis=0, mode="interp")
    return savgol_filter(out, spec.window[1], spec.polyorder[1], axis=1, mode="interp")


def savgol2d(field: Field, spec: SavgolSpec) -> Field:
    """2D Savitzky-Golay smoothing of a field."""
    return field.with_values(savgol_smooth(field.values, spec))


# ---------------------------------------------------------------------------
# Truncated SVD
# ---------------------------------------------------------------------------

def svd_truncate(matrix: np.ndarray, rank: int) -> np.ndarray:
    """Best rank-``rank`` approximation in Frobenius norm."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not 1 <= rank <= min(matrix.shape):
        raise DenoiseException(f"rank {rank} must lie in [1, {min(matrix.shape)}]")
    u, s, vt = linalg.svd(matrix, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]


def svd_denoise(field: Field, rank: int) -> Field:
    """Truncated-SVD reconstruction of the field matrix."""
    return field.with_values(svd_truncate(field.values, rank))


def denoise(field: Field, method: str, **params: Any) -> Field:
    """Dispatch to ``rksvd``, ``savgol``, ``svd`` or ``none``."""
    method = method.lower()
    if method == "rksvd":
        return rksvd_denoise(field, **params)
    if method == "savgol":
        return savgol2d(field, SavgolSpec(**params))
    if method == "svd":
        return svd_denoise(field, **params)
    if method == "none":
        return field
    raise DenoiseException(f"unknown denoising method '{method}'")
