"""Task-collection families: random, near-full-rank, and adversarial.

Random families (isotropic, anisotropic, rank d-1) draw from a PCG64
generator seeded explicitly, so identical (generator, parameters, seed)
produce bit-identical matrices.  The two adversarial families are
deterministic constructions on which single-pass greedy orderings keep a
constant-order loss:

* a 3-D family of 4K-1 tasks built from four nearly-aligned solution
  subspaces, and
* a high-dimensional family of T = d-1 tasks of decreasing rank driven by
  the scalar recursion x_t = (x_{t-1} + sqrt(x_{t-1}^2 - 4 beta_t)) / 2.

The module also provides the closed-form reference curve for that recursion
and the Delta_{t,k} diagnostic certifying that the construction's iterates
follow the greedy selection rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .core import Task, TaskCollection

__all__ = [
    "Adversarial3DSpec",
    "AdversarialHighDimSpec",
    "gen_isotropic",
    "gen_anisotropic",
    "gen_rank_dminus1",
    "gen_adversarial_3d",
    "gen_adversarial_highdim",
    "orth_complement_rows",
    "highdim_beta",
    "highdim_x_sequence",
    "xk_tilde",
    "delta_tk",
    "delta_min",
    "save_collection",
    "load_collection",
]


def _rng(seed: int) -> np.random.Generator:
    # PCG64 throughout; normal variates via numpy's ziggurat standard_normal.
    return np.random.Generator(np.random.PCG64(seed))


def orth_complement_rows(W: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal rows spanning the orthogonal complement of rowspace(W).

    Full QR of W.T: the first rank(W) columns of Q span the rows of W, the
    trailing columns their complement.  Any orthonormal basis of the
    complement is equivalent here (only the induced projector matters), so
    callers should compare projectors, not raw matrices.
    """
    W = np.asarray(W, dtype=float)
    d = W.shape[1]
    Q, _ = np.linalg.qr(W.T, mode="complete")  # Q is d x d
    rank = np.linalg.matrix_rank(W, tol=rtol)
    return Q[:, rank:].T.copy()  # (d - rank, d)


# ---------------------------------------------------------------------------
# Random families
# ---------------------------------------------------------------------------


def _finalize_random_blocks(blocks: list, rng: np.random.Generator):
    """Shared tail of the random generators: radius normalization + teacher."""
    max_rad = max(np.linalg.norm(B, 2) for B in blocks)
    blocks = [B / max_rad for B in blocks]
    d = blocks[0].shape[1]
    w_true = rng.standard_normal(d)
    w_true /= np.linalg.norm(w_true)
    tasks = [Task(features=B, targets=B @ w_true) for B in blocks]
    return tasks, w_true


def gen_isotropic(d: int, r: int, T: int, seed: int) -> TaskCollection:
    """T tasks of shape (r, d) with i.i.d. standard normal entries.

    All blocks are rescaled by the maximum spectral norm across blocks, so
    the collection radius is exactly 1.  Targets come from a unit-norm
    teacher, making the collection realizable by construction.
    """
    if not (1 <= r <= d):
        raise ValueError("need 1 <= r <= d")
    if T < 1:
        raise ValueError("need T >= 1")
    rng = _rng(seed)
    blocks = [rng.standard_normal((r, d)) for _ in range(T)]
    tasks, w_true = _finalize_random_blocks(blocks, rng)
    return TaskCollection.build(tasks, teacher=w_true)


def gen_anisotropic(d: int, r: int, T: int, seed: int) -> TaskCollection:
    """Highly correlated tasks via a shared ill-conditioned covariance.

    Sigma = U Lambda U^T with U from the SVD of a symmetrized Gaussian and a
    log-uniform spectrum from 1e-3 to 1e3; each X_m = Z_m Sigma^{1/2} with
    Z_m i.i.d. normal.  Tasks concentrate on the dominant eigendirections,
    so pairwise similarity is much higher than in the isotropic family.
    """
    if not (1 <= r <= d):
        raise ValueError("need 1 <= r <= d")
    if T < 1:
        raise ValueError("need T >= 1")
    lam_lo, lam_hi = 1e-3, 1e3
    rng = _rng(seed)
    A = rng.standard_normal((d, d))
    A_sym = 0.5 * (A + A.T)
    U, _, _ = np.linalg.svd(A_sym)
    if d > 1:
        # lam_lo^(1-u) * lam_hi^u == lam_lo * exp(ln(lam_hi/lam_lo) u),
        # written so both endpoints are exact in floating point.
        u = np.arange(d) / (d - 1)
        spectrum = lam_lo ** (1.0 - u) * lam_hi**u
    else:
        spectrum = np.array([lam_lo])
    sqrt_sigma = (U * np.sqrt(spectrum)) @ U.T
    blocks = [rng.standard_normal((r, d)) @ sqrt_sigma for _ in range(T)]
    tasks, w_true = _finalize_random_blocks(blocks, rng)
    return TaskCollection.build(
        tasks, teacher=w_true, spectrum=spectrum, sqrt_sigma=sqrt_sigma
    )


def gen_rank_dminus1(d: int, T: int, seed: int) -> TaskCollection:
    """Tasks of rank d-1 whose solution spaces are random lines.

    Each task's solution subspace is spanned by a unit vector v_m drawn
    uniformly on the sphere; X_m has d-1 orthonormal rows spanning the
    complement, so the solution projector is the rank-1 matrix v_m v_m^T.
    The v_m are stored on the collection for similarity-rule checks.
    """
    if d < 2:
        raise ValueError("need d >= 2")
    rng = _rng(seed)
    dirs = rng.standard_normal((T, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    w_true = rng.standard_normal(d)
    w_true /= np.linalg.norm(w_true)
    tasks = []
    for m in range(T):
        X = orth_complement_rows(dirs[m][None, :])  # (d-1, d), orthonormal
        tasks.append(Task(features=X, targets=X @ w_true, orthonormal_rows=True))
    return TaskCollection.build(tasks, teacher=w_true, solution_dirs=dirs)


# ---------------------------------------------------------------------------
# Adversarial 3-D family
# ---------------------------------------------------------------------------


@dataclass
class Adversarial3DSpec:
    """Parameters of the 3-D family: four solution-subspace groups.

    Groups 0 and 1 are mirrored lines near the z-axis (angle ~ 1/sqrt(K));
    groups 2 and 3 are mirrored planes through the (1,0,1)/sqrt(2) axis.
    Multiplicities (K-1, K, K, K) give T = 4K-1 tasks.
    """

    K: int
    T: int
    subspace_bases: list  # four arrays whose rows span each solution subspace
    multiplicities: Tuple[int, int, int, int]
    w0: np.ndarray


def gen_adversarial_3d(K: int) -> Tuple[Adversarial3DSpec, TaskCollection, np.ndarray]:
    """Build the 3-D family of T = 4K-1 tasks with w* = 0.

    Greedy orderings first alternate between the two line groups, then
    between the two plane groups; the average loss dips during the first
    half and then climbs back to a K-independent level.
    """
    if K < 2:
        raise ValueError("need K >= 2")
    rk = 1.0 / math.sqrt(K)
    s1, c1 = math.sin(rk), math.cos(rk)
    s2, c2 = math.sin(0.5 * rk), math.cos(0.5 * rk)
    ax = 1.0 / math.sqrt(2.0)
    bases = [
        np.array([[0.0, s1, c1]]),
        np.array([[0.0, -s1, c1]]),
        np.array([[0.0, s2, c2], [ax, 0.0, ax]]),
        np.array([[0.0, -s2, c2], [ax, 0.0, ax]]),
    ]
    group_tasks = []
    for W in bases:
        X = orth_complement_rows(W)
        group_tasks.append(
            Task(features=X, targets=np.zeros(X.shape[0]), orthonormal_rows=True)
        )
    multiplicities = (K - 1, K, K, K)
    tasks: list[Task] = []
    group_index: list[int] = []
    for g, count in enumerate(multiplicities):
        tasks.extend([group_tasks[g]] * count)
        group_index.extend([g] * count)
    w0 = np.array([0.0, s1, c1])
    collection = TaskCollection.build(
        tasks, w0=w0, group_index=np.asarray(group_index, dtype=int)
    )
    spec = Adversarial3DSpec(
        K=K,
        T=4 * K - 1,
        subspace_bases=bases,
        multiplicities=multiplicities,
        w0=w0,
    )
    return spec, collection, w0


# ---------------------------------------------------------------------------
# Adversarial high-dimensional family
# ---------------------------------------------------------------------------


def highdim_beta(d: int) -> np.ndarray:
    """Coefficients beta_t = ((t-1)c - (t-2)) c^(2t-5) / d for t = 2..d.

    Returned 1-aligned: entry [t] is beta_t; entries [0] and [1] are NaN.
    """
    c = 2.0 ** (-1.0 / d)
    t = np.arange(2, d + 1, dtype=float)
    beta = ((t - 1) * c - (t - 2)) * c ** (2 * t - 5) / d
    out = np.full(d + 1, np.nan)
    out[2:] = beta
    return out


def highdim_x_sequence(d: int) -> np.ndarray:
    """First-coordinate recursion x_1 = 1, x_t = (x_{t-1} + sqrt(x_{t-1}^2 - 4 beta_t)) / 2.

    Returned 1-aligned (entry [t] is x_t, entry [0] is NaN).  Raises if any
    radicand is negative, which does not happen for d >= 30.
    """
    beta = highdim_beta(d)
    x = np.full(d + 1, np.nan)
    x[1] = 1.0
    for t in range(2, d + 1):
        rad = x[t - 1] * x[t - 1] - 4.0 * beta[t]
        if rad < 0:
            raise ValueError(f"construction infeasible: negative radicand at t={t}")
        x[t] = 0.5 * (x[t - 1] + math.sqrt(rad))
    return x


def xk_tilde(k: int, d: int) -> float:
    """Closed-form reference for the recursion: sqrt(1 - 1/ln4 + 4^(-k/d)(1/ln4 - k/d))."""
    if not (0 <= k <= d):
        raise ValueError("need 0 <= k <= d")
    q = 1.0 / math.log(4.0)
    ratio = k / d
    inner = 1.0 - q + 4.0 ** (-ratio) * (q - ratio)
    return math.sqrt(inner)


@dataclass
class AdversarialHighDimSpec:
    """The high-dimensional construction's scalars, iterates, and tasks.

    Arrays are 1-aligned: beta[t], x[t] for t in 2..d (resp. 1..d);
    iterates[t] is w_t (iterates[0] unused) and directions[t] is
    u_t = (w_t - w_{t-1}) / ||w_t - w_{t-1}|| for t in 2..d.
    Task t (t = 2..d) stacks u_t on top of the identity rows t+1..d and has
    zero targets; tasks[0] in the list corresponds to t = 2.
    """

    d: int
    c: float
    beta: np.ndarray  # (d+1,)
    x: np.ndarray  # (d+1,)
    iterates: np.ndarray  # (d+1, d)
    directions: np.ndarray  # (d+1, d)
    tasks: list


def _highdim_task(u_t: np.ndarray, t: int, d: int) -> Task:
    """Sparse (d-t+1, d) matrix [u_t ; I_{t+1:d}] with orthonormal rows."""
    head = u_t[:t]
    data = np.concatenate([head, np.ones(d - t)])
    indices = np.concatenate([np.arange(t), np.arange(t, d)])
    indptr = np.concatenate([[0], t + np.arange(d - t + 1)])
    X = sp.csr_matrix((data, indices, indptr), shape=(d - t + 1, d))
    return Task(features=X, targets=np.zeros(d - t + 1), orthonormal_rows=True)


def gen_adversarial_highdim(
    d: int,
) -> Tuple[AdversarialHighDimSpec, TaskCollection, np.ndarray]:
    """Build the T = d-1 family on which single-pass greedy orderings stall.

    Iterate t has first coordinate x_t and t-1 trailing coordinates
    c^(t-2)/sqrt(d); task t removes exactly the step from w_{t-1} to w_t.
    The construction is verified before returning: each projection of
    w_{t-1} onto task t's solution space reproduces w_t to 1e-8.
    """
    if d < 30:
        raise ValueError("construction requires d >= 30")
    c = 2.0 ** (-1.0 / d)
    beta = highdim_beta(d)
    x = highdim_x_sequence(d)

    w = np.zeros((d + 1, d))
    w[1, 0] = 1.0
    inv_sqrt_d = 1.0 / math.sqrt(d)
    for t in range(2, d + 1):
        w[t, 0] = x[t]
        w[t, 1:t] = c ** (t - 2) * inv_sqrt_d

    u = np.zeros((d + 1, d))
    tasks = []
    for t in range(2, d + 1):
        diff = w[t] - w[t - 1]
        u[t] = diff / np.linalg.norm(diff)
        tasks.append(_highdim_task(u[t], t, d))

    w0 = np.zeros(d)
    w0[0] = 1.0  # w_1 = e_1
    collection = TaskCollection.build(tasks, w0=w0)

    from .core import fit_task  # local import to keep module load light

    for t in range(2, d + 1):
        idx = t - 2
        w_proj = fit_task(w[t - 1], collection.tasks[idx], collection.caches[idx])
        err = np.max(np.abs(w_proj - w[t]))
        if err > 1e-8:
            raise ValueError(
                f"construction inconsistent: projection error {err:.3e} at t={t}"
            )

    spec = AdversarialHighDimSpec(
        d=d, c=c, beta=beta, x=x, iterates=w, directions=u, tasks=tasks
    )
    return spec, collection, w0


def _highdim_step_norms(x: np.ndarray, c: float, d: int) -> np.ndarray:
    """||w_{k-1} - w_k|| for k = 2..d from the scalar layout (1-aligned).

    The difference vector has first coordinate x_{k-1} - x_k, then k-2
    entries c^(k-3)(1-c)/sqrt(d), then one entry -c^(k-2)/sqrt(d).
    """
    k = np.arange(2, d + 1, dtype=float)
    diff = x[1:d] - x[2 : d + 1]
    norms_sq = (
        diff**2
        + (k - 2) / d * c ** (2 * k - 6) * (1 - c) ** 2
        + c ** (2 * k - 4) / d
    )
    out = np.full(d + 1, np.nan)
    out[2:] = np.sqrt(norms_sq)
    return out


def delta_tk(spec: AdversarialHighDimSpec, t: int, k: int) -> float:
    """Greedy-consistency margin Delta_{t,k} of the construction.

    Delta_{t,k} = ||w_k - w_{k+1}|| (w_{k-1} - w_k)^T w_{t-1}
                - ||w_{k-1} - w_k|| (w_k - w_{k+1})^T w_{t-1},
    evaluated through the closed scalar expansion
    (w_{k-1} - w_k)^T w_{t-1} = (x_{k-1} - x_k) x_{t-1}
                               + (t-2) c^(k+t-6) (1-c) / d.
    Positive for all valid (t, k) when d >= 30.
    """
    d = spec.d
    if not (2 <= t <= d - 1):
        raise ValueError(f"t must lie in [2, {d - 1}]")
    if not (t <= k <= d - 1):
        raise ValueError(f"k must lie in [{t}, {d - 1}]")
    x, c = spec.x, spec.c
    norms = _highdim_step_norms(x, c, d)

    def dot(kk: int) -> float:
        return (x[kk - 1] - x[kk]) * x[t - 1] + (t - 2) * c ** (kk + t - 6) * (1 - c) / d

    return float(norms[k + 1] * dot(k) - norms[k] * dot(k + 1))


def delta_min(spec: AdversarialHighDimSpec) -> float:
    """min over t in 2..d-1, k in t..d-1 of Delta_{t,k} (vectorized)."""
    d, x, c = spec.d, spec.x, spec.c
    norms = _highdim_step_norms(x, c, d)
    ts = np.arange(2, d, dtype=float)  # t = 2..d-1
    ks = np.arange(2, d, dtype=float)  # k = 2..d-1
    diff = x[1:d] - x[2 : d + 1]  # diff[j] = x_{(j+2)-1} - x_{j+2}
    diff_k = diff[: d - 2]  # aligned with ks
    diff_k1 = diff[1 : d - 1]  # x_k - x_{k+1} aligned with ks
    x_t1 = x[1 : d - 1]  # x_{t-1} aligned with ts

    # dot(t, k) = diff_k * x_{t-1} + (t-2)(1-c)/d * c^(k+t-6)
    KK, TT = np.meshgrid(ks, ts)
    c_pow = np.exp((KK + TT - 6.0) * math.log(c))
    base = ((ts - 2.0) * (1.0 - c) / d)[:, None]
    dot_k = diff_k[None, :] * x_t1[:, None] + base * c_pow
    dot_k1 = diff_k1[None, :] * x_t1[:, None] + base * c_pow * c
    delta = norms[3 : d + 1][None, :] * dot_k - norms[2:d][None, :] * dot_k1
    valid = KK >= TT
    return float(delta[valid].min())


# ---------------------------------------------------------------------------
# Collection container (export / import)
# ---------------------------------------------------------------------------

_MAGIC = b"TASKCOL1"


def save_collection(collection: TaskCollection, path) -> None:
    """Write a collection to the binary container format.

    Layout (all integers and floats little-endian 64-bit):
      magic "TASKCOL1" | int64 d | int64 T | int64 n_m x T |
      uint8 has_w0 | [float64 w0 x d] |
      per task: float64 features row-major (n_m x d), float64 targets (n_m).
    Sparse features are densified; task aliasing is not preserved.
    """
    tasks = collection.tasks
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        header = np.array(
            [collection.dim, len(tasks)] + [t.n_rows for t in tasks], dtype="<i8"
        )
        fh.write(header.tobytes())
        fh.write(np.array([1], dtype=np.uint8).tobytes())
        fh.write(collection.w0.astype("<f8").tobytes())
        for t in tasks:
            fh.write(np.ascontiguousarray(t.dense_features(), dtype="<f8").tobytes())
            fh.write(t.targets.astype("<f8").tobytes())


def load_collection(path) -> TaskCollection:
    """Read a collection written by ``save_collection`` and rebuild caches."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a task-collection container: magic {magic!r}")
        d, T = np.frombuffer(fh.read(16), dtype="<i8")
        n_rows = np.frombuffer(fh.read(8 * T), dtype="<i8")
        has_w0 = np.frombuffer(fh.read(1), dtype=np.uint8)[0]
        w0 = None
        if has_w0:
            w0 = np.frombuffer(fh.read(8 * d), dtype="<f8").astype(float)
        tasks = []
        for n in n_rows:
            X = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d)
            y = np.frombuffer(fh.read(8 * n), dtype="<f8")
            tasks.append(Task(features=X.astype(float), targets=y.astype(float)))
    return TaskCollection.build(tasks, w0=w0)
