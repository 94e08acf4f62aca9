"""Bottom spectrum of the ground-state operator ``-Delta + V2`` on a truncated box.

The kinetic part is ``sum_i D_i^T D_i`` with D_i a forward difference along the
exact flow of X_i:

    (D_i f)(p) = (f(p o (h_i e_i, 0)) - f(p)) / h_i.

The target point has x on the grid and z shifted by ``h_i c_i(x)``, which is
handled by cubic Lagrange interpolation in z (nodes outside the box
contribute zero). Rows of D_i are indexed by start nodes, including the ghost
layer just below the box in direction i, so with ``Lambda = 0`` the operator
reduces to the standard Dirichlet Laplacian.
Functions vanish outside the box. Grid sizes should be even so no node lies on
{x_i = 0}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import GridTooCoarse, InvalidParameter, MemoryBudgetExceeded, NoConvergence
from .group import GroupPoint
from .taming import EnergyModel, energy_value, v2_closed

V_CLAMP = 1e6
POTENTIALS = ("sampled", "ground_state")


@dataclass(frozen=True)
class SpectrumConfig:
    """``half_widths`` and ``grid`` list the x coordinates first, then z."""

    half_widths: tuple
    grid: tuple
    k: int = 6
    tol: float = 1e-8
    v_clamp: float = V_CLAMP
    memory_budget: float = 2e9
    max_iter: Optional[int] = None
    zero_potential: bool = False
    positive_part: bool = False
    potential: str = "sampled"

    def __post_init__(self):
        if len(self.half_widths) != len(self.grid):
            raise InvalidParameter("half_widths and grid need one entry per coordinate")
        if any(w <= 0 for w in self.half_widths):
            raise InvalidParameter("box half-widths must be positive")
        if any(int(g) < 8 for g in self.grid):
            raise GridTooCoarse(f"grid sizes must be >= 8, got {self.grid}")
        if self.k < 2:
            raise InvalidParameter("need k >= 2 eigenvalues")
        if self.potential not in POTENTIALS:
            raise InvalidParameter(f"potential must be one of {POTENTIALS}, got {self.potential!r}")


def weighted_box(x_half_width: float, n: int, m: int, grid_x: int, grid_z: int,
                 a: float = 16.0, **kw) -> SpectrumConfig:
    """Box with z half-width ``x_half_width^2 / sqrt(a)``, matching the dilation weights."""
    widths = (x_half_width,) * n + (x_half_width ** 2 / np.sqrt(a),) * m
    return SpectrumConfig(widths, (grid_x,) * n + (grid_z,) * m, **kw)


@dataclass(frozen=True)
class Mesh:
    axes: tuple
    steps: tuple
    shape: tuple
    n: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def points(self) -> GroupPoint:
        grids = np.meshgrid(*self.axes, indexing="ij")
        coords = np.stack([c.ravel() for c in grids], axis=-1)
        return GroupPoint(coords[:, : self.n], coords[:, self.n:])


def build_mesh(model: EnergyModel, cfg: SpectrumConfig) -> Mesh:
    g = model.group
    if len(cfg.grid) != g.dim:
        raise InvalidParameter(f"grid needs {g.dim} entries, got {len(cfg.grid)}")
    axes, steps = [], []
    for w, G in zip(cfg.half_widths, cfg.grid):
        h = 2.0 * w / (G + 1)
        axes.append(-w + h * np.arange(1, G + 1))
        steps.append(h)
    return Mesh(tuple(axes), tuple(steps), tuple(int(G) for G in cfg.grid), g.n)


@dataclass
class Hamiltonian:
    matrix: sparse.csr_matrix
    mesh: Mesh
    potential: np.ndarray
    clamp_events: int


def _estimate_bytes(mesh: Mesh, m: int) -> float:
    per_row = 1 + 4 ** m
    nnz_d = mesh.n * mesh.size * per_row
    # D's plus the product (roughly per_row^2 couplings per row per direction)
    return 16.0 * (nnz_d + mesh.n * mesh.size * per_row ** 2)


def cubic_weights(t: np.ndarray) -> np.ndarray:
    """Lagrange weights on nodes -1, 0, 1, 2 for a point at offset t in [0, 1)."""
    return np.stack([-t * (t - 1.0) * (t - 2.0) / 6.0,
                     (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                     -(t + 1.0) * t * (t - 2.0) / 2.0,
                     (t + 1.0) * t * (t - 1.0) / 6.0], axis=-1)


def difference_operator(model: EnergyModel, mesh: Mesh, i: int) -> sparse.csr_matrix:
    """Forward difference along X_i; rows are start nodes with a ghost layer in direction i."""
    g = model.group
    shape = mesh.shape
    xi_axis = mesh.axes[i]
    h = mesh.steps[i]
    start_shape = list(shape)
    start_shape[i] += 1
    start_idx = np.indices(start_shape).reshape(len(shape), -1)
    start_idx[i] -= 1  # index -1 is the ghost node below the box
    rows = np.arange(start_idx.shape[1])

    coords_x = np.stack([mesh.axes[a][np.clip(start_idx[a], 0, None)] for a in range(g.n)], -1)
    coords_x[:, i] = xi_axis[0] - h + h * (start_idx[i] + 1)
    flat = lambda idx: np.ravel_multi_index(idx, shape)  # noqa: E731

    data, r_idx, c_idx = [], [], []
    # -f(p) term: only interior start nodes carry a value
    interior = start_idx[i] >= 0
    data.append(np.full(interior.sum(), -1.0 / h))
    r_idx.append(rows[interior])
    c_idx.append(flat(start_idx[:, interior]))

    # +f(p o h e_i): x_i moves one node up, z moves by h c_i(x)
    tgt = start_idx.copy()
    tgt[i] += 1
    ok = tgt[i] < shape[i]
    if g.m == 0:
        data.append(np.full(ok.sum(), 1.0 / h))
        r_idx.append(rows[ok])
        c_idx.append(flat(tgt[:, ok]))
    else:
        shift = h * g.center_coefficients(coords_x)[:, i, :]  # (rows, m)
        base_parts, weight_parts = [], []
        for k in range(g.m):
            axis = mesh.axes[g.n + k]
            hz = mesh.steps[g.n + k]
            zt = axis[tgt[g.n + k]] + shift[:, k]
            pos = (zt - axis[0]) / hz
            lo = np.floor(pos).astype(int)
            base_parts.append(lo - 1)
            weight_parts.append(cubic_weights(pos - lo))
        for corner in itertools.product(range(4), repeat=g.m):
            w = np.ones(rows.size)
            idx = tgt.copy()
            valid = ok.copy()
            for k, c in enumerate(corner):
                ki = base_parts[k] + c
                w = w * weight_parts[k][:, c]
                valid &= (ki >= 0) & (ki < shape[g.n + k])
                idx[g.n + k] = np.clip(ki, 0, shape[g.n + k] - 1)
            valid &= w != 0.0
            data.append(w[valid] / h)
            r_idx.append(rows[valid])
            c_idx.append(flat(idx[:, valid]))
    return sparse.csr_matrix((np.concatenate(data), (np.concatenate(r_idx), np.concatenate(c_idx))),
                             shape=(rows.size, mesh.size))


def assemble_hamiltonian(model: EnergyModel, cfg: SpectrumConfig) -> Hamiltonian:
    """``H = sum_i D_i^T D_i + diag(clamp(V2))`` on the interior nodes.

    With ``potential="sampled"`` the diagonal is V2 evaluated at the nodes. With
    ``potential="ground_state"`` it is ``-(K psi) / psi`` for the grid samples
    ``psi`` of ``exp(-U/2)``, a consistent discretization of V2 that makes psi
    an exact null vector of the discrete operator.
    """
    mesh = build_mesh(model, cfg)
    need = _estimate_bytes(mesh, model.group.m)
    if need > cfg.memory_budget:
        raise MemoryBudgetExceeded(f"estimated {need:.3g} bytes exceeds budget {cfg.memory_budget:.3g}")
    K = sparse.csr_matrix((mesh.size, mesh.size))
    for i in range(model.group.n):
        D = difference_operator(model, mesh, i)
        K = K + (D.T @ D)
    K = ((K + K.T) * 0.5).tocsr()  # exact symmetry regardless of summation order
    if cfg.zero_potential:
        pot = np.zeros(mesh.size)
        events = 0
    else:
        with np.errstate(all="ignore"):
            if cfg.potential == "sampled":
                pot = v2_closed(model, mesh.points())
            else:
                psi = ground_state_vector(model, mesh)
                pot = -(K @ psi) / psi
        pot = np.where(np.isnan(pot), cfg.v_clamp, pot)
        events = int(np.sum(np.abs(pot) > cfg.v_clamp))
        pot = np.clip(pot, -cfg.v_clamp, cfg.v_clamp)
        if cfg.positive_part:
            pot = np.maximum(pot, 0.0)
    H = (K + sparse.diags(pot)).tocsr()
    return Hamiltonian(H, mesh, pot, events)


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    rayleigh_ground: Optional[float]
    mesh: dict
    clamp_events: int = 0

    def to_dict(self):
        return {"eigenvalues": self.eigenvalues.tolist(), "residuals": self.residuals.tolist(),
                "rayleigh_ground": self.rayleigh_ground, "mesh": self.mesh,
                "clamp_events": self.clamp_events}


def bottom_spectrum(H, k: int, tol: float = 1e-8, max_iter: Optional[int] = None,
                    seed: int = 0):
    """``k`` smallest eigenpairs of a symmetric matrix by implicitly restarted Lanczos.

    The matrix is only touched through matrix-vector products. Returns the
    eigenvalues (ascending), eigenvectors and relative residuals
    ``|Hv - lambda v| / |v|``.
    """
    if sparse.issparse(H):
        asym = abs(H - H.T).max() if H.nnz else 0.0
    else:
        H = np.asarray(H, dtype=float)
        asym = np.abs(H - H.T).max()
    if asym != 0.0:
        raise InvalidParameter(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    size = H.shape[0]
    if k >= size:
        raise InvalidParameter("k must be smaller than the matrix size")
    rng = np.random.default_rng(seed)
    ncv = min(size, max(4 * k + 1, 40))
    vals, vecs = _lanczos(splinalg.aslinearoperator(H), k, tol, max_iter, rng, ncv)
    # Lanczos from one start vector can miss copies of an exactly degenerate
    # eigenvalue. Deflate what was found and look again below lambda_k.
    for _ in range(k):
        shift = abs(vals[-1] - vals[0]) + abs(vals[-1]) + 1.0
        V = vecs
        deflated = splinalg.LinearOperator(
            H.shape, matvec=lambda x, V=V, c=shift: H @ x + c * (V @ (V.T @ x)), dtype=float)
        extra_k = min(2, size - k - 1)
        if extra_k < 1:
            break
        ncv2 = min(size, max(4 * extra_k + 1, 40))
        # a loose detection pass; refine only if something turns up
        ev, evec = _lanczos(deflated, extra_k, max(tol, 1e-4), max_iter, rng, ncv2)
        gap = 1e-3 * max(1.0, abs(vals[-1]))
        if not np.any(ev < vals[-1] - gap):
            break
        ev, evec = _lanczos(deflated, extra_k, tol, max_iter, rng, ncv2)
        new = ev < vals[-1] - gap
        vals = np.concatenate([vals, ev[new]])
        vecs = np.concatenate([vecs, evec[:, new]], axis=1)
        order = np.argsort(vals)[:k]
        vals, vecs = vals[order], vecs[:, order]
        Q, _ = np.linalg.qr(vecs)
        vals, S = np.linalg.eigh(Q.T @ (H @ Q))
        vecs = Q @ S
    res = np.linalg.norm(H @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.any(res > max(tol, 1e-12) * scale * 1e3):
        raise NoConvergence(f"residuals {res} exceed tolerance")
    return vals, vecs, res


def _lanczos(op, k, tol, max_iter, rng, ncv):
    v0 = rng.standard_normal(op.shape[0])
    try:
        vals, vecs = splinalg.eigsh(op, k=k, which="SA", tol=tol, maxiter=max_iter, v0=v0, ncv=ncv)
    except splinalg.ArpackNoConvergence as exc:
        raise NoConvergence(f"Lanczos did not converge: {exc}") from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def ground_state_vector(model: EnergyModel, mesh: Mesh) -> np.ndarray:
    """Grid samples of ``exp(-U/2)``, normalized."""
    with np.errstate(all="ignore"):
        U = energy_value(model, mesh.points())
    v = np.exp(-0.5 * np.where(np.isfinite(U), U - np.nanmin(U[np.isfinite(U)]), np.inf))
    return v / np.linalg.norm(v)


def rayleigh_quotient(H, v: np.ndarray) -> float:
    return float(v @ (H @ v) / (v @ v))


def solve_spectrum(model: EnergyModel, cfg: SpectrumConfig, seed: int = 0) -> SpectrumResult:
    ham = assemble_hamiltonian(model, cfg)
    vals, _, res = bottom_spectrum(ham.matrix, cfg.k, cfg.tol, cfg.max_iter, seed)
    rq = None if cfg.zero_potential else rayleigh_quotient(ham.matrix, ground_state_vector(model, ham.mesh))
    meta = {"half_widths": list(cfg.half_widths), "grid": list(cfg.grid),
            "steps": list(ham.mesh.steps), "unknowns": ham.mesh.size, "nnz": int(ham.matrix.nnz)}
    return SpectrumResult(vals, res, rq, meta, ham.clamp_events)


def dump_matrix(H, path) -> None:
    """Write ``row col value`` triplets, one per line."""
    C = sparse.coo_matrix(H)
    with open(path, "w") as fh:
        for r, c, v in zip(C.row, C.col, C.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
