"""Vector-valued Gaussian free fields on discrete surfaces.

Sampling is exact: a factor L with L Lᵀ = G (eigenvalue square root, tiny
negative eigenvalues from the mean-zero rank deficiency clamped to zero) maps
i.i.d. normals to field samples, so the sampling covariance equals the Green
matrix as a matrix identity, independent of Monte Carlo.

Boundary conditions: plain kinds use one Green matrix; the twisted/Cardy field
is an invariant-subspace-valued Neumann field plus an independent
complementary-valued Dirichlet field,

    E <u,X(x)> <v,X(y)> = <pN u, pN v> G^N(x,y) + <pD u, pD v> G^D(x,y).

Replicas are drawn in fixed-size batches with substreams keyed by
(master seed, kind, batch index); the stream is bit-reproducible and
independent of any worker scheduling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rootdata import FoldingData, RootSystem
from .surface import DiscreteSurface, GreenKind, GreenMatrix, green

__all__ = [
    "FieldKind",
    "FieldEnsemble",
    "make_ensemble",
    "sample",
    "sample_cardy",
    "girsanov_check",
    "dump_samples",
    "load_samples",
]

BATCH = 4096  # replicas per substream; fixed so streams are scheduler-independent


class FieldKind(Enum):
    CLOSED = "closed"
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"
    CARDY = "cardy"


_GREEN_OF = {
    FieldKind.CLOSED: GreenKind.CLOSED,
    FieldKind.NEUMANN: GreenKind.NEUMANN,
    FieldKind.DIRICHLET: GreenKind.DIRICHLET,
}


def _factor(G: np.ndarray, clamp: float = 1e-12) -> np.ndarray:
    """Symmetric factor L with L Lᵀ = G; eigenvalues below ``clamp`` are
    treated as exact zeros (mean-zero / boundary rank deficiency)."""
    w, U = np.linalg.eigh((G + G.T) / 2)
    w = np.where(w > clamp, w, 0.0)
    return U * np.sqrt(w)[None, :]


@dataclass(frozen=True)
class FieldEnsemble:
    """Surface + root-system context with factored Green matrices."""

    surface: DiscreteSurface
    rs: RootSystem
    folding: FoldingData
    greens: dict
    factors: dict
    master_seed: int

    @property
    def rank(self) -> int:
        return self.rs.rank

    def green(self, kind: GreenKind) -> GreenMatrix:
        return self.greens[kind]

    def factor(self, kind: GreenKind) -> np.ndarray:
        return self.factors[kind]

    def covariance_error(self, kind: GreenKind) -> float:
        L = self.factors[kind]
        return float(np.abs(L @ L.T - self.greens[kind].G).max())

    def available_kinds(self) -> set:
        return set(self.greens)

    def field_covariance(self, kind: FieldKind, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Exact covariance matrix C(x,y) = E <u,X(x)><v,X(y)> for the kind."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if kind == FieldKind.CARDY:
            pN, pD = self.folding.p_N, self.folding.p_D
            return (
                float((pN @ u) @ (pN @ v)) * self.greens[GreenKind.NEUMANN].G
                + float((pD @ u) @ (pD @ v)) * self.greens[GreenKind.DIRICHLET].G
            )
        return float(u @ v) * self.greens[_GREEN_OF[kind]].G

    def wick_diagonal(self, kind: FieldKind, u: np.ndarray) -> np.ndarray:
        """Per-vertex variance Var <u, X(v)> (the lattice-Wick diagonal)."""
        u = np.asarray(u, dtype=float)
        if kind == FieldKind.CARDY:
            pN, pD = self.folding.p_N, self.folding.p_D
            return (
                float((pN @ u) @ (pN @ u)) * np.diag(self.greens[GreenKind.NEUMANN].G)
                + float((pD @ u) @ (pD @ u)) * np.diag(self.greens[GreenKind.DIRICHLET].G)
            )
        return float(u @ u) * np.diag(self.greens[_GREEN_OF[kind]].G)

    def drift_field(self, kind: FieldKind, charges) -> np.ndarray:
        """H(v) = Σ_k w_k E[<w_k-weighted probe> X(v)] for charges
        [(vertex, vector)], i.e. Σ_k G-kernel(v, x_k) acting on the vector.

        For the Cardy kind the kernel splits through the projections.
        Returns an (n_vertices, rank) array.
        """
        n = self.surface.n_vertices
        H = np.zeros((n, self.rank))
        for x, vec in charges:
            vec = np.asarray(vec, dtype=float)
            if kind == FieldKind.CARDY:
                pN, pD = self.folding.p_N, self.folding.p_D
                H += np.outer(self.greens[GreenKind.NEUMANN].G[:, x], pN @ vec)
                H += np.outer(self.greens[GreenKind.DIRICHLET].G[:, x], pD @ vec)
            else:
                H += np.outer(self.greens[_GREEN_OF[kind]].G[:, x], vec)
        return H


def make_ensemble(surface: DiscreteSurface, rs: RootSystem, folding: FoldingData,
                  seed: int) -> FieldEnsemble:
    """Build the ensemble, solving and factoring the admissible Green problems."""
    if surface.has_boundary:
        kinds = [GreenKind.NEUMANN, GreenKind.DIRICHLET]
    else:
        kinds = [GreenKind.CLOSED]
    greens = {k: green(surface, k) for k in kinds}
    factors = {k: _factor(gm.G) for k, gm in greens.items()}
    if GreenKind.DIRICHLET in factors:
        # boundary rows of the Dirichlet Green matrix are exactly zero;
        # enforce the same on the factor so samples vanish there exactly
        factors[GreenKind.DIRICHLET][surface.boundary_list(), :] = 0.0
    ens = FieldEnsemble(surface=surface, rs=rs, folding=folding, greens=greens,
                        factors=factors, master_seed=int(seed))
    for k in kinds:
        err = ens.covariance_error(k)
        if err > 1e-10:
            raise RuntimeError(f"covariance factor residual {err:.2e} for {k}")
    return ens


def _batch_rng(master_seed: int, tag: str, batch_index: int) -> np.random.Generator:
    # zlib.crc32 is deterministic across processes (str hash is salted)
    import zlib

    tag_key = zlib.crc32(tag.encode())
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(tag_key, batch_index))
    return np.random.Generator(np.random.PCG64(ss))


def _check_kind(ens: FieldEnsemble, kind: FieldKind) -> None:
    has_b = ens.surface.has_boundary
    if kind == FieldKind.CLOSED and has_b:
        raise ValueError("closed field sampling needs a closed surface")
    if kind in (FieldKind.NEUMANN, FieldKind.DIRICHLET, FieldKind.CARDY) and not has_b:
        raise ValueError(f"{kind.value} field sampling needs a surface with boundary")


def sample_batches(ens: FieldEnsemble, kind: FieldKind, n: int):
    """Yield (start, X) blocks with X of shape (b, n_vertices, rank)."""
    _check_kind(ens, kind)
    r = ens.rank
    nv = ens.surface.n_vertices
    if kind == FieldKind.CARDY:
        if ens.folding is None:
            raise ValueError("Cardy sampling needs folding data")
        LN = ens.factors[GreenKind.NEUMANN]
        LD = ens.factors[GreenKind.DIRICHLET]
        pN, pD = ens.folding.p_N, ens.folding.p_D
    else:
        L = ens.factors[_GREEN_OF[kind]]
    start = 0
    batch_index = 0
    while start < n:
        b = min(BATCH, n - start)
        rng = _batch_rng(ens.master_seed, kind.value, batch_index)
        if kind == FieldKind.CARDY:
            Z1 = rng.standard_normal((b, nv, r))
            Z2 = rng.standard_normal((b, nv, r))
            X = np.einsum("vw,bwr->bvr", LN, Z1) @ pN.T
            X += np.einsum("vw,bwr->bvr", LD, Z2) @ pD.T
        else:
            Z = rng.standard_normal((b, nv, r))
            X = np.einsum("vw,bwr->bvr", L, Z)
        yield start, X
        start += b
        batch_index += 1


def sample(ens: FieldEnsemble, kind: FieldKind, n: int) -> np.ndarray:
    """n field samples, shape (n, n_vertices, rank)."""
    out = np.empty((n, ens.surface.n_vertices, ens.rank))
    for start, X in sample_batches(ens, kind, n):
        out[start:start + X.shape[0]] = X
    return out


def sample_cardy(ens: FieldEnsemble, n: int) -> np.ndarray:
    return sample(ens, FieldKind.CARDY, n)


# ---------------------------------------------------------------------------
# Shift-identity Monte Carlo check

def _functional(f_spec):
    """Functional factory: ('const',), ('linear', u, x), ('exp_tanh', u, x).

    Only these classes are supported (constant, linear probes, and bounded
    exponentials of linear probes).
    """
    tag = f_spec[0]
    if tag == "const":
        return lambda X: np.ones(X.shape[0])
    if tag == "linear":
        _, u, x = f_spec
        u = np.asarray(u, dtype=float)
        return lambda X: X[:, x, :] @ u
    if tag == "exp_tanh":
        _, u, x = f_spec
        u = np.asarray(u, dtype=float)
        return lambda X: np.exp(np.tanh(X[:, x, :] @ u))
    raise ValueError(f"unsupported functional class {tag!r}")


def girsanov_check(ens: FieldEnsemble, kind: FieldKind, probes, f_spec,
                   n: int, seed_offset: int = 0) -> dict:
    """Monte Carlo check of the exponential-tilt / shifted-field identity.

    probes: list of (weight, vector u, vertex x) defining the linear statistic
    Y = Σ w <u, X(x)>. Returns both estimators of E[e^{Y − Var Y/2} F(X)] =
    E[F(X + shift)] with the shift computed exactly from the Green data.
    """
    var_y = 0.0
    for w1, u1, x1 in probes:
        for w2, u2, x2 in probes:
            C = ens.field_covariance(kind, u1, u2)
            var_y += w1 * w2 * C[x1, x2]
    shift = ens.drift_field(kind, [(x, w * np.asarray(u, dtype=float)) for w, u, x in probes])

    F = _functional(f_spec)
    lhs_terms = []
    rhs_terms = []
    for _, X in sample_batches(ens, kind, n):
        Y = np.zeros(X.shape[0])
        for w, u, x in probes:
            Y += w * (X[:, x, :] @ np.asarray(u, dtype=float))
        lhs_terms.append(np.exp(Y - var_y / 2) * F(X))
        rhs_terms.append(F(X + shift[None, :, :]))
    lhs = np.concatenate(lhs_terms)
    rhs = np.concatenate(rhs_terms)
    return {
        "tilted": float(lhs.mean()),
        "tilted_stderr": float(lhs.std(ddof=1) / np.sqrt(n)),
        "shifted": float(rhs.mean()),
        "shifted_stderr": float(rhs.std(ddof=1) / np.sqrt(n)),
        "var_y": float(var_y),
        "n_samples": n,
    }


# ---------------------------------------------------------------------------
# Binary sample dump: little-endian header (n_vertices, rank, count, seed)
# as int64, then row-major float64 payload.

_MAGIC = b"TLFS"


def dump_samples(path, X: np.ndarray, seed: int) -> None:
    n, nv, r = X.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqqq", nv, r, n, seed))
        fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())


def load_samples(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a field-sample dump")
        nv, r, n, seed = struct.unpack("<qqqq", fh.read(32))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(n, nv, r)
    return data, {"n_vertices": nv, "rank": r, "count": n, "seed": seed}
