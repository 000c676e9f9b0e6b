"""Exact simple root-system data: Cartan matrices, weights, diagram
automorphisms, folding, and background charges.

Integer/rational data (Cartan matrix, Gram matrix, weight coordinates) is kept
exact with :class:`fractions.Fraction`; the Euclidean embedding of the roots is
a float Cholesky factor of the Gram matrix, normalized so the longest simple
root has squared length 2.  Only inner products of embedded vectors are
meaningful; raw coordinates depend on the factorization.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "LieType",
    "RootSystem",
    "OuterAut",
    "FoldingData",
    "BackgroundCharge",
    "build_root_system",
    "outer_automorphisms",
    "fold",
    "background_charges",
    "cartan_matrix",
    "root_system_to_dict",
    "root_system_from_dict",
    "folding_to_dict",
    "dump_root_system",
    "load_root_system",
]

# Admissible ranks per family (min, max); None = unbounded.
_RANK_RANGE = {
    "A": (1, None),
    "B": (2, None),
    "C": (3, None),
    "D": (4, None),
    "E": (6, 8),
    "F": (4, 4),
    "G": (2, 2),
}


@dataclass(frozen=True)
class LieType:
    """A simple Lie algebra type, e.g. LieType('A', 2) or LieType('G', 2)."""

    family: str
    rank: int

    def __post_init__(self):
        if self.family not in _RANK_RANGE:
            raise ValueError(f"unknown family {self.family!r}; expected one of A B C D E F G")
        lo, hi = _RANK_RANGE[self.family]
        if self.rank < lo or (hi is not None and self.rank > hi):
            bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
            raise ValueError(f"family {self.family} requires rank {bound}, got {self.rank}")

    def __str__(self):
        return f"{self.family}{self.rank}"

    @classmethod
    def parse(cls, text: str) -> "LieType":
        text = text.strip()
        if len(text) < 2:
            raise ValueError(f"cannot parse Lie type from {text!r}")
        return cls(text[0].upper(), int(text[1:]))


def _dynkin_edges(lie_type: LieType) -> list[tuple[int, int, int, int]]:
    """Edges (i, j, a_ij, a_ji) of the Dynkin diagram, 0-indexed nodes.

    Convention: a_ij = <e_i^v, e_j> = 2<e_i,e_j>/|e_i|^2, so the row of the
    *shorter* root carries the entry of larger magnitude.
    """
    fam, r = lie_type.family, lie_type.rank
    chain = [(i, i + 1, -1, -1) for i in range(r - 1)]
    if fam == "A":
        return chain
    if fam == "B":
        # nodes 0..r-2 long, node r-1 short
        chain[-1] = (r - 2, r - 1, -1, -2)
        return chain
    if fam == "C":
        # nodes 0..r-2 short, node r-1 long
        chain[-1] = (r - 2, r - 1, -2, -1)
        return chain
    if fam == "D":
        edges = [(i, i + 1, -1, -1) for i in range(r - 2)]
        edges.append((r - 3, r - 1, -1, -1))
        return edges
    if fam == "E":
        # Bourbaki: chain 1-3-4-5-6(-7)(-8), node 2 attached to node 4.
        edges = [(0, 2, -1, -1), (2, 3, -1, -1), (1, 3, -1, -1)]
        edges += [(i, i + 1, -1, -1) for i in range(3, r - 1)]
        return edges
    if fam == "F":
        return [(0, 1, -1, -1), (1, 2, -1, -2), (2, 3, -1, -1)]
    if fam == "G":
        # node 0 long, node 1 short: A = [[2,-1],[-3,2]]
        return [(0, 1, -1, -3)]
    raise AssertionError(fam)


def cartan_matrix(lie_type: LieType) -> np.ndarray:
    """Integer Cartan matrix A with A[i][j] = <e_i^v, e_j>."""
    r = lie_type.rank
    A = 2 * np.eye(r, dtype=np.int64)
    for i, j, aij, aji in _dynkin_edges(lie_type):
        A[i, j] = aij
        A[j, i] = aji
    return A


def _exact_inverse(M: list[list[Fraction]]) -> list[list[Fraction]]:
    """Inverse of a square matrix over Fraction by Gauss-Jordan elimination."""
    n = len(M)
    aug = [[Fraction(M[i][j]) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = next(row for row in range(col, n) if aug[row][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        inv_p = Fraction(1) / aug[col][col]
        aug[col] = [x * inv_p for x in aug[col]]
        for row in range(n):
            if row != col and aug[row][col] != 0:
                f = aug[row][col]
                aug[row] = [x - f * y for x, y in zip(aug[row], aug[col])]
    return [row[n:] for row in aug]


def _root_norms(A: np.ndarray) -> list[Fraction]:
    """Squared lengths |e_i|^2 from Cartan symmetry, longest normalized to 2.

    Uses A_ij |e_i|^2 = A_ji |e_j|^2 propagated along diagram edges; the
    diagram is connected so this determines all ratios.
    """
    r = A.shape[0]
    norms: list[Fraction | None] = [None] * r
    norms[0] = Fraction(1)
    stack = [0]
    while stack:
        i = stack.pop()
        for j in range(r):
            if i != j and A[i, j] != 0 and norms[j] is None:
                norms[j] = norms[i] * Fraction(int(A[i, j]), int(A[j, i]))
                stack.append(j)
    if any(n is None for n in norms):
        raise ValueError("Dynkin diagram is disconnected")
    top = max(norms)
    return [n * 2 / top for n in norms]


@dataclass(frozen=True)
class RootSystem:
    """Simple-root data of a finite simple Lie algebra.

    Embedded vectors are rows of (r, r) float arrays; exact rational
    counterparts (coordinates over the simple-root basis) are kept alongside
    for folding and for the symbolic current algebra.
    """

    lie_type: LieType
    rank: int
    cartan: np.ndarray                      # (r, r) int
    norms_sq: tuple[Fraction, ...]          # |e_i|^2
    gram: tuple[tuple[Fraction, ...], ...]  # <e_i, e_j>
    roots: np.ndarray                       # rows = embedded e_i
    coroots: np.ndarray                     # rows = 2 e_i / |e_i|^2
    fund_weights: np.ndarray                # rows = omega_i
    co_fund_weights: np.ndarray             # rows = omega_i^v
    weyl_vector: np.ndarray                 # rho
    co_weyl_vector: np.ndarray              # rho^v
    fund_weight_coords: tuple[tuple[Fraction, ...], ...]     # omega_i over e-basis
    co_fund_weight_coords: tuple[tuple[Fraction, ...], ...]  # omega_i^v over e-basis
    rho_coords: tuple[Fraction, ...]
    rho_vee_coords: tuple[Fraction, ...]

    def embed(self, coords: Sequence[Fraction | float]) -> np.ndarray:
        """Ambient vector of rational coordinates over the simple-root basis."""
        return np.asarray([float(c) for c in coords]) @ self.roots

    def gram_float(self) -> np.ndarray:
        return np.array([[float(g) for g in row] for row in self.gram])


def build_root_system(lie_type: LieType) -> RootSystem:
    """Construct exact root-system data for ``lie_type``.

    The Euclidean realization factors the Gram matrix G_ij = A_ij |e_i|^2 / 2
    (Cholesky); any isometric embedding is equivalent, and all invariants are
    statements about inner products only.
    """
    A = cartan_matrix(lie_type)
    r = lie_type.rank
    norms = _root_norms(A)
    gram = [[Fraction(int(A[i, j])) * norms[i] / 2 for j in range(r)] for i in range(r)]
    for i in range(r):
        for j in range(r):
            if gram[i][j] != gram[j][i]:
                raise AssertionError("Gram matrix not symmetric; Cartan data inconsistent")

    gram_f = np.array([[float(g) for g in row] for row in gram])
    L = np.linalg.cholesky(gram_f)
    roots = L  # row i is e_i; <e_i, e_j> = (L L^T)_ij = G_ij
    coroots = roots * (2.0 / np.array([float(n) for n in norms]))[:, None]

    A_exact = [[Fraction(int(A[i, j])) for j in range(r)] for i in range(r)]
    A_inv = _exact_inverse(A_exact)
    gram_inv = _exact_inverse(gram)

    # omega_i = sum_j (A^-1)_{ji} e_j ; omega_i^v = sum_j (G^-1)_{ij} e_j
    fw_coords = tuple(tuple(A_inv[j][i] for j in range(r)) for i in range(r))
    cofw_coords = tuple(tuple(gram_inv[i][j] for j in range(r)) for i in range(r))
    fund_weights = np.array([[float(c) for c in row] for row in fw_coords]) @ roots
    co_fund_weights = np.array([[float(c) for c in row] for row in cofw_coords]) @ roots

    rho_coords = tuple(sum(fw_coords[i][j] for i in range(r)) for j in range(r))
    rho_vee_coords = tuple(sum(cofw_coords[i][j] for i in range(r)) for j in range(r))

    return RootSystem(
        lie_type=lie_type,
        rank=r,
        cartan=A,
        norms_sq=tuple(norms),
        gram=tuple(tuple(row) for row in gram),
        roots=roots,
        coroots=coroots,
        fund_weights=fund_weights,
        co_fund_weights=co_fund_weights,
        weyl_vector=fund_weights.sum(axis=0),
        co_weyl_vector=co_fund_weights.sum(axis=0),
        fund_weight_coords=fw_coords,
        co_fund_weight_coords=cofw_coords,
        rho_coords=rho_coords,
        rho_vee_coords=rho_vee_coords,
    )


@dataclass(frozen=True)
class OuterAut:
    """Dynkin-diagram symmetry: a Cartan-matrix-preserving permutation.

    perm[i] is the (0-indexed) image of node i; order is the minimal k with
    perm^k = id. The induced linear map e_i -> e_{perm[i]} is an isometry.
    """

    perm: tuple[int, ...]
    order: int

    @property
    def is_identity(self) -> bool:
        return all(p == i for i, p in enumerate(self.perm))

    def matrix(self, rs: RootSystem) -> np.ndarray:
        """Ambient matrix T with T e_i = e_{perm[i]}."""
        basis = rs.roots.T  # columns are roots
        images = rs.roots[list(self.perm)].T
        return images @ np.linalg.inv(basis)

    def apply_coords(self, coords: Sequence[Fraction]) -> tuple[Fraction, ...]:
        """Push coordinates over the e-basis through e_i -> e_{perm[i]}."""
        out = [Fraction(0)] * len(self.perm)
        for i, c in enumerate(coords):
            out[self.perm[i]] += c
        return tuple(out)


def _perm_order(perm: tuple[int, ...]) -> int:
    order = 1
    current = perm
    ident = tuple(range(len(perm)))
    while current != ident:
        current = tuple(perm[i] for i in current)
        order += 1
    return order


def outer_automorphisms(rs: RootSystem) -> list[OuterAut]:
    """All Cartan-matrix-preserving permutations, identity first.

    Exhaustive search; rank <= 8 keeps this cheap. The result is a group
    (closed under composition) containing the identity.
    """
    A = rs.cartan
    r = rs.rank
    found = []
    for perm in itertools.permutations(range(r)):
        if all(A[perm[i], perm[j]] == A[i, j] for i in range(r) for j in range(r)):
            found.append(OuterAut(perm=perm, order=_perm_order(perm)))
    found.sort(key=lambda t: (t.order, t.perm))
    return found


@dataclass(frozen=True)
class FoldingData:
    """Orbit-averaged root data for a diagram automorphism.

    f_j = (1/|O_j|) sum_{i in O_j} e_i span the tau-invariant subspace; p_N
    and p_D are the orthogonal projections onto the invariant subspace and its
    complement.
    """

    rs: RootSystem
    tau: OuterAut
    orbits: tuple[tuple[int, ...], ...]
    folded_roots: np.ndarray            # (d_N, r) rows = f_j
    folded_root_coords: tuple[tuple[Fraction, ...], ...]
    folded_norms_sq: tuple[Fraction, ...]
    folded_cartan: np.ndarray           # (d_N, d_N) int
    folded_type: str                    # e.g. "C2"; B2/C2 named by folded scale
    d_N: int
    d_D: int
    p_N: np.ndarray                     # (r, r)
    p_D: np.ndarray
    kappa_sq: Fraction
    I_tau: frozenset[int]               # orbit indices j with |f_j|^2 == 2
    rho_tau: np.ndarray

    @property
    def invariant_basis(self) -> np.ndarray:
        """Orthonormal basis of the invariant subspace, rows = basis vectors."""
        f = self.folded_roots
        q, _ = np.linalg.qr(f.T)
        return q[:, : self.d_N].T


def _pair_coords(rs: RootSystem, u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    """Exact <u, v> for coordinate vectors over the simple-root basis."""
    total = Fraction(0)
    for i, ui in enumerate(u):
        if ui == 0:
            continue
        for j, vj in enumerate(v):
            if vj != 0:
                total += ui * vj * rs.gram[i][j]
    return total


def _orbits_of(perm: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    seen = set()
    orbits = []
    for i in range(len(perm)):
        if i in seen:
            continue
        orbit = [i]
        seen.add(i)
        j = perm[i]
        while j != i:
            orbit.append(j)
            seen.add(j)
            j = perm[j]
        orbits.append(tuple(sorted(orbit)))
    orbits.sort(key=lambda o: o[0])
    return tuple(orbits)


def _canonical_cartan(family: str, rank: int) -> np.ndarray | None:
    """Cartan matrix for naming folded systems; extends B/C below the LieType
    rank floors (B2 and C2 are transposes of each other) and returns None for
    invalid (family, rank)."""
    if family in ("B", "C") and rank == 2:
        A = np.array([[2, -1], [-2, 2]], dtype=np.int64)
        return A if family == "B" else A.T.copy()
    try:
        return cartan_matrix(LieType(family, rank))
    except ValueError:
        return None


def _identify_folded_type(folded_cartan: np.ndarray, kappa_sq: Fraction) -> str:
    """Name the folded Cartan matrix up to simultaneous node permutation.

    B2/C2 share one permutation class; they are told apart by the folded
    scale (kappa^2 = 2 -> C2, kappa^2 = 1 -> B2), matching the standard
    folding table. Rank-1 folds are reported as A1.
    """
    d = folded_cartan.shape[0]
    if d == 1:
        if folded_cartan[0, 0] != 2:
            raise ValueError("invalid rank-1 folded Cartan matrix")
        return "A1"
    candidates = []
    for fam in "ABCDEFG":
        target = _canonical_cartan(fam, d)
        if target is None:
            continue
        for perm in itertools.permutations(range(d)):
            if all(target[perm[i], perm[j]] == folded_cartan[i, j]
                   for i in range(d) for j in range(d)):
                candidates.append(fam)
                break
    if not candidates:
        raise ValueError(f"folded Cartan matrix matches no simple type:\n{folded_cartan}")
    if d == 2 and set(candidates) >= {"B", "C"}:
        return ("C" if kappa_sq == 2 else "B") + "2"
    # Otherwise the permutation class is unique.
    return f"{candidates[0]}{d}"


def fold(rs: RootSystem, tau: OuterAut) -> FoldingData:
    """Fold ``rs`` along the diagram automorphism ``tau``.

    Averages the simple roots over tau-orbits; the averaged roots are simple
    roots of a (generally non-simply-laced) system inside the invariant
    subspace. For tau = id this returns the original data with f_j = e_j.
    """
    A = rs.cartan
    r = rs.rank
    if sorted(tau.perm) != list(range(r)):
        raise ValueError("tau.perm is not a permutation of the node set")
    if not all(A[tau.perm[i], tau.perm[j]] == A[i, j] for i in range(r) for j in range(r)):
        raise ValueError("tau does not preserve the Cartan matrix")

    orbits = _orbits_of(tau.perm)
    d_N = len(orbits)

    f_coords = []
    for orbit in orbits:
        size = len(orbit)
        row = [Fraction(0)] * r
        for i in orbit:
            row[i] = Fraction(1, size)
        f_coords.append(tuple(row))
    f_coords = tuple(f_coords)

    f_norms = tuple(_pair_coords(rs, c, c) for c in f_coords)
    folded_cartan = np.zeros((d_N, d_N), dtype=np.int64)
    for a in range(d_N):
        for b in range(d_N):
            val = 2 * _pair_coords(rs, f_coords[a], f_coords[b]) / f_norms[a]
            if val.denominator != 1:
                raise AssertionError("folded Cartan entry is not an integer")
            folded_cartan[a, b] = int(val)

    kappa_sq = max(f_norms)
    folded_type = _identify_folded_type(folded_cartan, kappa_sq)
    I_tau = frozenset(j for j, n in enumerate(f_norms) if n == 2)

    folded_roots = np.array([[float(c) for c in row] for row in f_coords]) @ rs.roots

    T = tau.matrix(rs)
    p_N = sum(np.linalg.matrix_power(T, k) for k in range(tau.order)) / tau.order
    p_N = (p_N + p_N.T) / 2  # enforce exact symmetry of the float projection
    p_D = np.eye(r) - p_N

    # rho_tau in the invariant span: solve <rho_tau, f_j> = |f_j|^2/2 exactly.
    gram_f = [[_pair_coords(rs, f_coords[a], f_coords[b]) for b in range(d_N)] for a in range(d_N)]
    rhs = [f_norms[a] / 2 for a in range(d_N)]
    ginv = _exact_inverse(gram_f)
    x = [sum(ginv[a][b] * rhs[b] for b in range(d_N)) for a in range(d_N)]
    rho_tau = np.zeros(r)
    for a in range(d_N):
        rho_tau += float(x[a]) * folded_roots[a]

    return FoldingData(
        rs=rs,
        tau=tau,
        orbits=orbits,
        folded_roots=folded_roots,
        folded_root_coords=f_coords,
        folded_norms_sq=f_norms,
        folded_cartan=folded_cartan,
        folded_type=folded_type,
        d_N=d_N,
        d_D=r - d_N,
        p_N=p_N,
        p_D=p_D,
        kappa_sq=kappa_sq,
        I_tau=I_tau,
        rho_tau=rho_tau,
    )


@dataclass(frozen=True)
class BackgroundCharge:
    """Background charge Q = gamma*rho + (2/gamma)*rho^v and its folded
    companion Q_tau = gamma*rho_tau + (2/gamma)*rho."""

    gamma: float
    Q: np.ndarray
    Q_tau: np.ndarray

    def norm_sq(self) -> float:
        return float(self.Q @ self.Q)

    def central_charge(self, rank: int) -> float:
        return rank + 6.0 * self.norm_sq()


GAMMA_INTERVAL = "(0, sqrt(2))"


def background_charges(rs: RootSystem, folding: FoldingData, gamma: float) -> BackgroundCharge:
    """Background charges at coupling ``gamma`` in (0, sqrt 2)."""
    if not 0 < gamma < np.sqrt(2):
        raise ValueError(f"coupling constant must lie in {GAMMA_INTERVAL}, got {gamma}")
    Q = gamma * rs.weyl_vector + (2.0 / gamma) * rs.co_weyl_vector
    Q_tau = gamma * folding.rho_tau + (2.0 / gamma) * rs.weyl_vector
    return BackgroundCharge(gamma=gamma, Q=Q, Q_tau=Q_tau)


def conformal_weight(rs: RootSystem, gamma: float, alpha: np.ndarray) -> float:
    """Scaling weight <alpha/2, Q - alpha/2> of the exponential with charge alpha."""
    if not 0 < gamma < np.sqrt(2):
        raise ValueError(f"coupling constant must lie in {GAMMA_INTERVAL}, got {gamma}")
    Q = gamma * rs.weyl_vector + (2.0 / gamma) * rs.co_weyl_vector
    alpha = np.asarray(alpha, dtype=float)
    return float(alpha @ (Q - alpha / 2) / 2)


# ---------------------------------------------------------------------------
# Serialization: rationals rendered "p/q", matrices row-major.

def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _frac_parse(s: str) -> Fraction:
    return Fraction(s)


def root_system_to_dict(rs: RootSystem) -> dict:
    r = rs.rank
    return {
        "family": rs.lie_type.family,
        "rank": r,
        "cartan": [int(rs.cartan[i, j]) for i in range(r) for j in range(r)],
        "norms_sq": [_frac_str(n) for n in rs.norms_sq],
        "gram": [_frac_str(rs.gram[i][j]) for i in range(r) for j in range(r)],
        "fund_weight_coords": [_frac_str(c) for row in rs.fund_weight_coords for c in row],
        "co_fund_weight_coords": [_frac_str(c) for row in rs.co_fund_weight_coords for c in row],
    }


def root_system_from_dict(doc: dict) -> RootSystem:
    lie_type = LieType(doc["family"], int(doc["rank"]))
    rs = build_root_system(lie_type)
    r = rs.rank
    stored = np.array(doc["cartan"], dtype=np.int64).reshape(r, r)
    if not np.array_equal(stored, rs.cartan):
        raise ValueError("stored Cartan matrix disagrees with canonical data")
    for flat_key, exact in (
        ("norms_sq", list(rs.norms_sq)),
        ("gram", [g for row in rs.gram for g in row]),
    ):
        if [_frac_parse(s) for s in doc[flat_key]] != exact:
            raise ValueError(f"stored {flat_key} disagrees with canonical data")
    return rs


def folding_to_dict(folding: FoldingData) -> dict:
    return {
        "source": str(folding.rs.lie_type),
        "tau_perm": list(folding.tau.perm),
        "tau_order": folding.tau.order,
        "orbits": [list(o) for o in folding.orbits],
        "folded_type": folding.folded_type,
        "d_N": folding.d_N,
        "d_D": folding.d_D,
        "kappa_sq": _frac_str(folding.kappa_sq),
        "folded_norms_sq": [_frac_str(n) for n in folding.folded_norms_sq],
        "folded_cartan": [int(x) for x in folding.folded_cartan.ravel()],
        "I_tau": sorted(folding.I_tau),
    }


def dump_root_system(rs: RootSystem, path) -> None:
    with open(path, "w") as fh:
        json.dump(root_system_to_dict(rs), fh, indent=1)


def load_root_system(path) -> RootSystem:
    with open(path) as fh:
        return root_system_from_dict(json.load(fh))
