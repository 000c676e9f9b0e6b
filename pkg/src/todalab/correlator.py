"""Correlation-function engine: existence bounds, conformal data, charge
reduction, constant-mode integration, and Monte Carlo estimation.

Estimates are reported in the lattice-Wick convention with the
partition-function normalization omitted; every report carries that
convention block. The reduction of charge insertions follows the
exponential-tilt identity: insertions become a deterministic drift H plus the
prefactor C0 = exp(sum of pairwise covariances + half the diagonal
variances), and the potential masses are tilted accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chaos, fields, zeromode
from .fields import FieldEnsemble, FieldKind
from .rootdata import (BackgroundCharge, FoldingData, LieType, RootSystem,
                       background_charges, build_root_system, conformal_weight,
                       fold, outer_automorphisms)
from .surface import DiscreteSurface, GreenKind, graph_laplacian

__all__ = [
    "InsertionSpec",
    "CorrelatorSpec",
    "SeibergReport",
    "Estimate",
    "seiberg_check",
    "conformal_data",
    "girsanov_reduce",
    "zero_mode_weights",
    "estimate_correlator",
    "weyl_shift_check",
    "spec_to_dict",
    "spec_from_dict",
]

CONVENTIONS = {
    "chaos_normalization": "lattice-Wick",
    "partition_normalization": "omitted",
}


@dataclass(frozen=True)
class InsertionSpec:
    """Charge insertions: bulk list of (vertex, weight in the Cartan space),
    boundary list of (boundary vertex, weight in the invariant subspace),
    ordered along each boundary component."""

    bulk: tuple = ()
    boundary: tuple = ()

    def all_vertices(self):
        return [x for x, _ in self.bulk] + [s for s, _ in self.boundary]


@dataclass
class CorrelatorSpec:
    surface: DiscreteSurface
    rs: RootSystem
    folding: FoldingData
    gamma: float
    mu_bulk: np.ndarray                 # (r,) positive
    mu_boundary: list | None            # per component: (n_arcs, d_N) complex
    insertions: InsertionSpec
    conformal_restriction: bool = True
    name: str = "correlator"

    def __post_init__(self):
        self.mu_bulk = np.asarray(self.mu_bulk, dtype=float)
        r = self.rs.rank
        if self.mu_bulk.shape != (r,):
            raise ValueError(f"mu_bulk must have {r} entries")
        if np.any(self.mu_bulk <= 0):
            raise ValueError("bulk cosmological constants must be positive")
        if self.mu_boundary is not None:
            comps = self.surface.boundary
            if len(self.mu_boundary) != len(comps):
                raise ValueError("one boundary-constant block per boundary component")
            self.mu_boundary = [np.atleast_2d(np.asarray(b, dtype=complex))
                                for b in self.mu_boundary]
            for b in self.mu_boundary:
                if b.shape[1] != self.folding.d_N:
                    raise ValueError("boundary constants are indexed by folded roots")
                if np.any(b.real < 0):
                    raise ValueError("boundary constants need nonnegative real part")
        bverts = self.surface.boundary_set()
        seen = set()
        for x, _ in self.insertions.bulk:
            if x in seen:
                raise ValueError("insertion vertices must be distinct")
            seen.add(x)
        pD = self.folding.p_D
        for s, beta in self.insertions.boundary:
            if s in seen:
                raise ValueError("insertion vertices must be distinct")
            seen.add(s)
            if s not in bverts:
                raise ValueError(f"boundary insertion at non-boundary vertex {s}")
            if np.abs(pD @ np.asarray(beta, dtype=float)).max() > 1e-10:
                raise ValueError("boundary weights must lie in the invariant subspace")
        if self.conformal_restriction and not self.folding.tau.is_identity:
            short = set(range(self.folding.d_N)) - set(self.folding.I_tau)
            if self.mu_boundary is not None:
                for b in self.mu_boundary:
                    for j in short:
                        if np.any(b[:, j] != 0):
                            raise ValueError(
                                "conformal restriction: boundary constants must vanish "
                                f"for folded roots with squared length != 2 (index {j})")

    @property
    def charge(self) -> BackgroundCharge:
        return background_charges(self.rs, self.folding, self.gamma)

    def field_kind(self) -> FieldKind:
        return FieldKind.CARDY if self.surface.has_boundary else FieldKind.CLOSED

    def shifted_charge_sum(self) -> np.ndarray:
        """s̄ = Σ alpha_k + (1/2) Σ beta_l − Q χ."""
        Q = self.charge.Q
        s = -self.surface.euler_char * Q
        for _, a in self.insertions.bulk:
            s = s + np.asarray(a, dtype=float)
        for _, b in self.insertions.boundary:
            s = s + np.asarray(b, dtype=float) / 2
        return s


@dataclass(frozen=True)
class SeibergReport:
    condition_1_margins: np.ndarray     # <s̄, omega_i^v>, need > 0
    condition_2_margins: tuple          # per insertion: (label, <w − Q, e_i> array)
    verdict: bool

    def to_dict(self) -> dict:
        return {
            "condition_1_margins": self.condition_1_margins.tolist(),
            "condition_2_margins": [
                {"insertion": label, "margins": m.tolist()}
                for label, m in self.condition_2_margins
            ],
            "verdict": bool(self.verdict),
        }


def seiberg_check(spec: CorrelatorSpec) -> SeibergReport:
    """Exact existence bounds: the correlator is finite and nonzero iff all
    first margins are > 0 and all second margins are < 0."""
    rs = spec.rs
    Q = spec.charge.Q
    sbar = spec.shifted_charge_sum()
    margins1 = rs.co_fund_weights @ sbar
    margins2 = []
    for x, a in spec.insertions.bulk:
        margins2.append((f"bulk@{x}", rs.roots @ (np.asarray(a, dtype=float) - Q)))
    for s, b in spec.insertions.boundary:
        margins2.append((f"boundary@{s}", rs.roots @ (np.asarray(b, dtype=float) - Q)))
    verdict = bool(np.all(margins1 > 0) and all(np.all(m < 0) for _, m in margins2))
    return SeibergReport(condition_1_margins=margins1,
                         condition_2_margins=tuple(margins2), verdict=verdict)


def conformal_data(rs: RootSystem, gamma: float, alpha) -> tuple[float, float]:
    """(scaling weight of the charge-alpha exponential, central charge)."""
    delta = conformal_weight(rs, gamma, np.asarray(alpha, dtype=float))
    Q = gamma * rs.weyl_vector + (2.0 / gamma) * rs.co_weyl_vector
    return delta, rs.rank + 6.0 * float(Q @ Q)


def vertex_epsilon_power(weight, boundary: bool) -> float:
    """Lattice-regularization power of a charge-insertion operator:
    |alpha|^2/2 in the bulk, |beta|^2/4 on the boundary."""
    w = np.asarray(weight, dtype=float)
    return float(w @ w) / (4.0 if boundary else 2.0)


def girsanov_reduce(spec: CorrelatorSpec, ens: FieldEnsemble):
    """Absorb insertions into (log C0, drift H, s̄).

    H(v) = Σ_k kernel(v, x_k) alpha_k (+ half-weight boundary terms through
    the Neumann kernel); log C0 = Σ_{k<l} Cov_kl + (1/2) Σ_k Var_k with the
    lattice-Wick diagonal as the variance.
    """
    verts = spec.insertions.all_vertices()
    if len(set(verts)) != len(verts):
        raise ValueError("coincident insertions are not allowed")
    kind = spec.field_kind()
    charges = [(x, np.asarray(a, dtype=float)) for x, a in spec.insertions.bulk]
    charges += [(s, np.asarray(b, dtype=float) / 2) for s, b in spec.insertions.boundary]
    H = ens.drift_field(kind, charges)
    log_c0 = 0.0
    for k, (x, a) in enumerate(charges):
        for l, (y, b) in enumerate(charges):
            if k < l:
                log_c0 += ens.field_covariance(kind, a, b)[x, y]
            elif k == l:
                log_c0 += 0.5 * ens.field_covariance(kind, a, a)[x, x]
    return log_c0, H, spec.shifted_charge_sum()


def _boundary_arc_weights(spec: CorrelatorSpec) -> np.ndarray:
    """Per-boundary-vertex constants, (n_boundary, d_N) complex.

    Arcs run half-open from each insertion to the next along the stored
    cyclic order of the component; components without insertions take the
    single constant block.
    """
    d_N = spec.folding.d_N
    bverts = spec.surface.boundary_list()
    pos = {v: i for i, v in enumerate(bverts)}
    W = np.zeros((len(bverts), d_N), dtype=complex)
    by_comp: dict[int, list[int]] = {}
    comp_of = {}
    for ci, comp in enumerate(spec.surface.boundary):
        for v in comp:
            comp_of[v] = ci
    for s, _ in spec.insertions.boundary:
        by_comp.setdefault(comp_of[s], []).append(s)
    for ci, comp in enumerate(spec.surface.boundary):
        block = spec.mu_boundary[ci]
        ins = by_comp.get(ci, [])
        if not ins:
            if block.shape[0] != 1:
                raise ValueError("component without insertions takes one constant block")
            for v in comp:
                W[pos[v]] = block[0]
            continue
        order = {v: i for i, v in enumerate(comp)}
        ins_sorted = sorted(ins, key=lambda v: order[v])
        if block.shape[0] != len(ins_sorted):
            raise ValueError("need one constant block per boundary arc")
        marks = sorted(order[v] for v in ins_sorted)
        for v in comp:
            i = order[v]
            arc = np.searchsorted(marks, i, side="right") - 1
            if arc < 0:
                arc = len(marks) - 1  # wrap-around before the first insertion
            W[pos[v]] = block[arc]
    return W


def zero_mode_weights(spec: CorrelatorSpec, sbar: np.ndarray, bulk_Z: np.ndarray,
                      boundary_Z: np.ndarray | None, rel_tol: float = 1e-6,
                      divergence_override: bool = False) -> zeromode.ZeroModeResult:
    """Constant-mode integral per sample.

    bulk_Z: (S, r) tilted bulk masses (cosmological constants NOT included);
    boundary_Z: (S, d_N) tilted boundary masses with arc constants folded in,
    or None. Seiberg's first bound (folded margins) gates the integral unless
    the override is set.
    """
    fdata = spec.folding
    rs = spec.rs
    basis = fdata.invariant_basis          # (d_N, r) orthonormal rows
    svec = basis @ sbar
    rates = []
    coefs = []
    for i in range(rs.rank):
        rates.append(basis @ (spec.gamma * rs.roots[i]))
        coefs.append(spec.mu_bulk[i] * bulk_Z[:, i])
    if boundary_Z is not None:
        for j in range(fdata.d_N):
            rates.append(basis @ (spec.gamma * fdata.folded_roots[j] / 2))
            coefs.append(boundary_Z[:, j])
    R = np.array(rates)
    K = np.stack(coefs, axis=1)
    if not np.iscomplexobj(K):
        K = K.astype(float)
    # drop identically-zero potential directions (zero constants)
    keep = np.abs(K).max(axis=0) > 0
    return zeromode.integrate_batch(svec, R[keep], K[:, keep], rel_tol=rel_tol,
                                    divergence_override=divergence_override)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    log_value: float
    n_samples: int
    seed: int
    seiberg: SeibergReport
    diagnostics: dict
    conventions: dict = field(default_factory=lambda: dict(CONVENTIONS))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "log_value": self.log_value,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "seiberg": self.seiberg.to_dict(),
            "diagnostics": self.diagnostics,
            "conventions": self.conventions,
        }


def estimate_correlator(spec: CorrelatorSpec, n_samples: int, seed: int,
                        rel_tol: float = 1e-6, divergence_override: bool = False,
                        zero_mode_method: str = "quadrature") -> Estimate:
    """Monte Carlo estimate of the regularized correlation function.

    value = C0 * mean_samples I(tilted masses); deterministic for fixed
    (seed, n_samples). zero_mode_method "rank1_gamma" replaces the quadrature
    by the closed-form Gamma reduction (single potential term only); it is the
    independent cross-check path.
    """
    report = seiberg_check(spec)
    if not report.verdict and not divergence_override:
        raise ValueError("Seiberg bounds violated; refusing to estimate "
                         f"(margins {report.condition_1_margins})")
    ens = fields.make_ensemble(spec.surface, spec.rs, spec.folding, seed)
    kind = spec.field_kind()
    log_c0, H, sbar = girsanov_reduce(spec, ens)

    rs = spec.rs
    fdata = spec.folding
    gamma = spec.gamma
    bulk_specs = [chaos.bulk_spec(ens, gamma * rs.roots[i], chaos.Mode.WICK)
                  for i in range(rs.rank)]
    bulk_tilts = [H @ (gamma * rs.roots[i]) for i in range(rs.rank)]
    has_boundary_potential = (spec.surface.has_boundary and spec.mu_boundary is not None)
    if has_boundary_potential:
        bidx = spec.surface.boundary_list()
        arc_w = _boundary_arc_weights(spec)           # (n_b, d_N) complex
        bdry_specs = [chaos.boundary_spec(ens, gamma * fdata.folded_roots[j] / 2,
                                          chaos.Mode.WICK) for j in range(fdata.d_N)]
        bdry_tilts = [(H @ (gamma * fdata.folded_roots[j] / 2))[bidx]
                      for j in range(fdata.d_N)]
        if np.abs(arc_w.imag).max() == 0:
            arc_w = arc_w.real

    scales = []     # per-batch log-scale arrays
    mantissas = []  # per-batch mantissa arrays (complex when mu_boundary is)
    quad_err = 0.0
    nodes = 0
    diverged = False
    for _, X in fields.sample_batches(ens, kind, n_samples):
        S = X.shape[0]
        bulk_Z = np.empty((S, rs.rank))
        for i in range(rs.rank):
            bulk_Z[:, i] = chaos.bulk_masses(ens, kind, bulk_specs[i], X,
                                             tilt=bulk_tilts[i]).sum(axis=1)
        boundary_Z = None
        if has_boundary_potential:
            boundary_Z = np.empty((S, fdata.d_N), dtype=arc_w.dtype)
            for j in range(fdata.d_N):
                masses = chaos.boundary_masses(ens, kind, bdry_specs[j], X,
                                               tilt=bdry_tilts[j])
                boundary_Z[:, j] = masses @ arc_w[:, j]
        if zero_mode_method == "rank1_gamma":
            logw = _rank1_gamma_weights(spec, sbar, bulk_Z, boundary_Z)
            scales.append(logw)
            mantissas.append(np.ones_like(logw))
            continue
        zres = zero_mode_weights(spec, sbar, bulk_Z, boundary_Z, rel_tol=rel_tol,
                                 divergence_override=divergence_override)
        if zres.diverged:
            diverged = True
            break
        quad_err = max(quad_err, float(np.nanmax(zres.rel_err)))
        nodes += zres.nodes_used
        scales.append(zres.log_scale)
        mantissas.append(zres.mantissa)

    if diverged:
        diag = {"divergence_flag": True, "reason": "first Seiberg bound violated "
                "for the constant-mode integral"}
        return Estimate(value=float("nan"), stderr=float("nan"), log_value=float("nan"),
                        n_samples=n_samples, seed=seed, seiberg=report, diagnostics=diag)

    log_scale = np.concatenate(scales)
    mantissa = np.concatenate(mantissas)
    shift = float(log_scale.max())
    w = mantissa * np.exp(log_scale - shift)
    mean_w = w.mean()
    std_w = np.abs(w - mean_w).std(ddof=1) if np.iscomplexobj(w) else w.std(ddof=1)
    log_abs_value = log_c0 + shift + float(np.log(np.abs(mean_w)))
    stderr = float(np.exp(log_c0 + shift) * std_w / np.sqrt(n_samples))
    diag = {
        "divergence_flag": False,
        "quadrature_max_rel_err": quad_err,
        "quadrature_nodes": int(nodes),
        "log_c0": float(log_c0),
        "zero_mode_method": zero_mode_method,
        "kind": kind.value,
    }
    if np.iscomplexobj(w):
        phase = float(np.angle(mean_w))
        diag["value_imag"] = float(np.exp(log_abs_value) * np.sin(phase))
        value = float(np.exp(log_abs_value) * np.cos(phase))
    else:
        value = float(np.sign(mean_w.real) * np.exp(log_abs_value))
    return Estimate(value=value, stderr=stderr, log_value=float(log_abs_value),
                    n_samples=n_samples, seed=seed, seiberg=report, diagnostics=diag)


def _rank1_gamma_weights(spec, sbar, bulk_Z, boundary_Z):
    """Closed-form constant-mode weights for a single potential direction
    (rank-1 bulk-only): log I = -log a - (s/a) log(mu Z) + log Gamma(s/a)."""
    if spec.rs.rank != 1 or (boundary_Z is not None and np.abs(boundary_Z).max() > 0):
        raise ValueError("the Gamma reduction needs a single bulk potential term")
    basis = spec.folding.invariant_basis[0]
    s = float(basis @ sbar)
    a = float(basis @ (spec.gamma * spec.rs.roots[0]))
    if a < 0:  # basis orientation is arbitrary; the integral is not
        a, s = -a, -s
    coef = spec.mu_bulk[0] * bulk_Z[:, 0]
    import math

    return -math.log(a) - (s / a) * np.log(coef) + math.lgamma(s / a)


def weyl_shift_check(surface: DiscreteSurface, rs: RootSystem, gamma: float,
                     phi: np.ndarray, n_probes: int = 10, seed: int = 0) -> dict:
    """Exact lattice identities for the metric-change statistic
    Y = (1/4π) Σ_v (Δφ)_v <Q, X(v)> a_v (mesh functions carry no boundary
    flux, so the boundary term of the continuum statistic vanishes):

      E[Y^2]        = (|Q|^2 / 8π) Σ_edges c_vw (φ_v − φ_w)^2
      E[Y <u,X(x)>] = −(<Q,u>/2) (φ(x) − m(φ))

    Verified by linear algebra on the Green matrix; no sampling involved.
    """
    from .surface import green

    phi = np.asarray(phi, dtype=float)
    folding = fold(rs, outer_automorphisms(rs)[0])
    Q = background_charges(rs, folding, gamma).Q
    kind = GreenKind.NEUMANN if surface.has_boundary else GreenKind.CLOSED
    G = green(surface, kind).G
    L = graph_laplacian(surface)
    Lphi = L @ phi
    q_sq = float(Q @ Q)

    var_lhs = q_sq / (16 * np.pi**2) * float(Lphi @ G @ Lphi)
    dirichlet_energy = sum(c * (phi[v] - phi[w]) ** 2 for v, w, c in surface.edges)
    var_rhs = q_sq / (8 * np.pi) * dirichlet_energy

    m_phi = float(surface.area @ phi / surface.area.sum())
    shift_lhs = -(G @ Lphi) / (4 * np.pi)        # times <Q,u> for any probe u
    shift_rhs = -(phi - m_phi) / 2
    rng = np.random.default_rng(seed)
    probes = rng.integers(0, surface.n_vertices, size=n_probes)
    u = rng.standard_normal(rs.rank)
    qu = float(Q @ u)
    shift_err = float(np.abs(qu * shift_lhs[probes] - qu * shift_rhs[probes]).max())
    return {
        "variance_lhs": var_lhs,
        "variance_rhs": var_rhs,
        "variance_abs_err": abs(var_lhs - var_rhs),
        "shift_max_abs_err": shift_err,
        "probes": probes.tolist(),
    }


# ---------------------------------------------------------------------------
# Spec file format (JSON): surface ref or inline, lie type, gamma, tau
# permutation, mu arrays, insertions with weights in the simple-root basis.

def spec_to_dict(spec: CorrelatorSpec) -> dict:
    from .surface import surface_to_dict

    def coords_of(vec):
        # express an ambient vector over the simple-root basis
        coords = np.linalg.solve(spec.rs.roots.T, np.asarray(vec, dtype=float))
        return coords.tolist()

    doc = {
        "name": spec.name,
        "surface": surface_to_dict(spec.surface),
        "lie_type": str(spec.rs.lie_type),
        "gamma": spec.gamma,
        "tau_perm": list(spec.folding.tau.perm),
        "mu_bulk": spec.mu_bulk.tolist(),
        "mu_boundary": None,
        "insertions": {
            "bulk": [[int(x), coords_of(a)] for x, a in spec.insertions.bulk],
            "boundary": [[int(s), coords_of(b)] for s, b in spec.insertions.boundary],
        },
        "conformal_restriction": spec.conformal_restriction,
    }
    if spec.mu_boundary is not None:
        doc["mu_boundary"] = [
            {"re": b.real.tolist(), "im": b.imag.tolist()} for b in spec.mu_boundary
        ]
    return doc


def spec_from_dict(doc: dict) -> CorrelatorSpec:
    from .surface import surface_from_dict

    surface = surface_from_dict(doc["surface"])
    rs = build_root_system(LieType.parse(doc["lie_type"]))
    perm = tuple(doc["tau_perm"])
    tau = next(t for t in outer_automorphisms(rs) if t.perm == perm)
    folding = fold(rs, tau)
    mu_boundary = None
    if doc.get("mu_boundary") is not None:
        mu_boundary = [np.array(b["re"]) + 1j * np.array(b["im"])
                       for b in doc["mu_boundary"]]
    bulk = tuple((int(x), np.asarray(c, dtype=float) @ rs.roots)
                 for x, c in doc["insertions"]["bulk"])
    boundary = tuple((int(s), np.asarray(c, dtype=float) @ rs.roots)
                     for s, c in doc["insertions"]["boundary"])
    return CorrelatorSpec(
        surface=surface, rs=rs, folding=folding, gamma=float(doc["gamma"]),
        mu_bulk=np.asarray(doc["mu_bulk"], dtype=float), mu_boundary=mu_boundary,
        insertions=InsertionSpec(bulk=bulk, boundary=boundary),
        conformal_restriction=bool(doc.get("conformal_restriction", True)),
        name=doc.get("name", "correlator"),
    )
