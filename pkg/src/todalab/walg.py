"""Symbolic differential polynomials in the derivatives of a vector-valued
chiral field, with exact rational coefficients that are polynomials in formal
coupling parameters.

Atoms are pairings Y[k,i] = <e_i, D^k Psi> of the k-th derivative with the
i-th simple root; arbitrary vector slots expand bilinearly over exact
simple-root coordinates.  The only noncommutativity retained is the
derivation rule D.(f X) = f.(D X) + (D f).X against operator composition;
atom factors commute (no normal ordering), which is the level of structure
the reflection-parity statements live at.

Main entry points: miura_currents (operator-product expansion of the
factorized covariant derivative), stress_tensor, apply_tau, parity_correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .rootdata import OuterAut, RootSystem

__all__ = [
    "QPoly",
    "DiffPoly",
    "Current",
    "miura_currents",
    "sl_weights",
    "stress_tensor",
    "apply_tau",
    "parity_correct",
    "ParityFailure",
]

MAX_MIURA_N = 6  # symbolic blowup guard


# ---------------------------------------------------------------------------
# Coefficient ring: polynomials over Fraction in nvars formal variables.

class QPoly:
    """Multivariate polynomial with Fraction coefficients, dict-backed:
    {exponent tuple: coefficient}."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict | None = None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for exps, c in terms.items():
                c = Fraction(c)
                if c != 0:
                    self.terms[tuple(exps)] = c

    @classmethod
    def const(cls, nvars: int, c) -> "QPoly":
        return cls(nvars, {(0,) * nvars: Fraction(c)})

    @classmethod
    def var(cls, nvars: int, index: int, power: int = 1) -> "QPoly":
        exps = [0] * nvars
        exps[index] = power
        return cls(nvars, {tuple(exps): Fraction(1)})

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "QPoly") -> "QPoly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e, Fraction(0)) + c
            if s == 0:
                out.pop(e, None)
            else:
                out[e] = s
        return QPoly(self.nvars, out)

    def __neg__(self) -> "QPoly":
        return QPoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "QPoly") -> "QPoly":
        return self + (-other)

    def __mul__(self, other: "QPoly") -> "QPoly":
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(e, Fraction(0)) + c1 * c2
                if s == 0:
                    out.pop(e, None)
                else:
                    out[e] = s
        return QPoly(self.nvars, out)

    def scale(self, c) -> "QPoly":
        c = Fraction(c)
        if c == 0:
            return QPoly(self.nvars)
        return QPoly(self.nvars, {e: v * c for e, v in self.terms.items()})

    def evaluate(self, values) -> Fraction:
        total = Fraction(0)
        for exps, c in self.terms.items():
            term = c
            for v, p in zip(values, exps):
                term *= Fraction(v) ** p
            total += term
        return total

    def __eq__(self, other) -> bool:
        return isinstance(other, QPoly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def pretty(self, names) -> str:
        if not self.terms:
            return "0"
        chunks = []
        for exps, c in sorted(self.terms.items()):
            factors = [str(c)]
            for name, p in zip(names, exps):
                if p == 1:
                    factors.append(name)
                elif p > 1:
                    factors.append(f"{name}^{p}")
            chunks.append("*".join(factors))
        return " + ".join(chunks)


# ---------------------------------------------------------------------------
# Differential polynomials.

def _merge_monomials(m1: tuple, m2: tuple) -> tuple:
    return tuple(sorted(m1 + m2))


class DiffPoly:
    """Canonical-form differential polynomial: {monomial: QPoly} with
    monomial = sorted tuple of atoms (k, i), k >= 1 derivative order,
    i a simple-root index."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict | None = None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for mono, poly in terms.items():
                if not poly.is_zero():
                    self.terms[tuple(sorted(mono))] = poly

    @classmethod
    def zero(cls, nvars: int) -> "DiffPoly":
        return cls(nvars)

    @classmethod
    def one(cls, nvars: int) -> "DiffPoly":
        return cls(nvars, {(): QPoly.const(nvars, 1)})

    @classmethod
    def atom(cls, nvars: int, k: int, i: int, coeff=1) -> "DiffPoly":
        return cls(nvars, {((k, i),): QPoly.const(nvars, coeff)})

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "DiffPoly") -> "DiffPoly":
        out = dict(self.terms)
        for m, p in other.terms.items():
            s = out.get(m)
            s = p if s is None else s + p
            if s.is_zero():
                out.pop(m, None)
            else:
                out[m] = s
        return DiffPoly(self.nvars, out)

    def __neg__(self) -> "DiffPoly":
        return DiffPoly(self.nvars, {m: -p for m, p in self.terms.items()})

    def __sub__(self, other: "DiffPoly") -> "DiffPoly":
        return self + (-other)

    def __mul__(self, other: "DiffPoly") -> "DiffPoly":
        out: dict = {}
        for m1, p1 in self.terms.items():
            for m2, p2 in other.terms.items():
                m = _merge_monomials(m1, m2)
                prod = p1 * p2
                s = out.get(m)
                s = prod if s is None else s + prod
                if s.is_zero():
                    out.pop(m, None)
                else:
                    out[m] = s
        return DiffPoly(self.nvars, out)

    def scale(self, c) -> "DiffPoly":
        return DiffPoly(self.nvars, {m: p.scale(c) for m, p in self.terms.items()})

    def scale_poly(self, q: QPoly) -> "DiffPoly":
        return DiffPoly(self.nvars, {m: p * q for m, p in self.terms.items()})

    def derivative(self) -> "DiffPoly":
        """Leibniz derivation: D(Y[k,i]) = Y[k+1,i], coefficients constant."""
        out = DiffPoly(self.nvars)
        for mono, poly in self.terms.items():
            for idx, (k, i) in enumerate(mono):
                bumped = mono[:idx] + ((k + 1, i),) + mono[idx + 1:]
                out = out + DiffPoly(self.nvars, {tuple(sorted(bumped)): poly})
        return out

    def nth_derivative(self, n: int) -> "DiffPoly":
        out = self
        for _ in range(n):
            out = out.derivative()
        return out

    def apply_index_perm(self, perm) -> "DiffPoly":
        """Relabel atoms Y[k,i] -> Y[k, perm[i]] (diagram automorphism)."""
        out: dict = {}
        for mono, poly in self.terms.items():
            new = tuple(sorted((k, perm[i]) for k, i in mono))
            s = out.get(new)
            s = poly if s is None else s + poly
            if s.is_zero():
                out.pop(new, None)
            else:
                out[new] = s
        return DiffPoly(self.nvars, out)

    def weights(self) -> set[int]:
        """Total derivative weights sum(k) present across monomials."""
        return {sum(k for k, _ in m) for m in self.terms}

    def top_multilinear(self) -> "DiffPoly":
        """Terms whose atoms are all first derivatives (the leading part)."""
        return DiffPoly(self.nvars, {m: p for m, p in self.terms.items()
                                     if all(k == 1 for k, _ in m)})

    def evaluate(self, atom_values, var_values) -> Fraction:
        """Exact rational evaluation: atom_values maps (k, i) -> Fraction."""
        total = Fraction(0)
        for mono, poly in self.terms.items():
            term = poly.evaluate(var_values)
            for atom in mono:
                term *= Fraction(atom_values[atom])
            total += term
        return total

    def __eq__(self, other) -> bool:
        return isinstance(other, DiffPoly) and self.terms == other.terms

    def pretty(self, names=("q",)) -> str:
        if not self.terms:
            return "0"
        lines = []
        for mono in sorted(self.terms):
            poly = self.terms[mono]
            factors = "".join(f" Y[{k},{i + 1}]" for k, i in mono) or " 1"
            lines.append(f"({poly.pretty(names)})" + factors)
        return "\n+ ".join(lines)


def pairing(rs: RootSystem, coords, k: int, nvars: int = 1) -> DiffPoly:
    """<v, D^k Psi> for v with exact coordinates over the simple-root basis."""
    out = DiffPoly(nvars)
    for i, c in enumerate(coords):
        c = Fraction(c)
        if c != 0:
            out = out + DiffPoly.atom(nvars, k, i, c)
    return out


def kinetic_form(rs: RootSystem, nvars: int = 1) -> DiffPoly:
    """<D Psi, D Psi> expanded over atoms: Y^T G^{-1} Y with G the Gram
    matrix of the simple roots (exact rational inverse)."""
    ginv = rs.co_fund_weight_coords  # row i = coordinates of omega_i^v = (G^{-1}) row
    out = DiffPoly(nvars)
    r = rs.rank
    for i in range(r):
        for j in range(r):
            c = ginv[i][j]
            if c != 0:
                out = out + (DiffPoly.atom(nvars, 1, i) * DiffPoly.atom(nvars, 1, j)).scale(c)
    return out


@dataclass(frozen=True)
class Current:
    """Homogeneous differential polynomial of fixed derivative weight."""

    spin: int
    poly: DiffPoly
    var_names: tuple = ("q",)

    def __post_init__(self):
        w = self.poly.weights()
        if w and w != {self.spin}:
            raise ValueError(f"current is not weight-{self.spin} homogeneous: {w}")

    def pretty(self) -> str:
        return self.poly.pretty(self.var_names)


# ---------------------------------------------------------------------------
# Miura construction for sl_n.

def sl_weights(n: int) -> list[tuple[Fraction, ...]]:
    """Coordinates (over the simple-root basis of A_{n-1}) of the defining
    weights h_i = omega_1 - e_1 - ... - e_{i-1}; they sum to zero."""
    r = n - 1
    # (A^{-1})_{j1} = (n - j)/n for A_{n-1}: omega_1 = sum_j (n-j)/n e_j
    omega1 = [Fraction(n - j, n) for j in range(1, n)]
    hs = []
    for i in range(1, n + 1):
        coords = list(omega1)
        for k in range(i - 1):
            coords[k] -= 1
        hs.append(tuple(coords))
    assert all(sum(h[j] for h in hs) == 0 for j in range(r))
    return hs


def miura_currents(n: int, rs: RootSystem | None = None) -> dict[int, Current]:
    """Expansion of the ordered product prod_{i=1..n} (q D + <h_i, D Psi>) as
    sum_s W^{(s)} (q D)^{n-s}; returns currents of spins 2..n.

    The expansion uses D . M_f = M_f . D + M_{Df}; coefficients live in
    Q[q]. W^{(0)} = 1 and W^{(1)} = 0 (the weights sum to zero).
    """
    if not 2 <= n <= MAX_MIURA_N:
        raise ValueError(f"n must be in [2, {MAX_MIURA_N}]")
    from .rootdata import LieType, build_root_system

    if rs is None:
        rs = build_root_system(LieType("A", n - 1))
    if rs.lie_type.family != "A" or rs.rank != n - 1:
        raise ValueError(f"the factorized construction here is for A_{n - 1}")
    nv = 1
    hs = sl_weights(n)
    a = [pairing(rs, h, 1, nv) for h in hs]

    # operator = sum_j coeff[j] (qD)^j, as a list of DiffPolys
    coeff: list[DiffPoly] = [DiffPoly.one(nv)]
    for i in range(n):
        shifted = [DiffPoly.zero(nv)] + coeff            # compose with qD
        new = [DiffPoly.zero(nv) for _ in range(len(coeff) + 1)]
        for j, c in enumerate(shifted):
            new[j] = new[j] + c
        # compose with multiplication by a_i: (qD)^l . M_a =
        #   sum_{t<=l} C(l,t) q^{l-t} M_{D^{l-t} a} (qD)^t
        for l, c in enumerate(coeff):
            for t in range(l + 1):
                binom = math.comb(l, t)
                da = a[i].nth_derivative(l - t)
                qpow = QPoly.var(nv, 0, l - t).scale(binom) if l > t else QPoly.const(nv, binom)
                new[t] = new[t] + (c * da).scale_poly(qpow)
        coeff = new

    if not coeff[-1] == DiffPoly.one(nv):
        raise AssertionError("leading operator coefficient must be 1")
    if not coeff[n - 1].is_zero():
        raise AssertionError("spin-1 coefficient must vanish (weights sum to zero)")
    return {s: Current(spin=s, poly=coeff[n - s]) for s in range(2, n + 1)}


def stress_tensor(rs: RootSystem, two_couplings: bool = False) -> Current:
    """<Q, D^2 Psi> - <D Psi, D Psi> with Q = q rho (simply-laced), or
    Q = g rho + h rho_vee over two formal couplings (g, h) = (gamma, 2/gamma)
    when ``two_couplings`` (needed when rho != rho_vee)."""
    simply_laced = all(x == 2 for x in rs.norms_sq)
    if not simply_laced and not two_couplings:
        raise ValueError("non-simply-laced charge needs two_couplings=True")
    if two_couplings:
        nv = 2
        charge = (pairing(rs, rs.rho_coords, 2, nv).scale_poly(QPoly.var(nv, 0))
                  + pairing(rs, rs.rho_vee_coords, 2, nv).scale_poly(QPoly.var(nv, 1)))
        names = ("g", "h")
    else:
        nv = 1
        charge = pairing(rs, rs.rho_coords, 2, nv).scale_poly(QPoly.var(nv, 0))
        names = ("q",)
    poly = charge - kinetic_form(rs, nv)
    return Current(spin=2, poly=poly, var_names=names)


def apply_tau(current: Current, tau: OuterAut) -> Current:
    """Field relabeling Psi -> tau Psi: atoms Y[k,i] -> Y[k, perm(i)]."""
    return Current(spin=current.spin,
                   poly=current.poly.apply_index_perm(tau.perm),
                   var_names=current.var_names)


class ParityFailure(RuntimeError):
    """The tau-image failed to decompose over lower currents; the involution
    preserves the current algebra, so this can only indicate a bug."""


def _basis_products(currents: dict[int, Current], s: int) -> list[tuple[tuple, DiffPoly]]:
    """All products prod_j D^{m_j} W^{(s_j)} of total weight s from strictly
    lower spins; returns (label, polynomial) pairs."""
    spins = sorted(k for k in currents if k < s)
    results: list[tuple[tuple, DiffPoly]] = []

    def rec(remaining: int, min_spin: int, factors: tuple):
        if remaining == 0:
            if factors:
                poly = None
                for sj, mj in factors:
                    p = currents[sj].poly.nth_derivative(mj)
                    poly = p if poly is None else poly * p
                results.append((factors, poly))
            return
        for sj in spins:
            if sj < min_spin or sj > remaining:
                continue
            for mj in range(remaining - sj + 1):
                # enforce nondecreasing (spin, deriv) to enumerate multisets
                if factors and (sj, mj) < factors[-1]:
                    continue
                rec(remaining - sj - mj, sj, factors + ((sj, mj),))

    rec(s, spins[0] if spins else s + 1, ())
    return results


def _solve_fraction_system(rows: list[list[Fraction]], rhs: list[Fraction]):
    """Exact least-structure solve of an overdetermined consistent system;
    returns the solution or None if inconsistent."""
    n_rows = len(rows)
    n_cols = len(rows[0]) if rows else 0
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    pivots = []
    row = 0
    for col in range(n_cols):
        piv = next((r for r in range(row, n_rows) if aug[r][col] != 0), None)
        if piv is None:
            continue
        aug[row], aug[piv] = aug[piv], aug[row]
        inv = Fraction(1) / aug[row][col]
        aug[row] = [x * inv for x in aug[row]]
        for r in range(n_rows):
            if r != row and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[row])]
        pivots.append(col)
        row += 1
        if row == n_rows:
            break
    for r in range(row, n_rows):
        if aug[r][n_cols] != 0:
            return None  # inconsistent
    sol = [Fraction(0)] * n_cols
    for r, col in enumerate(pivots):
        sol[col] = aug[r][n_cols]
    return sol


def parity_correct(currents: dict[int, Current], tau: OuterAut) -> tuple[dict[int, Current], dict[int, int]]:
    """Redefine the currents so each is an exact eigenvector of the diagram
    involution: W'[tau Psi] = sign_s W'[Psi].

    Proceeds by spin: decompose the tau-image over {W^(s)} and derivative
    products of the already-corrected lower currents (exact linear solve in
    canonical coordinates; inconsistency raises ParityFailure), read off the
    eigenvalue, and replace W by its eigenprojection (W + sign * tau W)/2.
    Returns (corrected currents, {spin: sign}).
    """
    if tau.order not in (1, 2):
        raise ValueError("parity correction applies to involutive symmetries")
    if tau.order == 1:
        return dict(currents), {s: 1 for s in currents}

    corrected: dict[int, Current] = {}
    signs: dict[int, int] = {}
    for s in sorted(currents):
        W = currents[s]
        T = apply_tau(W, tau)
        basis = _basis_products(corrected, s)
        # unknowns: lambda, then coefficients c_{B,t} q^t for t = 0..s
        deg_max = s
        monomials = set(T.poly.terms) | set(W.poly.terms)
        for _, bp in basis:
            monomials |= set(bp.terms)
        monomials = sorted(monomials)
        qpowers = range(deg_max + 1)
        n_cols = 1 + len(basis) * len(qpowers)
        rows = []
        rhs = []
        for mono in monomials:
            target = T.poly.terms.get(mono, QPoly(1))
            w_poly = W.poly.terms.get(mono, QPoly(1))
            all_exps = set(target.terms) | set(w_poly.terms)
            for _, bp in basis:
                base_poly = bp.terms.get(mono, QPoly(1))
                all_exps |= {(e[0] + t,) for e in base_poly.terms for t in qpowers}
            for exps in sorted(all_exps):
                row = [Fraction(0)] * n_cols
                row[0] = w_poly.terms.get(exps, Fraction(0))
                for b_idx, (_, bp) in enumerate(basis):
                    base_poly = bp.terms.get(mono, QPoly(1))
                    for t in qpowers:
                        src = (exps[0] - t,)
                        if src[0] >= 0:
                            row[1 + b_idx * len(qpowers) + t] = base_poly.terms.get(
                                src, Fraction(0))
                rows.append(row)
                rhs.append(target.terms.get(exps, Fraction(0)))
        sol = _solve_fraction_system(rows, rhs)
        if sol is None:
            raise ParityFailure(
                f"spin-{s} tau-image does not decompose over lower currents")
        lam = sol[0]
        if lam not in (1, -1):
            raise ParityFailure(f"spin-{s} leading eigenvalue is {lam}, not ±1")
        lam = int(lam)
        # eigenprojection keeps the generator and is an exact eigenvector
        new_poly = (W.poly + T.poly.scale(lam)).scale(Fraction(1, 2))
        Wn = Current(spin=s, poly=new_poly, var_names=W.var_names)
        check = apply_tau(Wn, tau).poly - Wn.poly.scale(lam)
        if not check.is_zero():
            raise ParityFailure(f"spin-{s} corrected current is not an eigenvector")
        if Wn.poly.top_multilinear().is_zero():
            raise ParityFailure(f"spin-{s} correction destroyed the leading part")
        corrected[s] = Wn
        signs[s] = lam
    return corrected, signs
