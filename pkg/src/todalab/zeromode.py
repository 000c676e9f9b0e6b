"""Constant-mode integration over the invariant subspace.

For each Monte Carlo sample the weight is

    I(K) = ∫_{R^d} exp( s·t − Σ_m K_m e^{R_m·t} ) dt

in orthonormal coordinates t of the invariant subspace, with per-sample
positive coefficients K_m (tilted chaos masses times cosmological constants)
and fixed rate vectors R_m.  The log-integrand is strictly concave; the
integral is finite iff s lies in the interior of the positive span of the
rates (otherwise a divergence flag is raised, or a rejection if no override).

Pipeline per sample, fully vectorized over samples:
  1. damped Newton for the mode t*,
  2. Hessian whitening w = Bᵀ(t − t*),
  3. ray probes (axes + diagonals) for the log-drop box |log g| >= L,
  4. nested Gauss–Legendre tensor quadrature with node doubling until the
     requested relative tolerance is met, with an outer-shell decay check
     that re-expands underestimated boxes.

The node reduction runs through the selected kernel backend (compiled or
numpy twin); complex coefficients (boundary constants with nonnegative real
part) always take the numpy path.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.optimize

from . import kernels

__all__ = ["ZeroModeResult", "integrate_batch", "coverage_margin", "gamma_closed_form"]

DECAY_LOG = 45.0          # box edge at log-drop >= DECAY_LOG from the mode
MAX_BOX_ROUNDS = 3


def _de_params(d: int) -> tuple[float, tuple[int, ...]]:
    """sinh half-range and node schedule per dimension: 1-d affords a wide
    range (long exponential tails at tiny drift) and deep refinement; tensor
    dimensions keep the node budget flat."""
    if d == 1:
        return 6.0, (24, 48, 96, 192, 384)
    return 4.0, (16, 32, 64, 128)


class DivergenceError(ValueError):
    """Raised when the constant-mode integral provably diverges."""


@dataclass
class ZeroModeResult:
    """Per-sample weights in split representation I = mantissa * exp(log_scale)."""

    log_scale: np.ndarray
    mantissa: np.ndarray
    rel_err: np.ndarray
    diverged: bool
    nodes_used: int

    def values(self) -> np.ndarray:
        return self.mantissa * np.exp(self.log_scale)

    def log_values(self) -> np.ndarray:
        if np.iscomplexobj(self.mantissa):
            raise ValueError("log_values is defined for real weights only")
        return self.log_scale + np.log(self.mantissa)


def coverage_margin(svec: np.ndarray, R: np.ndarray) -> float:
    """max s·d over {d : R d <= 0, |d|_inf <= 1}; integrable iff this is < 0
    or the feasible cone is {0} (then the max is 0 attained only at d = 0 and
    we report the strict interior condition via a second LP)."""
    d = svec.size
    if R.size == 0:
        return np.inf
    res = scipy.optimize.linprog(
        c=-svec, A_ub=R, b_ub=np.zeros(R.shape[0]),
        bounds=[(-1, 1)] * d, method="highs")
    if not res.success:
        raise RuntimeError(f"coverage LP failed: {res.message}")
    best = -res.fun
    if best > 1e-12:
        return best
    # s·d <= 0 on the recession cone; check the cone is trivial or s strictly
    # inside the dual: maximize 1·d subject to R d <= 0, s·d >= 0 bounded box.
    res2 = scipy.optimize.linprog(
        c=-np.ones(d), A_ub=np.vstack([R, -svec[None, :]]),
        b_ub=np.zeros(R.shape[0] + 1), bounds=[(-1, 1)] * d, method="highs")
    if res2.success and -res2.fun > 1e-9:
        return 0.0  # nonzero direction with R d <= 0 and s·d >= 0: divergent
    res3 = scipy.optimize.linprog(
        c=np.ones(d), A_ub=np.vstack([R, -svec[None, :]]),
        b_ub=np.zeros(R.shape[0] + 1), bounds=[(-1, 1)] * d, method="highs")
    if res3.success and res3.fun < -1e-9:
        return 0.0
    return -np.inf  # strictly integrable


def _f_grad(svec, R, K, t):
    """Log-integrand value and gradient at t (S,d); K (S,m) real."""
    z = t @ R.T                       # (S, m)
    P = K * np.exp(z)
    f = t @ svec - P.sum(axis=1)
    grad = svec[None, :] - P @ R
    return f, grad, P


def _mode_newton(svec, R, K, iters: int = 60):
    S, d = K.shape[0], svec.size
    t = np.zeros((S, d))
    f, grad, P = _f_grad(svec, R, K, t)
    ridge = 1e-300
    for _ in range(iters):
        H = np.einsum("sm,mi,mj->sij", P, R, R)
        H[:, np.arange(d), np.arange(d)] += ridge
        step = np.linalg.solve(H, grad[..., None])[..., 0]
        # backtracking: halve the step where f does not improve
        scale = np.ones(S)
        for _ in range(40):
            t_new = t + scale[:, None] * step
            f_new, grad_new, P_new = _f_grad(svec, R, K, t_new)
            bad = ~(f_new >= f - 1e-14)
            if not bad.any():
                break
            scale[bad] *= 0.5
        t, f, grad, P = t_new, f_new, grad_new, P_new
        gnorm = np.abs(grad).max(axis=1)
        if (gnorm <= 1e-11 * (1.0 + np.abs(svec).max())).all():
            break
    H = np.einsum("sm,mi,mj->sij", P, R, R)
    return t, f, H, np.abs(grad).max(axis=1)


def _ray_directions(d: int) -> np.ndarray:
    dirs = [np.array(v, dtype=float) for v in product((-1, 0, 1), repeat=d)
            if any(v)]
    dirs = np.array(dirs)
    return dirs / np.linalg.norm(dirs, axis=1)[:, None]


def _ray_box(svec, R, K, tstar, W, fmax, L):
    """Per-axis box [lo, hi] in whitened coordinates containing the log-drop-L
    superlevel set, probed along axis and diagonal rays (bisection-tightened,
    tangent-extrapolation guaranteed to overshoot by concavity)."""
    S, d = tstar.shape
    dirs = _ray_directions(d)
    lo = np.zeros((S, d))
    hi = np.zeros((S, d))
    for dirvec in dirs:
        ray = np.einsum("skj,j->sk", W, dirvec)   # dt per unit rho
        rho = np.full(S, np.sqrt(2 * L))
        rho_lo = np.zeros(S)
        for _ in range(40):
            t = tstar + rho[:, None] * ray
            f, grad, _ = _f_grad(svec, R, K, t)
            drop = fmax - f
            below = drop < L
            if not below.any():
                break
            slope = -(np.einsum("sk,sk->s", grad, ray))
            slope = np.maximum(slope, 1e-12)
            rho_lo = np.where(below, rho, rho_lo)
            rho = np.where(below, rho + 1.1 * (L - drop) / slope, rho)
        for _ in range(8):  # tighten toward the crossing
            mid = (rho_lo + rho) / 2
            f, _, _ = _f_grad(svec, R, K, tstar + mid[:, None] * ray)
            below = (fmax - f) < L
            rho_lo = np.where(below, mid, rho_lo)
            rho = np.where(below, rho, mid)
        w_cross = rho[:, None] * dirvec[None, :]
        lo = np.minimum(lo, w_cross)
        hi = np.maximum(hi, w_cross)
    pad = 0.1 * (hi - lo)
    return lo - pad, hi + pad


def _de_nodes(n: int, d: int, V: float):
    """sinh-transformed trapezoid tensor rule: node offsets xi = sinh(v) on a
    uniform v-grid of [-V, V], weights h*cosh(v); per-axis scales are folded
    into the affine map by the caller. Double-exponential convergence for
    analytic integrands with (at least) exponential decay."""
    v = np.linspace(-V, V, n)
    h = v[1] - v[0]
    x = np.sinh(v)
    w = h * np.cosh(v)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    xi = np.stack([g.ravel() for g in grids], axis=1)        # (n^d, d)
    wg = np.ones(n**d)
    vmag = np.meshgrid(*([np.abs(v)] * d), indexing="ij")
    shellmask = np.zeros(n**d, dtype=bool)
    for axis in range(d):
        wg *= np.meshgrid(*([w] * d), indexing="ij")[axis].ravel()
        shellmask |= vmag[axis].ravel() >= V - h - 1e-12
    return xi, wg, shellmask.astype(np.uint8)


def _eval_level(svec, R, K, tstar, W, fmax, lam, n, V):
    xi, wg, shell = _de_nodes(n, tstar.shape[1], V)
    A = W * lam[:, None, :]        # t = t* + W diag(lam) xi
    ls0 = tstar @ svec
    lsv = np.einsum("k,skj->sj", svec, A)
    zb = tstar @ R.T
    zA = np.einsum("mk,skj->smj", R, A)
    acc, bmax = kernels.quad_nodes_eval(ls0, lsv, zb, zA, K, fmax, xi, wg, shell)
    logdetW = np.log(np.abs(np.linalg.det(W)))
    jac = np.exp(logdetW + np.log(lam).sum(axis=1))
    return acc * jac, bmax


def _box_hot(svec, R, K_geom, tstar, W, fmax, lam, V, L):
    """True where the integrand has not decayed by ~L at the box boundary
    (face midpoints and corners of the scaled sinh box)."""
    S, d = tstar.shape
    ext = lam * np.sinh(V)
    probes = [np.eye(d)[k] * sgn for k in range(d) for sgn in (1.0, -1.0)]
    probes += [np.array(c, dtype=float) for c in product((-1.0, 1.0), repeat=d)]
    hot = np.zeros(S, dtype=bool)
    for p in probes:
        t = tstar + np.einsum("skj,sj->sk", W, ext * p[None, :])
        f, _, _ = _f_grad(svec, R, K_geom, t)
        hot |= (fmax - f) < (L - 5.0)
    return hot


def integrate_batch(svec, R, K, rel_tol: float = 1e-6, decay_log: float = DECAY_LOG,
                    divergence_override: bool = False) -> ZeroModeResult:
    """Integrate all samples; K is (S, m) positive (complex allowed with
    positive real part, in which case geometry uses the real part)."""
    svec = np.asarray(svec, dtype=float)
    R = np.asarray(R, dtype=float)
    K = np.atleast_2d(K)
    S = K.shape[0]
    d = svec.size
    if R.shape != (K.shape[1], d):
        raise ValueError("rate matrix shape mismatch")

    is_complex = np.iscomplexobj(K)
    K_geom = K.real.copy() if is_complex else K
    active = K_geom.min(axis=0) > 0
    margin = coverage_margin(svec, R[active])
    if margin >= 0:
        if not divergence_override:
            raise DivergenceError(
                "constant-mode integral diverges: drift direction escapes the "
                f"potential cone (LP margin {margin:.3g})")
        nan = np.full(S, np.nan)
        return ZeroModeResult(log_scale=nan, mantissa=nan, rel_err=nan,
                              diverged=True, nodes_used=0)

    geomK = np.where(active[None, :], K_geom, np.maximum(K_geom, 1e-290))

    # Fast path: with exactly d independent rates the stationarity weights
    # P = (Rᵀ)⁻¹ s are sample-independent, the mode absorbs all of K, and the
    # whitened integral is one quadrature shared by every sample.
    if (not is_complex) and active.all() and K.shape[1] == d:
        P = np.linalg.solve(R.T, svec)
        if P.min() <= 0:
            raise AssertionError("coverage LP accepted a drift outside the rate cone")
        tstar = (np.log(P)[None, :] - np.log(K)) @ np.linalg.inv(R).T
        log_scale = tstar @ svec
        ref = _integrate_general(svec, R, P[None, :], rel_tol, decay_log)
        mantissa = np.full(S, float(ref.mantissa[0] * np.exp(ref.log_scale[0])))
        return ZeroModeResult(log_scale=log_scale, mantissa=mantissa,
                              rel_err=np.full(S, ref.rel_err[0]),
                              diverged=False, nodes_used=ref.nodes_used)

    return _integrate_general(svec, R, K, rel_tol, decay_log,
                              geomK=geomK, active=active)


def _integrate_general(svec, R, K, rel_tol, decay_log, geomK=None, active=None):
    S = K.shape[0]
    d = svec.size
    is_complex = np.iscomplexobj(K)
    if geomK is None:
        geomK = K.real.copy() if is_complex else K
    if active is None:
        active = np.ones(K.shape[1], dtype=bool)
    tstar, fmax, H, gnorm = _mode_newton(svec, R[active], geomK[:, active])
    if (gnorm > 1e-6 * (1 + np.abs(svec).max())).any():
        raise RuntimeError("mode search did not converge; integrand may be degenerate")
    B = np.linalg.cholesky(H)
    W = np.linalg.inv(np.transpose(B, (0, 2, 1)))  # t = t* + W w whitens the Hessian

    de_range, schedule = _de_params(d)
    Rg = R[active]
    Kg = geomK[:, active]
    lo, hi = _ray_box(svec, Rg, Kg, tstar, W, fmax, decay_log)
    lam = np.maximum(np.abs(lo), np.abs(hi)) / np.sinh(de_range)

    result_val = np.zeros(S, dtype=np.complex128 if is_complex else np.float64)
    rel_err = np.full(S, np.inf)
    nodes_used = 0
    pending = np.arange(S)  # samples still being refined (node count or box)
    for _round in range(MAX_BOX_ROUNDS):
        if pending.size == 0:
            break
        hot = _box_hot(svec, Rg, Kg[pending], tstar[pending], W[pending],
                       fmax[pending], lam[pending], de_range, decay_log)
        lam[pending[hot]] *= 1.5
        idx = pending
        prev = None
        accepted: list[tuple[int, np.ndarray]] = []  # (level, sample ids)
        for n in schedule:
            val, _ = _eval_level(svec, R, K[idx], tstar[idx], W[idx], fmax[idx],
                                 lam[idx], n, de_range)
            nodes_used += n**d * idx.size
            if prev is not None:
                denom = np.maximum(np.abs(val), 1e-300)
                diff = np.abs(val - prev) / denom
                err = np.maximum(diff**1.3, 1e-16)  # superlinear contraction
                done = err <= rel_tol / 2
                result_val[idx[done]] = val[done]
                rel_err[idx[done]] = err[done]
                if done.any():
                    accepted.append((n, idx[done]))
                keep = ~done
                result_val[idx[keep]] = val[keep]
                rel_err[idx[keep]] = err[keep]
                idx = idx[keep]
                prev = val[keep]
                if idx.size == 0:
                    break
            else:
                result_val[idx] = val
                prev = val
        # truncation certificate: the accepted value must also be stable
        # under box enlargement (catches mass leaking past the probed box)
        box_failed = [idx] if idx.size else []
        for n, ids in accepted:
            val2, _ = _eval_level(svec, R, K[ids], tstar[ids], W[ids], fmax[ids],
                                  1.3 * lam[ids], n, de_range)
            nodes_used += n**d * ids.size
            diff_box = np.abs(val2 - result_val[ids]) / np.maximum(np.abs(val2), 1e-300)
            ok = diff_box <= rel_tol / 2
            rel_err[ids[ok]] += diff_box[ok]
            bad_ids = ids[~ok]
            if bad_ids.size:
                lam[bad_ids] *= 1.5
                result_val[bad_ids] = val2[~ok]
                box_failed.append(bad_ids)
        pending = (np.unique(np.concatenate(box_failed))
                   if box_failed else np.array([], dtype=int))
    return ZeroModeResult(log_scale=fmax, mantissa=result_val, rel_err=rel_err,
                          diverged=False, nodes_used=nodes_used)


def gamma_closed_form(s: float, a: float, coef: float) -> float:
    """log of ∫ exp(s c − coef e^{a c}) dc = log( a^{-1} coef^{-s/a} Γ(s/a) ).

    Requires s, a > 0 (substitution u = coef e^{a c}).
    """
    import math

    if s <= 0 or a <= 0:
        raise ValueError("closed form needs s > 0 and a > 0")
    return -math.log(a) - (s / a) * math.log(coef) + math.lgamma(s / a)
