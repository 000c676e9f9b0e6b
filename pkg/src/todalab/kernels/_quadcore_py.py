"""Pure numpy twin of the quadrature node-evaluation kernel.

Per sample s the integrand at node q is

    exp( lin(s,q) - sum_m K[s,m] * exp(z(s,m,q)) - logmax[s] )

with lin(s,q) = ls0[s] + lsv[s]·xi[q] and z(s,m,q) = zb[s,m] + zA[s,m]·xi[q];
the affine data is precomputed by the caller so the kernel is a plain
weighted reduction over nodes. Returns the weighted sums and, for box-error
control, the maximum log-integrand over the flagged (outermost) nodes.
"""

from __future__ import annotations

import numpy as np


def quad_nodes_eval(ls0, lsv, zb, zA, K, logmax, xi, wq, bflag):
    S = ls0.shape[0]
    nq = xi.shape[0]
    acc = np.zeros(S, dtype=np.complex128 if np.iscomplexobj(K) else np.float64)
    bmax = np.full(S, -np.inf)
    for q in range(nq):
        lin = ls0 + lsv @ xi[q]
        z = zb + zA @ xi[q]
        expo = lin - (K * np.exp(z)).sum(axis=1) - logmax
        acc += wq[q] * np.exp(expo)
        if bflag[q]:
            np.maximum(bmax, expo.real if np.iscomplexobj(expo) else expo, out=bmax)
    return acc, bmax
