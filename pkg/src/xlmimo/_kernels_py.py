"""Pure numpy implementation of the estimation-error kernels.

Mirrors ``_kernels.pyx``; used when the compiled extension is unavailable
or when ``XLMIMO_PURE_PYTHON=1``.
"""

import numpy as np


def ue_error_traces(R, p, tau_p, sigma2, pilots):
    """Per-UE ``sum_l trace(C_kl)`` for one pilot assignment.

    ``C_kl = R_kl - p_k tau_p R_kl Psi^-1 R_kl`` with
    ``Psi = sum_{i shares k's pilot} p_i tau_p R_il + sigma2 I``.
    """
    K, L, N, _ = R.shape
    out = np.empty(K)
    tr_R = np.trace(R, axis1=2, axis2=3).real.sum(axis=1)
    eye = np.eye(N)
    for t in range(tau_p):
        members = np.flatnonzero(pilots == t)
        if members.size == 0:
            continue
        Rm = R[members]
        psi = sigma2 * eye + tau_p * np.einsum("i,ilmn->lmn", p[members], Rm)
        X = np.linalg.solve(psi[None], Rm)
        quad = np.einsum("klmn,klnm->k", Rm, X).real
        out[members] = tr_R[members] - p[members] * tau_p * quad
    return out


def assignment_costs(R, p, tau_p, sigma2, inv_norm, candidates):
    """Cost ``sum_k inv_norm_k * sum_l trace(C_kl)`` for every row of ``candidates``."""
    costs = np.empty(candidates.shape[0])
    for b, row in enumerate(candidates):
        costs[b] = float(np.dot(inv_norm, ue_error_traces(R, p, tau_p, sigma2, row)))
    return costs
