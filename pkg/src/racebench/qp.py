"""Dense convex QP solver: min 1/2 x'Hx + f'x  s.t.  Ax <= b.

Dual active-set method in the style of Goldfarb-Idnani: start at the
unconstrained minimum and add violated constraints one at a time, taking
dual steps that may drop blocking constraints. H must be positive definite
(callers add a small ridge). Working-set products are maintained
incrementally; problems here are tens of variables.
"""

import numpy as np

from .errors import QpInfeasibleError

VIOLATION_TOL = 1e-9
ZERO_STEP_TOL = 1e-11
MAX_STEPS_FACTOR = 20


def solve_qp(H, f, A=None, b=None):
    """Solve the QP; returns (x, active_indices, multipliers).

    Multipliers are reported against the caller's (unscaled) rows. Raises
    QpInfeasibleError when the constraints admit no point.
    """
    H = np.asarray(H, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    n = len(f)
    Hinv = np.linalg.inv(H)
    x = -Hinv @ f
    if A is None or len(A) == 0:
        return x, [], np.zeros(0)
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    # unit-norm rows keep violation and step tolerances commensurate
    norms = np.linalg.norm(A, axis=1)
    orig_m = len(b)
    orig_idx = np.arange(orig_m)
    if (norms <= 0.0).any():
        if (b[norms <= 0.0] < -VIOLATION_TOL).any():
            raise QpInfeasibleError("null constraint row with negative bound")
        keep = norms > 0.0
        A, b, norms, orig_idx = A[keep], b[keep], norms[keep], orig_idx[keep]
        if len(b) == 0:
            return x, [], np.zeros(orig_m)
    A = A / norms[:, None]
    b = b / norms
    m = len(b)

    max_q = n + 1
    active = []                       # indices into A
    u = np.zeros(max_q)               # multipliers of the active set
    HiN = np.empty((n, max_q))        # Hinv @ A[active].T, maintained in place
    M = np.empty((max_q, max_q))      # A[active] @ Hinv @ A[active].T
    q = 0

    def add_constraint(j):
        nonlocal q
        col = Hinv @ A[j]
        cross = A[active[:q]] @ col if q else np.zeros(0)
        HiN[:, q] = col
        M[:q, q] = cross
        M[q, :q] = cross
        M[q, q] = float(A[j] @ col) + 1e-12
        active.append(j)
        q += 1

    def drop_constraint(k):
        nonlocal q
        sl = list(range(k)) + list(range(k + 1, q))
        HiN[:, :q - 1] = HiN[:, sl]
        M[:q - 1, :q - 1] = M[np.ix_(sl, sl)]
        u[k:q - 1] = u[k + 1:q]
        active.pop(k)
        q -= 1

    max_steps = MAX_STEPS_FACTOR * (m + n)
    for _ in range(max_steps):
        viol = A @ x - b
        p = int(np.argmax(viol))
        if viol[p] <= VIOLATION_TOL:
            mults = np.zeros(orig_m)
            for k in range(q):
                mults[orig_idx[active[k]]] = u[k] / norms[active[k]]
            return x, [int(orig_idx[i]) for i in active], mults

        cp = A[p]
        Hicp = Hinv @ cp
        for _ in range(max_steps):
            if q:
                rhs = A[active[:q]] @ Hicp
                try:
                    r = np.linalg.solve(M[:q, :q], rhs)  # dual direction
                except np.linalg.LinAlgError:
                    raise QpInfeasibleError("degenerate active set") from None
                if not np.all(np.isfinite(r)):
                    raise QpInfeasibleError("non-finite dual direction")
                z = Hicp - HiN[:, :q] @ r                # primal direction
            else:
                r = np.zeros(0)
                z = Hicp

            denom = float(cp @ z)
            primal_move = denom > ZERO_STEP_TOL
            s_p = float(cp @ x - b[p])                   # current violation (> 0)

            # dual step length: first active multiplier driven to zero
            t1 = np.inf
            k_block = -1
            for k in range(q):
                if r[k] > ZERO_STEP_TOL and u[k] < t1 * r[k]:
                    t1 = u[k] / r[k]
                    k_block = k
            # primal step length: constraint p becomes satisfied
            t2 = s_p / denom if primal_move else np.inf

            if not np.isfinite(min(t1, t2)) or min(t1, t2) > 1e12:
                raise QpInfeasibleError("constraints are inconsistent")

            if t2 <= t1:
                # full step: p joins the active set
                x = x - t2 * z
                u[:q] -= t2 * r
                add_constraint(p)
                u[q - 1] = t2
                break
            # partial step: the blocking constraint leaves the active set;
            # without a primal direction only the multipliers move
            if primal_move:
                x = x - t1 * z
            u[:q] -= t1 * r
            drop_constraint(k_block)
    raise QpInfeasibleError("active-set iteration limit exceeded")
