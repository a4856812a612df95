"""Pure-Python reference versions of the hot kernels.

Both functions mirror ``_kernels.pyx`` operation for operation so the two
backends return bit-identical results on the same inputs.
"""
import heapq

import numpy as np

TAU = 1e-12


def makespan(t_in, t_comp, t_out, partitions):
    """Event-driven makespan of the three-stage streamed pipeline.

    Transfers share one channel and are served in (ready time, task index)
    order; transfer-ins are ready at time zero. Task ``i`` computes on
    partition ``i % partitions`` and partitions run one task at a time.
    """
    n = len(t_in)
    part_free = [0.0] * partitions
    pending = []  # (ready, task) of transfer-outs
    channel = 0.0
    next_in = 0
    served = 0
    while served < 2 * n:
        if next_in < n and not (pending and pending[0] < (0.0, next_in)):
            i = next_in
            next_in += 1
            channel = channel + t_in[i]
            p = i % partitions
            start = channel if channel > part_free[p] else part_free[p]
            done = start + t_comp[i]
            part_free[p] = done
            heapq.heappush(pending, (done, i))
        else:
            ready, j = heapq.heappop(pending)
            start = channel if channel > ready else ready
            channel = start + t_out[j]
        served += 1
    return channel


def smo_solve(Q, y, C, tol, max_iter):
    """SMO on the C-SVC dual with maximal-violating-pair selection.

    Parameters
    ----------
    Q : ndarray, shape (n, n)
        ``y_i * y_j * K(x_i, x_j)``.
    y : ndarray, shape (n,)
        Labels in {-1, +1}.

    Returns
    -------
    alpha, grad, iterations, converged
    """
    n = Q.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.diagonal(Q).copy()
    pos = y > 0
    neg = ~pos
    it = 0
    converged = False
    while it < max_iter:
        yG = -y * G
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        cand = np.where(up, yG, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        cand = np.where(low, yG, np.inf)
        j = int(np.argmin(cand))
        gmin = cand[j]
        if gmax - gmin < tol:
            converged = True
            break
        it += 1
        ai = alpha[i]
        aj = alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni = ai + delta
            nj = aj + delta
            if diff > 0:
                if nj < 0:
                    nj = 0.0
                    ni = diff
            else:
                if ni < 0:
                    ni = 0.0
                    nj = -diff
            if diff > 0:
                if ni > C:
                    ni = C
                    nj = C - diff
            else:
                if nj > C:
                    nj = C
                    ni = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni = ai - delta
            nj = aj + delta
            if total > C:
                if ni > C:
                    ni = C
                    nj = total - C
            else:
                if nj < 0:
                    nj = 0.0
                    ni = total
            if total > C:
                if nj > C:
                    nj = C
                    ni = total - C
            else:
                if ni < 0:
                    ni = 0.0
                    nj = total
        alpha[i] = ni
        alpha[j] = nj
        dai = ni - ai
        daj = nj - aj
        G += Q[i] * dai + Q[j] * daj
    return alpha, G, it, converged
