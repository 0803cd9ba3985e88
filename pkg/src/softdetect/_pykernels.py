"""Pure numpy fallback for the compiled trellis kernels."""

import numpy as np


def bcjr(next_state, parity, llr, maxlog):
    """Log-domain forward-backward over a rate-1/2 systematic trellis.

    Starts and ends in state 0. Returns a-posteriori LLRs of the
    (systematic, parity) bit of every step, shape (T, 2).
    """
    next_state = np.asarray(next_state, dtype=np.int64)
    parity = np.asarray(parity, dtype=np.int64)
    llr = np.asarray(llr, dtype=np.float64)
    S = next_state.shape[0]
    T = llr.shape[0]
    comb = np.maximum if maxlog else np.logaddexp

    # each next state has exactly two (state, input) predecessors
    flat = next_state.reshape(-1)
    order = np.argsort(flat, kind="stable")
    if not np.array_equal(flat[order], np.repeat(np.arange(S), 2)):
        raise ValueError("trellis must have exactly two branches into every state")
    pred_a, pred_b = order[0::2], order[1::2]

    sign_u = np.array([1.0, -1.0])
    gamma = 0.5 * (
        llr[:, 0, None, None] * sign_u[None, None, :]
        + llr[:, 1, None, None] * (1.0 - 2.0 * parity)[None, :, :]
    ).reshape(T, S, 2)

    alpha = np.full((T + 1, S), -np.inf)
    alpha[0, 0] = 0.0
    for t in range(T):
        cand = (alpha[t, :, None] + gamma[t]).reshape(-1)
        a = comb(cand[pred_a], cand[pred_b])
        alpha[t + 1] = a - a.max()

    beta = np.full((T + 1, S), -np.inf)
    beta[T, 0] = 0.0
    for t in range(T - 1, -1, -1):
        v = gamma[t] + beta[t + 1][next_state]
        b = comb(v[:, 0], v[:, 1])
        beta[t] = b - b.max()

    metric = alpha[:-1, :, None] + gamma + beta[1:][:, next_state]
    metric = metric.reshape(T, -1)
    u_is0 = np.tile([True, False], S)
    p_is0 = parity.reshape(-1) == 0

    def reduce(m):
        if maxlog:
            return m.max(axis=1)
        return np.logaddexp.reduce(m, axis=1)

    post = np.empty((T, 2))
    post[:, 0] = reduce(metric[:, u_is0]) - reduce(metric[:, ~u_is0])
    post[:, 1] = reduce(metric[:, p_is0]) - reduce(metric[:, ~p_is0])
    return post


def _excluded_priors(lp0, lp1, n):
    # same addition order as the compiled tree: bit n adds exactly 0.0
    T, N = lp0.shape
    acc = np.zeros((T, 1))
    for i in range(N):
        if i == n:
            continue
        acc = np.stack([acc + lp0[:, i, None], acc + lp1[:, i, None]], axis=-1).reshape(T, -1)
    return acc


def pattern_llrs(lp0, lp1, ll, mapper, maxlog):
    """Bit-domain extrinsic LLRs by enumerating every bit pattern.

    ``lp0``/``lp1`` are (T, N) bit log-priors, ``ll`` the (T, M) symbol
    log-likelihoods and ``mapper`` the MSB-first pattern -> symbol table.
    """
    lp0 = np.asarray(lp0, dtype=np.float64)
    lp1 = np.asarray(lp1, dtype=np.float64)
    T, N = lp0.shape
    ll_pat = np.asarray(ll)[:, mapper]
    out = np.empty((T, N))
    for n in range(N):
        lp = _excluded_priors(lp0, lp1, n).reshape(T, 1 << n, 1 << (N - 1 - n))
        view = ll_pat.reshape(T, 1 << n, 2, 1 << (N - 1 - n))
        r = []
        for b in (0, 1):
            metric = (lp + view[:, :, b, :]).reshape(T, -1)
            m = metric.max(axis=1)
            if maxlog:
                r.append(m)
                continue
            m_safe = np.where(np.isfinite(m), m, 0.0)
            with np.errstate(divide="ignore"):
                s = np.log(np.exp(metric - m_safe[:, None]).sum(axis=1))
            r.append(np.where(np.isfinite(m), m_safe + s, m))
        with np.errstate(invalid="ignore"):
            out[:, n] = r[0] - r[1]
    return out
