"""Compiled hot loops shared by the demapper, the decoders, and the batch runners.

Every decoding session works on two flat scratch arrays laid out over the
successive-cancellation graph:

    llrs : float64, shape (n+1, N)   level 0 holds the channel LLRs, level n
                                     the per-bit decision LLRs
    bits : int8,    shape (n+1, N)   partial sums (re-encoded decisions)

The graph node at level ``s`` covering leaves ``[b*2^(n-s), (b+1)*2^(n-s))``
owns exactly that slice of row ``s`` in both arrays. Because slot ownership
is exclusive, resuming from an earlier leaf after a backward move needs no
snapshotting: a node's LLR slice is recomputed only when its first leaf is
prepared again, and everything a prepare reads (ancestor LLR slices, partial
sums of completed left siblings) still reflects the decisions below that
leaf. This is what makes Fano backtracking cheap.

Bit order is natural everywhere: leaf ``i`` of the graph is ``u_i``, no
bit-reversal permutation is applied on either side of the transform.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG2E = 1.4426950408889634

# Fano termination codes.
STATUS_DECODED = 0
STATUS_ABORTED = 1


@njit(cache=True, nogil=True, inline="always")
def _check_llr(a, b, exact):
    """LLR of the XOR of two bits (check-node combination).

    ``exact`` selects the full boxplus 2*atanh(tanh(a/2)*tanh(b/2)) in its
    numerically stable log form; otherwise the min-sum approximation.
    """
    sign = 1.0
    if a < 0.0:
        sign = -sign
        a = -a
    if b < 0.0:
        sign = -sign
        b = -b
    lo = a if a <= b else b
    out = sign * lo
    if exact:
        out += math.log1p(math.exp(-(a + b))) - math.log1p(math.exp(-abs(a - b)))
    return out


@njit(cache=True, nogil=True)
def sc_prepare(llrs, bits, n, pos, exact):
    """Compute the decision LLR for leaf ``pos``.

    Requires decisions for all leaves < pos to have been fed (for the current
    search prefix). Returns llrs[n, pos].
    """
    s0 = 0
    if pos > 0:
        k = 0
        while ((pos >> k) & 1) == 0:
            k += 1
        s = n - k  # level entered through the variable-node (g) update
        half = 1 << k
        p0 = pos - half  # aligned start of the parent block at level s-1
        for t in range(half):
            a = llrs[s - 1, p0 + t]
            b = llrs[s - 1, p0 + half + t]
            ps = bits[s, p0 + t]  # left sibling partial sums
            llrs[s, pos + t] = b + (1.0 - 2.0 * ps) * a
        s0 = s
    for s in range(s0, n):
        half = 1 << (n - s - 1)
        for t in range(half):
            llrs[s + 1, pos + t] = _check_llr(
                llrs[s, pos + t], llrs[s, pos + half + t], exact
            )
    return llrs[n, pos]


@njit(cache=True, nogil=True)
def sc_feed(bits, n, pos, u_bit):
    """Fix the decision for leaf ``pos`` and update partial sums upward."""
    bits[n, pos] = u_bit
    s = n
    idx = pos
    while s > 0 and (idx & 1) == 1:
        size = 1 << (n - s)
        right0 = idx << (n - s)
        left0 = right0 - size
        for t in range(size):
            r = bits[s, right0 + t]
            bits[s - 1, left0 + t] = bits[s, left0 + t] ^ r
            bits[s - 1, left0 + size + t] = r
        idx >>= 1
        s -= 1


@njit(cache=True, nogil=True, inline="always")
def conv_output_bit(state, v_bit, taps):
    """Convolution output for one input bit given the shift-register state.

    ``state`` bit j-1 holds the input bit fed j steps ago.
    """
    u = taps[0] & v_bit
    for j in range(1, taps.shape[0]):
        u ^= taps[j] & ((state >> (j - 1)) & 1)
    return u


@njit(cache=True, nogil=True, inline="always")
def conv_next_state(state, v_bit, state_mask):
    return ((state << 1) | v_bit) & state_mask


@njit(cache=True, nogil=True)
def conv_encode_inplace(v, taps, u):
    """GF(2) convolution of v with the taps, truncated to len(v)."""
    m = taps.shape[0] - 1
    for i in range(v.shape[0]):
        jmax = m if m < i else i
        acc = taps[0] & v[i]
        for j in range(1, jmax + 1):
            acc ^= taps[j] & v[i - j]
        u[i] = acc


@njit(cache=True, nogil=True)
def polar_transform_inplace(x):
    """Multiply the row vector x by the n-fold Kronecker power of [[1,0],[1,1]]."""
    N = x.shape[0]
    h = 1
    while h < N:
        step = h << 1
        for start in range(0, N, step):
            for t in range(start, start + h):
                x[t] ^= x[t + h]
        h = step


@njit(cache=True, nogil=True, inline="always")
def _penalty_log2(z, u_bit):
    """log2(1 + exp(-(1-2u)*z)), stabilized for large |z|."""
    s = z if u_bit == 0 else -z
    if s >= 0.0:
        return math.log1p(math.exp(-s)) * LOG2E
    return (-s + math.log1p(math.exp(s))) * LOG2E


@njit(cache=True, nogil=True, inline="always")
def branch_metric_nb(z, u_bit, bias):
    """Cutoff-rate-biased branch metric: 1 - bias - log2(1 + exp(-(1-2u)*z))."""
    return 1.0 - bias - _penalty_log2(z, u_bit)


@njit(cache=True, nogil=True)
def fano_kernel(
    llrs,
    bits,
    n,
    info_mask,
    taps,
    state_mask,
    bias,
    delta,
    max_visits,
    exact,
    v_hat,
    u_hat,
    mu,
    ranks,
    states,
):
    """Fano search over the PAC tree.

    Classical threshold algorithm: look forward to the best untried branch,
    move when its path metric clears the running threshold T, tighten T in
    steps of ``delta`` on first visits, retreat while the predecessor metric
    allows it, and lower T when stuck. Frozen positions are ordinary tree
    nodes with a single branch.

    The visit count theta increments every time a forward metric is
    consulted, so a backtrack-free decode gives theta == N exactly.

    Returns (theta, final_depth, status).
    """
    BIG_NEG = -1.0e300
    N = info_mask.shape[0]
    i = 0  # depth: v[0..i-1] decided, looking at leaf i
    T = 0.0
    theta = 0
    mu[0] = 0.0
    states[0] = 0
    want_rank = 0  # 0 = better branch, 1 = worse branch
    prepared = -1
    while True:
        if prepared != i:
            sc_prepare(llrs, bits, n, i, exact)
            prepared = i
        z = llrs[n, i]
        theta += 1
        if theta > max_visits:
            return theta, i, STATUS_ABORTED
        st = states[i]
        u0 = conv_output_bit(st, 0, taps)
        have_branch = True
        if info_mask[i] == 1:
            m0 = branch_metric_nb(z, u0, bias[i])
            m1 = branch_metric_nb(z, u0 ^ 1, bias[i])
            best_v = 1 if m1 > m0 else 0
            if want_rank == 0:
                cand_v = best_v
                cand_met = m1 if best_v == 1 else m0
            else:
                cand_v = 1 - best_v
                cand_met = m0 if best_v == 1 else m1
        else:
            cand_v = 0
            if want_rank == 0:
                cand_met = branch_metric_nb(z, u0, bias[i])
            else:
                cand_met = BIG_NEG
                have_branch = False
        mu_next = mu[i] + cand_met
        if have_branch and mu_next >= T:
            # move forward
            u_bit = u0 ^ cand_v
            v_hat[i] = cand_v
            u_hat[i] = u_bit
            ranks[i] = want_rank
            states[i + 1] = conv_next_state(st, cand_v, state_mask)
            sc_feed(bits, n, i, u_bit)
            mu[i + 1] = mu_next
            first_visit = mu[i] < T + delta
            i += 1
            if first_visit:
                while mu[i] >= T + delta:
                    T += delta
            if i == N:
                return theta, i, STATUS_DECODED
            want_rank = 0
        else:
            # look back until a sideways branch exists or T must drop
            while True:
                if i == 0 or mu[i - 1] < T:
                    T -= delta
                    want_rank = 0
                    break
                i -= 1
                prepared = -1
                if info_mask[i] == 1 and ranks[i] == 0:
                    want_rank = 1
                    break


@njit(cache=True, nogil=True)
def list_kernel(chan_llrs, info_mask, taps, state_mask, list_size, exact, v_out):
    """Successive-cancellation list decoding with the convolutional pre-transform.

    Each surviving path carries its own demapper state, register state, and
    an accumulated penalty sum log2(1 + exp(-(1-2u_i) z_i)); at information
    positions every path forks and the ``list_size`` smallest penalties
    survive (ties broken toward the lower candidate index, v=0 before v=1).

    Returns the winning path's penalty; v_out receives its carrier word.
    """
    N = info_mask.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    L = list_size
    llrs_a = np.empty((L, n + 1, N), dtype=np.float64)
    llrs_b = np.empty((L, n + 1, N), dtype=np.float64)
    bits_a = np.empty((L, n + 1, N), dtype=np.int8)
    bits_b = np.empty((L, n + 1, N), dtype=np.int8)
    v_a = np.zeros((L, N), dtype=np.int8)
    v_b = np.zeros((L, N), dtype=np.int8)
    states_a = np.zeros(L, dtype=np.int64)
    states_b = np.zeros(L, dtype=np.int64)
    met_a = np.zeros(L, dtype=np.float64)
    met_b = np.zeros(L, dtype=np.float64)
    pen = np.empty(2 * L, dtype=np.float64)

    for j in range(N):
        llrs_a[0, 0, j] = chan_llrs[j]
    active = 1

    for i in range(N):
        for p in range(active):
            sc_prepare(llrs_a[p], bits_a[p], n, i, exact)
        if info_mask[i] == 1:
            for p in range(active):
                z = llrs_a[p, n, i]
                u0 = conv_output_bit(states_a[p], 0, taps)
                pen[2 * p] = met_a[p] + _penalty_log2(z, u0)
                pen[2 * p + 1] = met_a[p] + _penalty_log2(z, u0 ^ 1)
            n_cand = 2 * active
            keep = L if L < n_cand else n_cand
            order = np.argsort(pen[:n_cand], kind="mergesort")
            for q in range(keep):
                c = order[q]
                p = c >> 1
                vbit = c & 1
                for s in range(n + 1):
                    for j in range(N):
                        llrs_b[q, s, j] = llrs_a[p, s, j]
                        bits_b[q, s, j] = bits_a[p, s, j]
                for j in range(N):
                    v_b[q, j] = v_a[p, j]
                v_b[q, i] = vbit
                u_bit = conv_output_bit(states_a[p], 0, taps) ^ vbit
                sc_feed(bits_b[q], n, i, u_bit)
                states_b[q] = conv_next_state(states_a[p], vbit, state_mask)
                met_b[q] = pen[c]
            active = keep
            llrs_a, llrs_b = llrs_b, llrs_a
            bits_a, bits_b = bits_b, bits_a
            v_a, v_b = v_b, v_a
            states_a, states_b = states_b, states_a
            met_a, met_b = met_b, met_a
        else:
            for p in range(active):
                z = llrs_a[p, n, i]
                u0 = conv_output_bit(states_a[p], 0, taps)
                met_a[p] += _penalty_log2(z, u0)
                sc_feed(bits_a[p], n, i, u0)
                states_a[p] = conv_next_state(states_a[p], 0, state_mask)

    best = 0
    for p in range(1, active):
        if met_a[p] < met_a[best]:
            best = p
    for j in range(N):
        v_out[j] = v_a[best, j]
    return met_a[best]


@njit(cache=True, nogil=True)
def _encode_and_demap(msg, noise, sigma, info_idx, taps, llr_cap, v, u, llr_row):
    """One trial's transmit chain: insert, convolve, transform, BPSK + AWGN, LLR."""
    N = v.shape[0]
    for j in range(N):
        v[j] = 0
    for t in range(info_idx.shape[0]):
        v[info_idx[t]] = msg[t]
    conv_encode_inplace(v, taps, u)
    x = np.empty(N, dtype=np.int8)
    for j in range(N):
        x[j] = u[j]
    polar_transform_inplace(x)
    two_over_s2 = 2.0 / (sigma * sigma)
    for j in range(N):
        y = (1.0 - 2.0 * x[j]) + sigma * noise[j]
        val = two_over_s2 * y
        if val > llr_cap:
            val = llr_cap
        elif val < -llr_cap:
            val = -llr_cap
        llr_row[j] = val


@njit(cache=True, nogil=True)
def fano_trials_kernel(
    msgs,
    noises,
    sigma,
    info_idx,
    info_mask,
    taps,
    state_mask,
    bias,
    delta,
    max_visits,
    llr_cap,
    exact,
    v_hat_out,
    theta_out,
    abort_out,
):
    """Run one batch of end-to-end Fano trials (encode, channel, decode)."""
    B = msgs.shape[0]
    N = info_mask.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    llrs = np.empty((n + 1, N), dtype=np.float64)
    bits = np.empty((n + 1, N), dtype=np.int8)
    v = np.empty(N, dtype=np.int8)
    u = np.empty(N, dtype=np.int8)
    u_hat = np.empty(N, dtype=np.int8)
    mu = np.empty(N + 1, dtype=np.float64)
    ranks = np.empty(N, dtype=np.uint8)
    states = np.empty(N + 1, dtype=np.int64)
    for b in range(B):
        _encode_and_demap(
            msgs[b], noises[b], sigma, info_idx, taps, llr_cap, v, u, llrs[0]
        )
        theta, depth, status = fano_kernel(
            llrs,
            bits,
            n,
            info_mask,
            taps,
            state_mask,
            bias,
            delta,
            max_visits,
            exact,
            v_hat_out[b],
            u_hat,
            mu,
            ranks,
            states,
        )
        theta_out[b] = theta
        if status == STATUS_ABORTED:
            abort_out[b] = 1
            for j in range(depth, N):
                v_hat_out[b, j] = 0
        else:
            abort_out[b] = 0


@njit(cache=True, nogil=True)
def list_trials_kernel(
    msgs,
    noises,
    sigma,
    info_idx,
    info_mask,
    taps,
    state_mask,
    list_size,
    llr_cap,
    exact,
    v_hat_out,
):
    """Run one batch of end-to-end list-decoding trials."""
    B = msgs.shape[0]
    N = info_mask.shape[0]
    chan = np.empty(N, dtype=np.float64)
    v = np.empty(N, dtype=np.int8)
    u = np.empty(N, dtype=np.int8)
    for b in range(B):
        _encode_and_demap(msgs[b], noises[b], sigma, info_idx, taps, llr_cap, v, u, chan)
        list_kernel(chan, info_mask, taps, state_mask, list_size, exact, v_hat_out[b])
