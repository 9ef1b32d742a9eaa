"""Numba kernels for the bit-packed clause banks.

Layout contract: literal k of a sample lives at bit (k & 63) of word
(k >> 6); a clause fires iff (lits & mask) == mask for every word. All
randomness comes from an explicit xorshift128+ state so that training is
bit-reproducible for a fixed seed and data order.

Per-literal Bernoulli(1/s) feedback events are realized as a binomial
event count (inverse-CDF table) plus uniform distinct positions, which is
the same distribution as independent per-literal draws but touches only
the ~2n/s literals that actually change.
"""

import numpy as np
from numba import int64, njit, uint64

_ONE = uint64(1)
_ZERO = uint64(0)
_F64_SCALE = 1.0 / 9007199254740992.0  # 2**-53

_DEBRUIJN_MULT = uint64(0x03F79D71B4CB0A89)
_DEBRUIJN_TABLE = np.zeros(64, dtype=np.int64)
for _i in range(64):
    _DEBRUIJN_TABLE[(((1 << _i) * 0x03F79D71B4CB0A89) & (2**64 - 1)) >> 58] = _i


@njit(cache=True, inline="always")
def _next_u64(rng):
    # xorshift128+ (Vigna); rng is a 2-element uint64 array mutated in place
    s1 = rng[0]
    s0 = rng[1]
    rng[0] = s0
    s1 ^= s1 << uint64(23)
    s1 ^= s1 >> uint64(17)
    s1 ^= s0
    s1 ^= s0 >> uint64(26)
    rng[1] = s1
    return s0 + s1


@njit(cache=True, inline="always")
def _next_f64(rng):
    return float(_next_u64(rng) >> uint64(11)) * _F64_SCALE


@njit(cache=True)
def seed_rng_state(seed):
    """Expand a 64-bit seed into a nonzero xorshift128+ state (splitmix64)."""
    out = np.empty(2, dtype=np.uint64)
    x = uint64(seed)
    for i in range(2):
        x += uint64(0x9E3779B97F4A7C15)
        z = x
        z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
        z = z ^ (z >> uint64(31))
        if z == uint64(0):
            z = uint64(1)
        out[i] = z
    return out


@njit(cache=True, inline="always")
def _ctz(x, table):
    # index of the lowest set bit; x must be nonzero
    return table[((x & (~x + _ONE)) * _DEBRUIJN_MULT) >> uint64(58)]


@njit(cache=True, inline="always")
def _clause_fires(masks, counts, j, lits, train_mode):
    # Empty clause: 1 while training (lets fresh clauses receive feedback),
    # 0 at inference (no vacuous votes).
    if counts[j] == 0:
        return 1 if train_mode else 0
    for w in range(masks.shape[1]):
        mk = masks[j, w]
        if (lits[w] & mk) != mk:
            return 0
    return 1


@njit(cache=True)
def bank_clause_outputs(masks, counts, lits, train_mode, out):
    """Clause outputs of one class bank for one packed sample."""
    for j in range(masks.shape[0]):
        out[j] = _clause_fires(masks, counts, j, lits, train_mode)


@njit(cache=True)
def class_sums_one(masks, counts, lits, half, threshold, train_mode, clamp, out):
    """Per-class vote sums for one sample. masks is (C, m, W)."""
    for c in range(masks.shape[0]):
        s = 0
        for j in range(masks.shape[1]):
            if _clause_fires(masks[c], counts[c], j, lits, train_mode):
                s += 1 if j < half else -1
        if clamp:
            if s > threshold:
                s = threshold
            elif s < -threshold:
                s = -threshold
        out[c] = s


@njit(cache=True)
def class_sums_batch(masks, counts, X, half, threshold, train_mode, clamp, out):
    """Per-class vote sums for a packed sample matrix X (N, W) into out (N, C)."""
    for i in range(X.shape[0]):
        class_sums_one(masks, counts, X[i], half, threshold, train_mode, clamp, out[i])


@njit(cache=True)
def predict_one(masks, counts, lits, half, threshold):
    """Argmax class for a single packed sample, lowest index on ties."""
    best = -threshold - 1
    best_c = 0
    for c in range(masks.shape[0]):
        s = 0
        for j in range(masks.shape[1]):
            if _clause_fires(masks[c], counts[c], j, lits, False):
                s += 1 if j < half else -1
        if s > threshold:
            s = threshold
        elif s < -threshold:
            s = -threshold
        if s > best:
            best = s
            best_c = c
    return best_c


@njit(cache=True)
def clause_fire_counts(masks, counts, X, out):
    """Inference-mode firing counts per clause over a packed reference set.

    masks (C, m, W), X (N, W), out (C, m) accumulated in place.
    """
    for i in range(X.shape[0]):
        for c in range(masks.shape[0]):
            for j in range(masks.shape[1]):
                out[c, j] += _clause_fires(masks[c], counts[c], j, X[i], False)


@njit(cache=True, inline="always")
def _include(ta, masks, counts, j, k, n_states, cap):
    # Advance one automaton toward include; the exclude->include boundary
    # transition is suppressed when the clause already holds `cap` literals
    # (cap == 0 means no cap).
    st = ta[j, k]
    if st == n_states:
        if cap == 0 or counts[j] < cap:
            ta[j, k] = st + 1
            masks[j, k >> 6] |= _ONE << uint64(k & 63)
            counts[j] += 1
    elif st < 2 * n_states:
        ta[j, k] = st + 1


@njit(cache=True, inline="always")
def _exclude(ta, masks, counts, j, k, n_states):
    st = ta[j, k]
    if st > 1:
        ta[j, k] = st - 1
        if st == n_states + 1:
            masks[j, k >> 6] &= ~(_ONE << uint64(k & 63))
            counts[j] -= 1


@njit(cache=True, inline="always")
def _binomial_draw(cdf, rng):
    # smallest k with cdf[k] > u; cdf[-1] is exactly 1.0
    u = _next_f64(rng)
    lo = 0
    hi = cdf.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True, inline="always")
def _uniform_index(rng, bound):
    # multiply-shift range reduction on 32 uniform bits (no hardware divide);
    # bound stays far below 2^32, keeping the product inside 64 bits
    return int64(((_next_u64(rng) >> uint64(32)) * uint64(bound)) >> uint64(32))


@njit(cache=True, inline="always")
def _sample_event_mask(cdf, num_literals, rng, scratch, positions):
    """Draw a Bernoulli(1/s) literal subset: binomial count, distinct positions.

    Sets the chosen bits in `scratch` and records them in `positions`;
    the caller must clear the bits again via the recorded positions.
    """
    k = _binomial_draw(cdf, rng)
    filled = 0
    while filled < k:
        pos = _uniform_index(rng, num_literals)
        w = pos >> 6
        bit = _ONE << uint64(pos & 63)
        if scratch[w] & bit:
            continue
        scratch[w] |= bit
        positions[filled] = pos
        filled += 1
    return k


@njit(cache=True)
def _type_i(ta, masks, counts, j, lits, num_literals, fired, n_states, cap,
            rng, cdf, scratch, positions, ctz_table):
    # Fired clause: true literals step toward include w.p. (s-1)/s (i.e.
    # unless hit by the 1/s event mask), false literals toward exclude
    # w.p. 1/s. Silent clause: uniform 1/s erosion toward exclude.
    k = _sample_event_mask(cdf, num_literals, rng, scratch, positions)
    if fired:
        two_n = 2 * n_states
        for w in range(masks.shape[1]):
            inc = lits[w] & ~scratch[w]
            base = w << 6
            while inc != _ZERO:
                b = _ctz(inc, ctz_table)
                inc &= inc - _ONE
                kk = base + b
                st = ta[j, kk]
                if st < n_states:
                    ta[j, kk] = st + 1  # deep exclude, no boundary bookkeeping
                else:
                    _include(ta, masks, counts, j, kk, n_states, cap)
        for i in range(k):
            pos = positions[i]
            if (lits[pos >> 6] >> uint64(pos & 63)) & _ONE == _ZERO:
                _exclude(ta, masks, counts, j, pos, n_states)
    else:
        for i in range(k):
            _exclude(ta, masks, counts, j, positions[i], n_states)
    for i in range(k):
        scratch[positions[i] >> 6] = _ZERO


@njit(cache=True)
def _type_ii(ta, masks, counts, j, lits, num_literals, n_states, cap, ctz_table):
    # Only fired clauses are touched: every excluded literal that is false
    # on this sample takes one step toward include.
    tail = num_literals & 63
    last = masks.shape[1] - 1
    for w in range(masks.shape[1]):
        cand = ~lits[w] & ~masks[j, w]
        if w == last and tail != 0:
            cand &= (_ONE << uint64(tail)) - _ONE  # strip padding bits
        while cand != _ZERO:
            b = _ctz(cand, ctz_table)
            cand &= cand - _ONE
            _include(ta, masks, counts, j, (w << 6) + b, n_states, cap)


@njit(cache=True)
def _update_bank(ta, masks, counts, lits, num_literals, half, threshold,
                 n_states, cap, is_target, rng, cdf, scratch, positions,
                 ctz_table, outputs):
    """Feedback pass over one class bank for one sample.

    Clause outputs (train mode) and the clamped vote sum come from the
    pre-update state; each clause is then selected for feedback with
    probability (T - f)/2T for the target class and (T + f)/2T otherwise.
    """
    m = ta.shape[0]
    s = 0
    for j in range(m):
        outputs[j] = _clause_fires(masks, counts, j, lits, True)
        if outputs[j]:
            s += 1 if j < half else -1
    if s > threshold:
        s = threshold
    elif s < -threshold:
        s = -threshold
    if is_target:
        update_p = (threshold - s) / (2.0 * threshold)
    else:
        update_p = (threshold + s) / (2.0 * threshold)
    if update_p <= 0.0:
        return

    for j in range(m):
        if _next_f64(rng) >= update_p:
            continue
        positive = j < half
        if positive == is_target:
            _type_i(ta, masks, counts, j, lits, num_literals, outputs[j] == 1,
                    n_states, cap, rng, cdf, scratch, positions, ctz_table)
        elif outputs[j] == 1:
            _type_ii(ta, masks, counts, j, lits, num_literals, n_states, cap,
                     ctz_table)


@njit(cache=True)
def fit_samples(ta, masks, counts, X, y, order, half, threshold, n_states,
                cap, rng, cdf, scratch, positions, ctz_table, outputs):
    """Sequential single-writer training pass over samples in `order`.

    Per sample: Type I/II feedback to the true class bank, then to one
    uniformly drawn other class bank.
    """
    num_classes = ta.shape[0]
    num_literals = ta.shape[2]
    for idx in range(order.shape[0]):
        e = order[idx]
        target = y[e]
        lits = X[e]
        _update_bank(ta[target], masks[target], counts[target], lits,
                     num_literals, half, threshold, n_states, cap, True,
                     rng, cdf, scratch, positions, ctz_table, outputs)
        if num_classes > 1:
            other = int64(_next_u64(rng) % uint64(num_classes - 1))
            if other >= target:
                other = other + 1
            _update_bank(ta[other], masks[other], counts[other], lits,
                         num_literals, half, threshold, n_states, cap, False,
                         rng, cdf, scratch, positions, ctz_table, outputs)


@njit(cache=True)
def rebuild_include_masks(ta, n_states, masks, counts):
    """Recompute packed include masks and counts from automaton states."""
    num_classes, m, num_literals = ta.shape
    masks[:] = uint64(0)
    for c in range(num_classes):
        for j in range(m):
            cnt = 0
            for k in range(num_literals):
                if ta[c, j, k] > n_states:
                    masks[c, j, k >> 6] |= _ONE << uint64(k & 63)
                    cnt += 1
            counts[c, j] = cnt
