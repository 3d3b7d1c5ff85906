"""Search machinery: per-alignment divergence-time bisection, per-bin
Dirichlet Metropolis chains, simulated annealing over the substitution
matrix, and the outer alternating-optimisation loop.

All stochastic routines draw from an explicitly passed numpy Generator;
streams are derived deterministically from the master seed (counter-based
Philox), so any run is reproducible bit-for-bit from its SearchConfig.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .encoding import (
    fit_indel_model,
    prepare_records,
    total_message_length,
)
from .errors import DegenerateInputError, MatrixFormatError, ParameterDomainError
from .markov import MatrixPowerCache
from .mml import (
    mml_multinomial_estimate,
    msglen_alpha,
    msglen_theta_given_alpha,
)
from .types import (
    PROB_FLOOR,
    TIME_BINS,
    DirichletParams,
    IndelModel,
    ModelBundle,
    StochasticMatrix,
    TimeBinnedDirichlets,
    TransitionParams,
    stationary_of,
)

# ===========================================================================
# Configuration and RNG streams
# ===========================================================================


@dataclass(frozen=True)
class SearchConfig:
    """Tunable constants of the search procedures (defaults are the values
    the methods were calibrated with; tests shrink them for speed)."""

    rng_seed: int = 0
    sa_temp_init: float = 10000.0
    sa_cool: float = 0.88
    sa_steps_per_temp: int = 500
    sa_temp_min: float = 0.0001
    sa_kappa_init: float = 1_000_000.0
    mcmc_iters_per_bin: int = 2000
    mcmc_kappa_bar_match: float = 10000.0
    mcmc_kappa_bar_insert: float = 1000.0
    mcmc_delta_range: tuple = (0.1, 10.0)
    em_epsilon_bits: float = 1.0
    em_max_iters: int = 100
    t_range: tuple = (1, TIME_BINS)

    def __post_init__(self):
        if not 0.0 < self.sa_cool < 1.0:
            raise ParameterDomainError(f"sa_cool must lie in (0,1), got {self.sa_cool}")
        for name in (
            "sa_temp_init", "sa_steps_per_temp", "sa_temp_min", "sa_kappa_init",
            "mcmc_iters_per_bin", "mcmc_kappa_bar_match", "mcmc_kappa_bar_insert",
            "em_epsilon_bits", "em_max_iters",
        ):
            if getattr(self, name) <= 0:
                raise ParameterDomainError(f"{name} must be positive")
        lo, hi = self.mcmc_delta_range
        if not 0 < lo < hi:
            raise ParameterDomainError(f"bad mcmc_delta_range {self.mcmc_delta_range}")
        t_lo, t_hi = self.t_range
        if not 1 <= t_lo <= t_hi <= TIME_BINS:
            raise ParameterDomainError(f"bad t_range {self.t_range}")


_MASK64 = (1 << 64) - 1


def _mix64(z):
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def rng_stream(seed, *ids):
    """A counter-based generator for one named substream of the master seed.

    String and integer ids are folded into the second Philox key word, so
    independently derived streams (per bin, per iteration, ...) never
    collide and do not depend on scheduling order.
    """
    h = 0x9E3779B97F4A7C15
    for x in ids:
        if isinstance(x, str):
            for b in x.encode("utf-8"):
                h = _mix64(h ^ b)
        else:
            h = _mix64(h ^ (int(x) & _MASK64))
    key = np.array([int(seed) & _MASK64, h], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ===========================================================================
# Dirichlet sampling and perturbation
# ===========================================================================


def sample_dirichlet(alpha, rng):
    """Draw a simplex point from Dir(alpha): gamma variates, L1-normalised.

    Components are clamped away from the simplex boundary so downstream
    log terms stay finite even for very small alphas.
    """
    alpha = alpha.alpha if isinstance(alpha, DirichletParams) else np.asarray(alpha, float)
    y = rng.standard_gamma(alpha)
    y = np.maximum(y, 1e-300)
    theta = y / y.sum()
    if np.any(theta < 1e-15):
        theta = np.maximum(theta, 1e-15)
        theta /= theta.sum()
    return theta


def perturb_dirichlet(
    alpha,
    state_kind,
    rng,
    kappa_bar_match=10000.0,
    kappa_bar_insert=1000.0,
    delta_range=(0.1, 10.0),
    kappa_floor=0.01,
):
    """One proposal step on Dirichlet parameters: a fair coin chooses
    between resampling the mean around itself (tight concentration
    kappa_bar, preserving kappa) and nudging kappa by +/- delta with
    delta ~ Uniform(delta_range) (preserving the mean)."""
    if state_kind not in ("match", "insert"):
        raise ParameterDomainError(f"state_kind must be 'match' or 'insert', got {state_kind!r}")
    vec = alpha.alpha if isinstance(alpha, DirichletParams) else np.asarray(alpha, float)
    kappa = vec.sum()
    mean = vec / kappa
    if rng.random() <= 0.5:
        kappa_bar = kappa_bar_match if state_kind == "match" else kappa_bar_insert
        new_mean = sample_dirichlet(kappa_bar * mean, rng)
        return DirichletParams(kappa * new_mean)
    delta = rng.uniform(*delta_range)
    if rng.random() <= 0.5:
        kappa = kappa + delta
    else:
        kappa = max(kappa - delta, kappa_floor)
    return DirichletParams(kappa * mean)


# ===========================================================================
# Machine-parameter estimation and the per-bin objective
# ===========================================================================


def estimate_theta(match_counts, insert_counts, alpha_match, alpha_insert):
    """MML point estimates of one alignment's free machine parameters from
    its transition counts under the bin's Dirichlet pair."""
    tm = mml_multinomial_estimate(np.asarray(match_counts, float), alpha_match)
    ti = mml_multinomial_estimate(np.asarray(insert_counts, float), alpha_insert)
    return TransitionParams(p_mm=float(tm[0]), p_ii=float(ti[0]), p_mi=float(ti[1]))


@dataclass
class BinStats:
    """Sufficient statistics of the alignments sharing one time bin."""

    match_counts: np.ndarray   # (B, 2)
    insert_counts: np.ndarray  # (B, 3)
    first_states: np.ndarray   # (B,) over {0,1,2}; -1 = no start symbol

    @property
    def size(self):
        return self.match_counts.shape[0]


def bin_stats(preps):
    return BinStats(
        match_counts=np.stack([p.match_counts for p in preps]),
        insert_counts=np.stack([p.insert_counts for p in preps]),
        first_states=np.array([p.first_state for p in preps], dtype=np.int64),
    )


def _theta_arrays(stats, alpha_m, alpha_i):
    tm = mml_multinomial_estimate(stats.match_counts, alpha_m)
    ti = mml_multinomial_estimate(stats.insert_counts, alpha_i)
    return tm, ti


def _state_bits(stats, tm, ti):
    log_tm = np.log2(tm)
    log_ti = np.log2(ti)
    bits = -(
        stats.match_counts[:, 0] * log_tm[:, 0]
        + stats.match_counts[:, 1] * (log_tm[:, 1] - 1.0)
        + (stats.insert_counts * log_ti).sum(axis=1)
    )
    coded = stats.first_states >= 0
    if np.any(coded):
        p_mm = tm[:, 0]
        p_mi = ti[:, 1]
        denom = p_mi + 1.0 - p_mm
        start_m = p_mi / denom
        start_gap = 0.5 * (1.0 - p_mm) / denom
        start = np.where(stats.first_states == 0, start_m, start_gap)
        bits = bits - coded * np.log2(np.maximum(start, PROB_FLOOR))
    return bits


def bin_objective(stats, alpha_m, alpha_i):
    """The one-bin message length being minimised by the Dirichlet chain:
    I(alpha) + sum_i I(theta_i | alpha) + sum_i I(A_i | theta_i), with
    every theta_i the MML estimate implied by alpha."""
    tm, ti = _theta_arrays(stats, alpha_m, alpha_i)
    bits = msglen_alpha(alpha_m, stats.size, "match")
    bits += msglen_alpha(alpha_i, stats.size, "insert")
    bits += msglen_theta_given_alpha(tm, alpha_m, stats.match_counts.sum(axis=1)).sum()
    bits += msglen_theta_given_alpha(ti, alpha_i, stats.insert_counts.sum(axis=1)).sum()
    bits += _state_bits(stats, tm, ti).sum()
    return float(bits)


def fit_bin_dirichlets(bin_records, alpha0, cfg, rng):
    """Metropolis search for one time bin's Dirichlet pair.

    `bin_records` may be AlignmentRecords, PreparedRecords or a BinStats;
    `alpha0` is the (match, insert) starting pair.  Proposals better than
    the current state are always taken, worse ones with probability
    2^(-delta_bits).  Returns the best pair visited and the per-record
    machine parameters re-estimated from it.
    """
    if isinstance(bin_records, BinStats):
        stats = bin_records
    else:
        items = list(bin_records)
        if not items:
            raise ParameterDomainError("cannot fit Dirichlets to an empty bin")
        if hasattr(items[0], "match_counts"):
            stats = bin_stats(items)
        else:
            stats = bin_stats(prepare_records(items))

    alpha_m = np.asarray(
        alpha0[0].alpha if isinstance(alpha0[0], DirichletParams) else alpha0[0], float
    )
    alpha_i = np.asarray(
        alpha0[1].alpha if isinstance(alpha0[1], DirichletParams) else alpha0[1], float
    )
    cur = bin_objective(stats, alpha_m, alpha_i)
    best = (cur, alpha_m, alpha_i)
    for _ in range(cfg.mcmc_iters_per_bin):
        perturb_match = rng.random() <= 0.5
        kind = "match" if perturb_match else "insert"
        proposal = perturb_dirichlet(
            alpha_m if perturb_match else alpha_i,
            kind,
            rng,
            kappa_bar_match=cfg.mcmc_kappa_bar_match,
            kappa_bar_insert=cfg.mcmc_kappa_bar_insert,
            delta_range=cfg.mcmc_delta_range,
        ).alpha
        cand_m = proposal if perturb_match else alpha_m
        cand_i = alpha_i if perturb_match else proposal
        try:
            cand = bin_objective(stats, cand_m, cand_i)
        except DegenerateInputError:
            # Tiny kappa can make the machine-parameter estimates
            # infeasible for zero-count records; such proposals are
            # simply rejected.
            continue
        delta = cand - cur
        if delta < 0 or rng.random() < np.exp2(-min(delta, 60.0)):
            alpha_m, alpha_i, cur = cand_m, cand_i, cand
            if cur < best[0]:
                best = (cur, alpha_m, alpha_i)
    _, alpha_m, alpha_i = best
    tm, ti = _theta_arrays(stats, alpha_m, alpha_i)
    thetas = [
        TransitionParams(p_mm=float(m[0]), p_ii=float(i[0]), p_mi=float(i[1]))
        for m, i in zip(tm, ti)
    ]
    return (DirichletParams(alpha_m), DirichletParams(alpha_i)), thetas


# ===========================================================================
# Divergence-time search
# ===========================================================================


class _TimeObjective:
    """Message-length contribution of one record as a function of its
    divergence time: the machine-parameter statement under the candidate
    bin's Dirichlets, the state string, the matched pairs through M^t and
    the (t-independent) indel residues."""

    def __init__(self, prep, cache, neg_log2_pi, neg_log2_indel, dirichlets):
        self.prep = prep
        self.cache = cache
        self.dirichlets = dirichlets
        self.stats = BinStats(
            match_counts=prep.match_counts[None, :],
            insert_counts=prep.insert_counts[None, :],
            first_states=np.array([prep.first_state]),
        )
        self.const = float(
            neg_log2_pi[prep.match_src].sum()
            + neg_log2_indel[prep.insert_residues].sum()
            + neg_log2_indel[prep.delete_residues].sum()
        )

    def __call__(self, t):
        alpha_m = self.dirichlets.match_alphas[t - 1]
        alpha_i = self.dirichlets.insert_alphas[t - 1]
        tm, ti = _theta_arrays(self.stats, alpha_m, alpha_i)
        bits = float(
            msglen_theta_given_alpha(tm, alpha_m, self.stats.match_counts.sum(axis=1)).sum()
            + msglen_theta_given_alpha(ti, alpha_i, self.stats.insert_counts.sum(axis=1)).sum()
            + _state_bits(self.stats, tm, ti).sum()
        )
        pair = float(
            self.cache.neg_log2_power(t)[self.prep.match_tgt, self.prep.match_src].sum()
        )
        return bits + pair + self.const


def _bisect_time(objective, t_lo, t_hi):
    """Integer bisection for the minimising t, hardened against local
    optima: after halving, the best of all midpoints touched, a +/-8
    window around the leader, every power of two and both endpoints is
    returned."""
    memo = {}

    def f(t):
        v = memo.get(t)
        if v is None:
            v = objective(t)
            memo[t] = v
        return v

    lo, hi = t_lo, t_hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid + 1) < f(mid):
            lo = mid + 1
        else:
            hi = mid
    f(lo)
    f(hi)
    leader = min(memo, key=lambda t: (memo[t], t))
    for t in range(max(t_lo, leader - 8), min(t_hi, leader + 8) + 1):
        f(t)
    p = 1
    while p <= t_hi:
        if p >= t_lo:
            f(p)
        p *= 2
    f(t_lo)
    f(t_hi)
    return min(memo, key=lambda t: (memo[t], t))


def time_objective(rec, t, matrix, indel, alphas):
    """Evaluate the time-search objective for one record at integer t
    (exposed so exhaustive scans can audit the bisection).  Pass a shared
    MatrixPowerCache and a PreparedRecord when scanning many t values."""
    prep = rec if hasattr(rec, "match_counts") else prepare_records([rec])[0]
    cache = matrix if isinstance(matrix, MatrixPowerCache) else MatrixPowerCache(matrix)
    obj = _TimeObjective(
        prep,
        cache,
        -np.log2(np.maximum(cache.stationary, PROB_FLOOR)),
        -np.log2(np.maximum(indel.probs, PROB_FLOOR)),
        alphas,
    )
    return obj(t)


def infer_time(rec, matrix, indel, alphas, t_range=(1, TIME_BINS)):
    """Best integer divergence time for one record given the fixed models."""
    prep = rec if hasattr(rec, "match_counts") else prepare_records([rec])[0]
    if not isinstance(matrix, StochasticMatrix):
        matrix = StochasticMatrix(matrix)
    cache = MatrixPowerCache(matrix)
    obj = _TimeObjective(
        prep,
        cache,
        -np.log2(np.maximum(matrix.stationary, PROB_FLOOR)),
        -np.log2(np.maximum(indel.probs, PROB_FLOOR)),
        alphas,
    )
    return _bisect_time(obj, t_range[0], t_range[1])


def infer_all_times(preps, matrix, indel, alphas, t_range=(1, TIME_BINS)):
    """Bisect every record's divergence time against shared power caches."""
    cache = MatrixPowerCache(matrix)
    neg_log2_pi = -np.log2(np.maximum(matrix.stationary, PROB_FLOOR))
    neg_log2_p = -np.log2(np.maximum(indel.probs, PROB_FLOOR))
    times = []
    for prep in preps:
        obj = _TimeObjective(prep, cache, neg_log2_pi, neg_log2_p, alphas)
        times.append(_bisect_time(obj, t_range[0], t_range[1]))
    return times


# ===========================================================================
# Fixed-matrix fit (the deterministic encode path)
# ===========================================================================


def fit_to_fixed_matrix(records, matrix, dirichlets, indel=None, t_range=(1, TIME_BINS), preps=None):
    """Optimise everything the fixed matrix leaves free -- the indel model
    (unless supplied), all divergence times and all machine parameters --
    and assemble the itemised encoding report.  Deterministic.

    Returns (EncodingReport, ModelBundle).
    """
    records = list(records)
    if preps is None:
        preps = prepare_records(records)
    if indel is None:
        from .encoding import indel_residue_counts

        indel = fit_indel_model(indel_residue_counts(preps))
    times = infer_all_times(preps, matrix, indel, dirichlets, t_range)
    thetas = []
    for prep, t in zip(preps, times):
        alpha_m, alpha_i = dirichlets.at(t)
        thetas.append(
            estimate_theta(prep.match_counts, prep.insert_counts, alpha_m.alpha, alpha_i.alpha)
        )
    bundle = ModelBundle(
        matrix=matrix, indel=indel, dirichlets=dirichlets, thetas=thetas, times=times
    )
    report = total_message_length(records, bundle, preps=preps)
    bundle.total_message_length_bits = report.total
    return report, bundle


# ===========================================================================
# Simulated annealing over the substitution matrix
# ===========================================================================


def _grouped_match_counts(preps, times):
    """Per-time-bin matched-pair count matrices and total source counts."""
    by_time = {}
    src_counts = np.zeros(20, dtype=float)
    for prep, t in zip(preps, times):
        t = int(t)
        counts = by_time.get(t)
        if counts is None:
            counts = np.zeros((20, 20), dtype=float)
            by_time[t] = counts
        np.add.at(counts, (prep.match_tgt, prep.match_src), 1.0)
        src_counts += np.bincount(prep.match_src, minlength=20)
    return by_time, src_counts


class _MatrixObjective:
    """Total message length as a function of the base matrix only, with
    everything else (alpha, theta, tau, P) frozen into constants."""

    def __init__(self, records, bundle, preps):
        from .encoding import msglen_matrix

        self._msglen_matrix = msglen_matrix
        self.by_time, self.src_counts = _grouped_match_counts(preps, bundle.times)
        report = total_message_length(records, bundle, preps=preps)
        matrix_part, _ = self.matrix_terms(bundle.matrix.entries, bundle.matrix.stationary)
        self.const = report.total - matrix_part

    def matrix_terms(self, entries, pi_warm=None):
        pi = stationary_of(entries, v0=pi_warm)
        cache = MatrixPowerCache(entries)
        bits = self._msglen_matrix(entries, self.src_counts)
        bits -= float(self.src_counts @ np.log2(np.maximum(pi, PROB_FLOOR)))
        for t, counts in self.by_time.items():
            bits += float((counts * cache.neg_log2_power(t)).sum())
        return bits, pi

    def __call__(self, entries, pi_warm=None):
        bits, pi = self.matrix_terms(entries, pi_warm)
        return self.const + bits, pi


def fit_matrix_sa(records, bundle, cfg, rng, preps=None):
    """Simulated annealing over the base matrix with the other models held
    fixed: at each step one column (chosen by stationary weight) is
    resampled from a tight Dirichlet around itself; moves follow the
    Metropolis rule with acceptance 2^(-delta_bits / temperature).
    Returns the best matrix visited."""
    records = list(records)
    if preps is None:
        preps = prepare_records(records)
    objective = _MatrixObjective(records, bundle, preps)

    current = np.array(bundle.matrix.entries)
    cur_bits, cur_pi = objective(current, bundle.matrix.stationary)
    best_bits, best_entries = cur_bits, current.copy()

    temp = cfg.sa_temp_init
    kappa = cfg.sa_kappa_init
    while temp >= cfg.sa_temp_min:
        for _ in range(cfg.sa_steps_per_temp):
            j = int(rng.choice(20, p=cur_pi / cur_pi.sum()))
            proposal = current.copy()
            proposal[:, j] = sample_dirichlet(kappa * np.maximum(current[:, j], PROB_FLOOR), rng)
            cand_bits, cand_pi = objective(proposal, cur_pi)
            delta = cand_bits - cur_bits
            if delta < 0 or rng.random() < np.exp2(-min(delta / temp, 60.0)):
                current, cur_bits, cur_pi = proposal, cand_bits, cand_pi
                if cur_bits < best_bits:
                    best_bits, best_entries = cur_bits, current.copy()
        temp *= cfg.sa_cool
        kappa /= cfg.sa_cool
    return StochasticMatrix.from_unnormalized(best_entries)


# ===========================================================================
# Outer alternating optimisation
# ===========================================================================


def _nearest_populated(populated, t):
    """Nearest value in the sorted list `populated`; ties favour the lower t."""
    best = None
    best_key = None
    for p in populated:
        key = (abs(p - t), p)
        if best_key is None or key < best_key:
            best, best_key = p, key
    return best


def refit_dirichlets(preps, times, dirichlets, cfg, seed, em_iter):
    """Fit each populated bin's Dirichlet pair by its own deterministic
    substream; empty bins inherit the nearest populated bin's fit."""
    by_bin = {}
    for idx, t in enumerate(times):
        by_bin.setdefault(int(t), []).append(idx)
    match_alphas = np.array(dirichlets.match_alphas)
    insert_alphas = np.array(dirichlets.insert_alphas)
    thetas = [None] * len(preps)
    fitted_m, fitted_i = {}, {}
    for t in sorted(by_bin):
        idxs = by_bin[t]
        stats = bin_stats([preps[i] for i in idxs])
        alpha0 = dirichlets.at(t)
        (am, ai), bin_thetas = fit_bin_dirichlets(
            stats, alpha0, cfg, rng_stream(seed, "bin", em_iter, t)
        )
        fitted_m[t], fitted_i[t] = am.alpha, ai.alpha
        for i, theta in zip(idxs, bin_thetas):
            thetas[i] = theta
    populated = sorted(by_bin)
    for t in range(1, TIME_BINS + 1):
        src = t if t in fitted_m else _nearest_populated(populated, t)
        match_alphas[t - 1] = fitted_m[src]
        insert_alphas[t - 1] = fitted_i[src]
    return TimeBinnedDirichlets(match_alphas, insert_alphas), thetas


def run_em(records, init, cfg, checkpoint_dir=None):
    """Alternating optimisation of the complete model bundle.

    Each outer iteration fits the matrix by simulated annealing with the
    machine models fixed, re-bisects every divergence time, then refits
    the per-bin Dirichlets (and with them the machine parameters) with
    the matrix and times fixed.  The indel model depends on the data
    alone and is fitted once up front.  Only improving iterations are
    kept, so the recorded totals are non-increasing; the loop exits when
    an iteration improves by less than em_epsilon_bits.

    Returns (best ModelBundle, list of recorded totals).
    """
    from .encoding import indel_residue_counts
    from pathlib import Path

    records = list(records)
    preps = prepare_records(records)
    indel = fit_indel_model(indel_residue_counts(preps))

    report, bundle = fit_to_fixed_matrix(
        records, init.matrix, init.dirichlets, indel=indel, t_range=cfg.t_range, preps=preps
    )
    trace = [report.total]
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
        save_bundle(Path(checkpoint_dir) / "checkpoint_000.json", bundle)

    for it in range(1, cfg.em_max_iters + 1):
        matrix = fit_matrix_sa(records, bundle, cfg, rng_stream(cfg.rng_seed, "sa", it), preps)
        times = infer_all_times(preps, matrix, indel, bundle.dirichlets, cfg.t_range)
        dirichlets, thetas = refit_dirichlets(
            preps, times, bundle.dirichlets, cfg, cfg.rng_seed, it
        )
        candidate = ModelBundle(
            matrix=matrix, indel=indel, dirichlets=dirichlets, thetas=thetas, times=times
        )
        cand_total = total_message_length(records, candidate, preps=preps).total
        improvement = trace[-1] - cand_total
        if cand_total < trace[-1]:
            candidate.total_message_length_bits = cand_total
            bundle = candidate
        trace.append(min(trace[-1], cand_total))
        if checkpoint_dir is not None:
            save_bundle(Path(checkpoint_dir) / f"checkpoint_{it:03d}.json", bundle)
        if not np.isfinite(cand_total):
            raise ParameterDomainError("non-finite total message length during EM")
        if improvement < cfg.em_epsilon_bits:
            break
    return bundle, trace


# ===========================================================================
# Start-state files and checkpoints
# ===========================================================================
#
# Alpha files carry one line per time bin:
#
#   t  alpha_m1 alpha_m2  alpha_i1 alpha_i2 alpha_i3
#
# Bins not listed inherit the nearest listed bin's parameters (ties to
# the lower t).  '#' comment lines are ignored.


def load_alphas(path):
    listed = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 6:
                raise MatrixFormatError(
                    f"{path}:{lineno}: expected 6 columns (t, 2 match alphas, 3 insert alphas)"
                )
            try:
                t = int(tokens[0])
                values = [float(x) for x in tokens[1:]]
            except ValueError as exc:
                raise MatrixFormatError(f"{path}:{lineno}: bad number") from exc
            if not 1 <= t <= TIME_BINS:
                raise MatrixFormatError(f"{path}:{lineno}: time {t} outside [1, {TIME_BINS}]")
            if any(v <= 0 for v in values):
                raise MatrixFormatError(f"{path}:{lineno}: alphas must be > 0")
            listed[t] = values
    if not listed:
        raise MatrixFormatError(f"{path}: no alpha lines found")
    populated = sorted(listed)
    match_alphas = np.empty((TIME_BINS, 2))
    insert_alphas = np.empty((TIME_BINS, 3))
    for t in range(1, TIME_BINS + 1):
        src = t if t in listed else _nearest_populated(populated, t)
        match_alphas[t - 1] = listed[src][:2]
        insert_alphas[t - 1] = listed[src][2:]
    return TimeBinnedDirichlets(match_alphas, insert_alphas)


def save_alphas(path, dirichlets):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# t  match_alpha1 match_alpha2  insert_alpha1 insert_alpha2 insert_alpha3\n")
        for t in range(1, TIME_BINS + 1):
            m = dirichlets.match_alphas[t - 1]
            i = dirichlets.insert_alphas[t - 1]
            fh.write(
                f"{t} {m[0]:.17g} {m[1]:.17g} {i[0]:.17g} {i[1]:.17g} {i[2]:.17g}\n"
            )


def save_bundle(path, bundle):
    payload = {
        "matrix": bundle.matrix.entries.tolist(),
        "indel": bundle.indel.probs.tolist(),
        "match_alphas": bundle.dirichlets.match_alphas.tolist(),
        "insert_alphas": bundle.dirichlets.insert_alphas.tolist(),
        "thetas": [[th.p_mm, th.p_ii, th.p_mi] for th in bundle.thetas],
        "times": [int(t) for t in bundle.times],
        "total_message_length_bits": bundle.total_message_length_bits,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_bundle(path):
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    return ModelBundle(
        matrix=StochasticMatrix(np.array(payload["matrix"])),
        indel=IndelModel(np.array(payload["indel"])),
        dirichlets=TimeBinnedDirichlets(
            np.array(payload["match_alphas"]), np.array(payload["insert_alphas"])
        ),
        thetas=[TransitionParams(*th) for th in payload["thetas"]],
        times=list(payload["times"]),
        total_message_length_bits=float(payload["total_message_length_bits"]),
    )
