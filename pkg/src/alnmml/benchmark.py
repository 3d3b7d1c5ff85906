"""Benchmark files, descriptive statistics and synthetic data generation.

The on-disk benchmark format is four lines per record:

    >identifier
    SEQUENCE_S
    SEQUENCE_T
    3-STATE-STRING

Residues are the 20 canonical amino acids (case-insensitive on input;
ambiguity codes are rejected); the state string uses {m, i, d}.  The
number of m+d states must equal |S| and m+i must equal |T|.
"""

import csv
import json
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BenchmarkFormatError, CorruptRecordError, ParameterDomainError
from .inference import sample_dirichlet
from .markov import MatrixPowerCache, expected_change
from .types import (
    AMINO_ACIDS,
    N_AMINO_ACIDS,
    TIME_BINS,
    AlignmentRecord,
    StochasticMatrix,
    TimeBinnedDirichlets,
    TransitionParams,
    three_state_stationary,
)

# ===========================================================================
# Parsing and serialisation
# ===========================================================================


def parse_benchmark(path, on_error="abort"):
    """Read a benchmark file into AlignmentRecords.

    `on_error` controls handling of records that parse but violate the
    alignment bookkeeping invariants: "abort" (default) raises, "skip"
    warns and drops the record.  Structural problems (wrong line count,
    missing '>' headers) always raise, with the line number.
    """
    if on_error not in ("abort", "skip"):
        raise ParameterDomainError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    records = []
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    # Trailing blank lines are tolerated; interior blanks are not.
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) % 4 != 0:
        raise BenchmarkFormatError(
            f"{path}: record truncated (file has {len(lines)} non-trailing lines, "
            "expected a multiple of 4)",
            line=len(lines),
        )
    for base in range(0, len(lines), 4):
        header = lines[base]
        if not header.startswith(">"):
            raise BenchmarkFormatError(
                f"{path}: expected '>' record header, got {header[:30]!r}", line=base + 1
            )
        ident = header[1:].strip()
        s, t, a = (lines[base + 1].strip(), lines[base + 2].strip(), lines[base + 3].strip())
        try:
            records.append(AlignmentRecord(s=s.upper(), t=t.upper(), a=a, ident=ident))
        except (CorruptRecordError, ParameterDomainError) as exc:
            if on_error == "abort":
                raise BenchmarkFormatError(f"{path}: {exc}", line=base + 1) from exc
            warnings.warn(f"{path}: skipping record at line {base + 1}: {exc}", stacklevel=2)
    return records


def serialize_benchmark(path, records):
    with open(path, "w", encoding="ascii") as fh:
        for rec in records:
            fh.write(f">{rec.ident}\n{rec.s}\n{rec.t}\n{rec.a}\n")


# ===========================================================================
# Descriptive statistics
# ===========================================================================


@dataclass
class BenchmarkStats:
    n_pairs: int
    n_match: int
    n_insert: int
    n_delete: int
    avg_seq_identity: float
    identity_histogram: np.ndarray  # 20 equal-width bins over [0, 100]

    def to_json(self, path):
        payload = {
            "n_pairs": self.n_pairs,
            "n_match": self.n_match,
            "n_insert": self.n_insert,
            "n_delete": self.n_delete,
            "avg_seq_identity": round(self.avg_seq_identity, 4),
            "identity_histogram": [int(c) for c in self.identity_histogram],
        }
        with open(path, "w", encoding="ascii") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["statistic", "value"])
            writer.writerow(["n_pairs", self.n_pairs])
            writer.writerow(["n_match", self.n_match])
            writer.writerow(["n_insert", self.n_insert])
            writer.writerow(["n_delete", self.n_delete])
            writer.writerow(["avg_seq_identity", f"{self.avg_seq_identity:.4f}"])
            for b, count in enumerate(self.identity_histogram):
                writer.writerow([f"identity_bin_{5 * b}_{5 * (b + 1)}", int(count)])


def sequence_identity(rec):
    """Percent identity: identical matched pairs over the shorter sequence."""
    shorter = min(len(rec.s), len(rec.t))
    if shorter == 0:
        raise ParameterDomainError(
            f"record {rec.ident!r}: sequence identity undefined for an empty sequence"
        )
    k = l = same = 0
    for state in rec.a:
        if state == "m":
            if rec.s[k] == rec.t[l]:
                same += 1
            k += 1
            l += 1
        elif state == "d":
            k += 1
        else:
            l += 1
    return 100.0 * same / shorter


def compute_stats(records):
    records = list(records)
    if not records:
        return BenchmarkStats(0, 0, 0, 0, 0.0, np.zeros(20, dtype=np.int64))
    identities = np.array([sequence_identity(r) for r in records])
    hist, _ = np.histogram(identities, bins=20, range=(0.0, 100.0))
    return BenchmarkStats(
        n_pairs=len(records),
        n_match=sum(r.n_match for r in records),
        n_insert=sum(r.n_insert for r in records),
        n_delete=sum(r.n_delete for r in records),
        avg_seq_identity=float(identities.mean()),
        identity_histogram=hist,
    )


# ===========================================================================
# Synthetic benchmarks
# ===========================================================================


def sample_record(bundle_matrix_cache, pi, indel_probs, theta, t, length, rng, ident):
    """Run the generative model once: emit a 3-state string from the
    machine (started from its stationary distribution), matched pairs from
    pi and the t-step conditional columns, and indel residues from the
    indel multinomial."""
    table = np.array(
        [
            [theta.p_mm, 0.5 * (1 - theta.p_mm), 0.5 * (1 - theta.p_mm)],
            [theta.p_mi, theta.p_ii, 1 - theta.p_ii - theta.p_mi],
            [theta.p_mi, 1 - theta.p_ii - theta.p_mi, theta.p_ii],
        ]
    )
    power_t = bundle_matrix_cache.power(t)
    state = int(rng.choice(3, p=three_state_stationary(theta)))
    s_parts, t_parts, a_parts = [], [], []
    for _ in range(length):
        a_parts.append("mid"[state])
        if state == 0:
            src = int(rng.choice(N_AMINO_ACIDS, p=pi))
            tgt = int(rng.choice(N_AMINO_ACIDS, p=power_t[:, src]))
            s_parts.append(AMINO_ACIDS[src])
            t_parts.append(AMINO_ACIDS[tgt])
        elif state == 1:
            t_parts.append(AMINO_ACIDS[int(rng.choice(N_AMINO_ACIDS, p=indel_probs))])
        else:
            s_parts.append(AMINO_ACIDS[int(rng.choice(N_AMINO_ACIDS, p=indel_probs))])
        state = int(rng.choice(3, p=table[state]))
    return AlignmentRecord(
        s="".join(s_parts), t="".join(t_parts), a="".join(a_parts), ident=ident
    )


def generate_synthetic(bundle, n_pairs, length_distribution, rng, times=None):
    """Sample a benchmark from a model bundle.

    `length_distribution` is either a mean alignment length (geometric
    lengths with that mean) or a callable rng -> int.  `times` may be a
    sequence of divergence times to draw from uniformly; by default times
    are uniform over [1, 1000].
    """
    if callable(length_distribution):
        draw_length = length_distribution
    else:
        mean = float(length_distribution)
        if mean < 1:
            raise ParameterDomainError(f"mean alignment length must be >= 1, got {mean}")
        draw_length = lambda r: int(r.geometric(1.0 / mean))
    times = None if times is None else [int(t) for t in times]
    cache = MatrixPowerCache(bundle.matrix)
    pi = bundle.matrix.stationary
    records = []
    for n in range(n_pairs):
        t = (
            int(rng.integers(1, TIME_BINS + 1))
            if times is None
            else times[int(rng.integers(0, len(times)))]
        )
        alpha_m, alpha_i = bundle.dirichlets.at(t)
        theta_m = sample_dirichlet(alpha_m, rng)
        theta_i = sample_dirichlet(alpha_i, rng)
        theta = TransitionParams(
            p_mm=float(theta_m[0]), p_ii=float(theta_i[0]), p_mi=float(theta_i[1])
        )
        length = max(1, draw_length(rng))
        records.append(
            sample_record(cache, pi, bundle.indel.probs, theta, t, length, rng, f"synth{n:05d}")
        )
    return records


# ===========================================================================
# Synthetic model fixtures
# ===========================================================================


def random_base_matrix(rng, target_change=0.01, tol=1e-6, max_iter=60):
    """A random strictly positive base matrix calibrated so its one-step
    expected change hits `target_change`: a convex blend of the identity
    with a random column-stochastic matrix, with the blend weight tuned
    by bisection."""
    noise = rng.random((N_AMINO_ACIDS, N_AMINO_ACIDS)) + 0.02
    noise /= noise.sum(axis=0, keepdims=True)
    eye = np.eye(N_AMINO_ACIDS)

    def build(eps):
        return StochasticMatrix.from_unnormalized((1.0 - eps) * eye + eps * noise)

    lo, hi = 0.0, min(1.0, 4.0 * target_change)
    while expected_change(build(hi), 1) < target_change:
        hi = min(1.0, hi * 2.0)
        if hi == 1.0:
            break
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        m = build(mid)
        ec = expected_change(m, 1)
        if abs(ec - target_change) <= tol:
            return m
        if ec < target_change:
            lo = mid
        else:
            hi = mid
    return build(0.5 * (lo + hi))


def perturbed_matrix(matrix, rng, l1_distance=0.2):
    """Shift every column of a matrix by a fixed L1 distance towards an
    independent random direction (a distractor for ranking experiments)."""
    entries = np.array(matrix.entries)
    for j in range(N_AMINO_ACIDS):
        direction = rng.random(N_AMINO_ACIDS) + 0.01
        direction /= direction.sum()
        gap = np.abs(direction - entries[:, j]).sum()
        lam = min(1.0, l1_distance / gap)
        entries[:, j] = (1.0 - lam) * entries[:, j] + lam * direction
    return StochasticMatrix.from_unnormalized(entries)


def default_dirichlets(kappa_match=2000.0, kappa_insert=500.0):
    """A smooth, plausible time-course of machine behaviour for fixtures
    and demos: long match runs with rare gaps at small t, decaying match
    fidelity and lengthening gaps as t grows."""
    t = np.arange(1, TIME_BINS + 1, dtype=float)
    p_mm = np.where(
        t <= 40,
        0.996,
        np.where(t <= 400, 0.996 - (t - 40) * (0.996 - 0.90) / 360.0, 0.90 - (t - 400) * 5e-5),
    )
    p_mm = np.clip(p_mm, 0.85, 0.996)
    p_ii = np.clip(0.55 + (t - 1) * (0.87 - 0.55) / 399.0, 0.55, 0.87)
    p_mi = (1.0 - p_ii) * 0.9
    p_di = 1.0 - p_ii - p_mi
    match = np.stack([p_mm, 1.0 - p_mm], axis=1) * kappa_match
    insert = np.stack([p_ii, p_mi, p_di], axis=1) * kappa_insert
    return TimeBinnedDirichlets(match, insert)


def progress(message, stream=sys.stderr):
    """Diagnostics go to standard error; data only to files/stdout."""
    print(message, file=stream, flush=True)
