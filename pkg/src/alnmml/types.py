"""Core domain types: the amino-acid alphabet, stochastic substitution
matrices, alignment records, 3-state machine parameters, Dirichlet
parameters and the complete model bundle.

All types are immutable value objects after construction (arrays are
flagged read-only), so they can be shared freely across threads.

Matrix orientation convention used throughout the package: a stochastic
matrix M is column-stochastic with M[i, j] = Pr(target amino acid i |
source amino acid j).  3-state transition tables are row-stochastic with
T[from_state, to_state].
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    ConvergenceError,
    CorruptRecordError,
    IncompleteBundleError,
    ParameterDomainError,
)

# Canonical amino-acid ordering (the classic PAM/BLOSUM publication order).
# Every matrix / frequency file written by this package declares this
# ordering in its header so that externally ordered matrices can be
# permuted on load.
AMINO_ACIDS = "ARNDCQEGHILKMFPSTWYV"
N_AMINO_ACIDS = 20
AA_INDEX = {a: i for i, a in enumerate(AMINO_ACIDS)}

# Alignment state alphabet and its fixed ordering (match, insert, delete).
STATES = "mid"
STATE_INDEX = {s: i for i, s in enumerate(STATES)}

# Number of integer divergence-time bins; times live in [1, TIME_BINS].
TIME_BINS = 1000

# Probabilities in loaded / repaired simplex vectors are floored here and
# renormalised, keeping every log-probability finite.
PROB_FLOOR = 1e-10


def aa_to_index(letter):
    """Map a one-letter amino-acid code (case-insensitive) to [0, 20)."""
    try:
        return AA_INDEX[letter.upper()]
    except KeyError:
        raise ParameterDomainError(
            f"unknown amino acid {letter!r}; expected one of {AMINO_ACIDS}"
        ) from None


def index_to_aa(index):
    if not 0 <= index < N_AMINO_ACIDS:
        raise ParameterDomainError(f"amino-acid index {index} out of range [0, 20)")
    return AMINO_ACIDS[index]


def encode_sequence(seq):
    """Encode an amino-acid string as an int array of alphabet indices."""
    return np.fromiter((aa_to_index(c) for c in seq), dtype=np.int64, count=len(seq))


def floor_and_normalize_columns(entries, floor=PROB_FLOOR):
    """Clamp entries of a matrix at `floor` and renormalise each column to 1."""
    clipped = np.maximum(np.asarray(entries, dtype=float), floor)
    return clipped / clipped.sum(axis=0, keepdims=True)


def floor_and_normalize_vector(vec, floor=PROB_FLOOR):
    clipped = np.maximum(np.asarray(vec, dtype=float), floor)
    return clipped / clipped.sum()


def _read_only(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


class StochasticMatrix:
    """A 20x20 column-stochastic conditional-probability matrix.

    entries[i, j] = probability that source amino acid j is observed as
    target amino acid i after one time step.  The stationary distribution
    is computed lazily by power iteration and cached.
    """

    __slots__ = ("entries", "__dict__")

    COLUMN_TOL = 1e-9

    def __init__(self, entries):
        entries = np.asarray(entries, dtype=float)
        if entries.shape != (N_AMINO_ACIDS, N_AMINO_ACIDS):
            raise ParameterDomainError(f"expected a 20x20 matrix, got {entries.shape}")
        if np.any(entries < 0):
            raise ParameterDomainError("stochastic matrix entries must be >= 0")
        colsums = entries.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > self.COLUMN_TOL):
            worst = np.abs(colsums - 1.0).max()
            raise ParameterDomainError(
                f"columns must sum to 1 within {self.COLUMN_TOL}; worst deviation {worst:.3g}"
            )
        self.entries = _read_only(entries)

    @classmethod
    def from_unnormalized(cls, entries, floor=PROB_FLOOR):
        """Build a matrix from arbitrary non-negative data: floor tiny/zero
        cells at `floor`, then L1-normalise each column."""
        return cls(floor_and_normalize_columns(entries, floor))

    @classmethod
    def uniform(cls):
        return cls(np.full((N_AMINO_ACIDS, N_AMINO_ACIDS), 1.0 / N_AMINO_ACIDS))

    @classmethod
    def identity(cls):
        return cls(np.eye(N_AMINO_ACIDS))

    @cached_property
    def stationary(self):
        """Stationary distribution pi with M . pi = pi, by power iteration."""
        return stationary_of(self.entries)

    def __eq__(self, other):
        return isinstance(other, StochasticMatrix) and np.array_equal(
            self.entries, other.entries
        )

    def __repr__(self):
        return f"StochasticMatrix(diag_mean={np.diag(self.entries).mean():.4f})"


def stationary_of(entries, v0=None, tol=1e-12, max_iter=100_000):
    """Power-iterate v <- M v to the eigenvalue-1 eigenvector of a
    column-stochastic matrix.

    `v0` is an optional warm start (e.g. the stationary vector of a nearby
    matrix).  Raises ConvergenceError if the iteration does not settle
    within `max_iter` steps or the fixed point is poor.
    """
    m = np.asarray(entries, dtype=float)
    v = np.full(m.shape[0], 1.0 / m.shape[0]) if v0 is None else np.asarray(v0, float)
    for _ in range(max_iter):
        nxt = m @ v
        nxt /= nxt.sum()
        if np.abs(nxt - v).sum() < tol:
            v = nxt
            break
        v = nxt
    else:
        raise ConvergenceError(
            f"stationary distribution power iteration did not converge in {max_iter} steps"
        )
    if np.abs(m @ v - v).max() > 1e-7:
        raise ConvergenceError("power iteration converged to a poor fixed point")
    v = np.maximum(v, 0.0)
    return _read_only(v / v.sum())


class IndelModel:
    """Multinomial 20-state model for amino acids in indel (gap) columns."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (N_AMINO_ACIDS,):
            raise ParameterDomainError(f"expected a 20-vector, got shape {probs.shape}")
        if np.any(probs < 0):
            raise ParameterDomainError("indel probabilities must be >= 0")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ParameterDomainError("indel probabilities must sum to 1 within 1e-9")
        self.probs = _read_only(probs)

    @classmethod
    def from_unnormalized(cls, vec, floor=PROB_FLOOR):
        return cls(floor_and_normalize_vector(vec, floor))

    @classmethod
    def uniform(cls):
        return cls(np.full(N_AMINO_ACIDS, 1.0 / N_AMINO_ACIDS))

    def __eq__(self, other):
        return isinstance(other, IndelModel) and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True)
class AlignmentRecord:
    """One benchmark datum: two sequences plus their 3-state alignment string.

    Bookkeeping invariants: #m + #d in A equals |S| and #m + #i equals |T|.
    """

    s: str
    t: str
    a: str
    ident: str = ""

    def __post_init__(self):
        if not self.a:
            raise CorruptRecordError(f"record {self.ident!r}: empty 3-state string")
        bad = set(self.a) - set(STATES)
        if bad:
            raise CorruptRecordError(
                f"record {self.ident!r}: invalid state characters {sorted(bad)}"
            )
        n_m = self.a.count("m")
        n_i = self.a.count("i")
        n_d = self.a.count("d")
        if n_m + n_d != len(self.s):
            raise CorruptRecordError(
                f"record {self.ident!r}: matches+deletes ({n_m + n_d}) != |S| ({len(self.s)})"
            )
        if n_m + n_i != len(self.t):
            raise CorruptRecordError(
                f"record {self.ident!r}: matches+inserts ({n_m + n_i}) != |T| ({len(self.t)})"
            )
        # Validates the residue alphabet on both sequences.
        encode_sequence(self.s)
        encode_sequence(self.t)

    @property
    def n_match(self):
        return self.a.count("m")

    @property
    def n_insert(self):
        return self.a.count("i")

    @property
    def n_delete(self):
        return self.a.count("d")


@dataclass(frozen=True)
class TransitionParams:
    """The three free probabilities of the symmetric 3-state machine.

    p_mm = Pr(m|m), p_ii = Pr(i|i), p_mi = Pr(m|i); the remaining six
    transition probabilities are dependent (see derive_full_transitions).
    """

    p_mm: float
    p_ii: float
    p_mi: float

    def __post_init__(self):
        if not 0.0 < self.p_mm < 1.0:
            raise ParameterDomainError(f"p_mm must lie in (0,1), got {self.p_mm}")
        if not (0.0 < self.p_ii < 1.0 and 0.0 < self.p_mi < 1.0):
            raise ParameterDomainError(
                f"p_ii and p_mi must lie in (0,1), got {self.p_ii}, {self.p_mi}"
            )
        if self.p_ii + self.p_mi >= 1.0:
            raise ParameterDomainError(
                f"p_ii + p_mi must be < 1, got {self.p_ii + self.p_mi}"
            )

    @property
    def match_simplex(self):
        """(Pr(m|m), 1 - Pr(m|m)) -- the 1-simplex point for the match state."""
        return np.array([self.p_mm, 1.0 - self.p_mm])

    @property
    def insert_simplex(self):
        """(Pr(i|i), Pr(m|i), Pr(d|i)) -- the 2-simplex point for the insert
        state (the delete state is its mirror image)."""
        return np.array([self.p_ii, self.p_mi, 1.0 - self.p_ii - self.p_mi])


def derive_full_transitions(theta):
    """Expand the three free parameters into the full 3x3 transition table.

    Returns T with T[from, to] over state order (m, i, d); every row sums
    to 1.  Dependent entries follow the insert/delete symmetry:
    Pr(i|m) = Pr(d|m) = (1-Pr(m|m))/2, Pr(d|i) = Pr(i|d) = 1-Pr(i|i)-Pr(m|i),
    Pr(d|d) = Pr(i|i), Pr(m|d) = Pr(m|i).
    """
    p_im = 0.5 * (1.0 - theta.p_mm)
    p_di = 1.0 - theta.p_ii - theta.p_mi
    return np.array(
        [
            [theta.p_mm, p_im, p_im],
            [theta.p_mi, theta.p_ii, p_di],
            [theta.p_mi, p_di, theta.p_ii],
        ]
    )


def three_state_stationary(theta):
    """Stationary distribution (over m, i, d) of the symmetric 3-state chain.

    Solved in closed form from the balance equations; used as the start
    distribution when encoding the first symbol of an alignment string.
    """
    denom = theta.p_mi + 1.0 - theta.p_mm
    pi_m = theta.p_mi / denom
    pi_gap = 0.5 * (1.0 - theta.p_mm) / denom
    return np.array([pi_m, pi_gap, pi_gap])


@dataclass(frozen=True)
class DirichletParams:
    """Dirichlet parameter vector with its kappa * mean decomposition."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size < 2:
            raise ParameterDomainError("alpha must be a vector of dimension >= 2")
        if np.any(alpha <= 0):
            raise ParameterDomainError("all Dirichlet parameters must be > 0")
        object.__setattr__(self, "alpha", _read_only(alpha))

    @classmethod
    def from_mean_and_kappa(cls, mean, kappa):
        mean = np.asarray(mean, dtype=float)
        return cls(kappa * mean / mean.sum())

    @property
    def d(self):
        return self.alpha.size

    @property
    def kappa(self):
        return float(self.alpha.sum())

    @property
    def mean(self):
        return self.alpha / self.alpha.sum()


class TimeBinnedDirichlets:
    """One (match, insert) Dirichlet pair per integer time bin in [1, 1000].

    Stored as two dense arrays: match_alphas (1000, 2) and insert_alphas
    (1000, 3); row t-1 holds the parameters for time bin t.
    """

    __slots__ = ("match_alphas", "insert_alphas")

    def __init__(self, match_alphas, insert_alphas):
        match_alphas = np.asarray(match_alphas, dtype=float)
        insert_alphas = np.asarray(insert_alphas, dtype=float)
        if match_alphas.shape != (TIME_BINS, 2):
            raise ParameterDomainError(
                f"match_alphas must have shape ({TIME_BINS}, 2), got {match_alphas.shape}"
            )
        if insert_alphas.shape != (TIME_BINS, 3):
            raise ParameterDomainError(
                f"insert_alphas must have shape ({TIME_BINS}, 3), got {insert_alphas.shape}"
            )
        if np.any(match_alphas <= 0) or np.any(insert_alphas <= 0):
            raise ParameterDomainError("all Dirichlet parameters must be > 0")
        self.match_alphas = _read_only(match_alphas)
        self.insert_alphas = _read_only(insert_alphas)

    @classmethod
    def constant(cls, match_alpha=(1.0, 1.0), insert_alpha=(1.0, 1.0, 1.0)):
        """Same Dirichlet pair in every time bin."""
        return cls(
            np.tile(np.asarray(match_alpha, float), (TIME_BINS, 1)),
            np.tile(np.asarray(insert_alpha, float), (TIME_BINS, 1)),
        )

    def at(self, t):
        """The (match, insert) DirichletParams pair for integer time t."""
        if not 1 <= t <= TIME_BINS:
            raise ParameterDomainError(f"time {t} outside [1, {TIME_BINS}]")
        return (
            DirichletParams(self.match_alphas[t - 1].copy()),
            DirichletParams(self.insert_alphas[t - 1].copy()),
        )

    def replaced(self, t, match_alpha, insert_alpha):
        """A copy with bin t replaced by the given alpha vectors."""
        m = self.match_alphas.copy()
        i = self.insert_alphas.copy()
        m[t - 1] = np.asarray(match_alpha, float)
        i[t - 1] = np.asarray(insert_alpha, float)
        return TimeBinnedDirichlets(m, i)


@dataclass
class ModelBundle:
    """A complete hypothesis: substitution matrix, indel model, time-binned
    Dirichlets, plus per-alignment machine parameters and divergence times.
    """

    matrix: StochasticMatrix
    indel: IndelModel
    dirichlets: TimeBinnedDirichlets
    thetas: list = field(default_factory=list)
    times: list = field(default_factory=list)
    total_message_length_bits: float = 0.0

    def __post_init__(self):
        if len(self.thetas) != len(self.times):
            raise IncompleteBundleError(
                f"{len(self.thetas)} thetas vs {len(self.times)} times"
            )
        for t in self.times:
            if not 1 <= int(t) <= TIME_BINS:
                raise IncompleteBundleError(f"divergence time {t} outside [1, {TIME_BINS}]")
        if self.total_message_length_bits < 0:
            raise IncompleteBundleError("total message length must be >= 0")

    def require_per_record(self, n_records):
        if len(self.thetas) != n_records:
            raise IncompleteBundleError(
                f"bundle fitted to {len(self.thetas)} records, benchmark has {n_records}"
            )
