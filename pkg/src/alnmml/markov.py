"""Stochastic-matrix algebra and scoring-matrix conversion.

Implements integer matrix powers with memoisation, stationary
distributions, the expected-change statistic, conversion between log-odds
scoring matrices and conditional-probability (stochastic) matrices,
the k-th matrix-root search that calibrates a matrix to 1% expected
change per step, KL divergences between substitution models, and the
shared on-disk matrix file format.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConversionError, MatrixFormatError, ParameterDomainError
from .types import (
    AMINO_ACIDS,
    N_AMINO_ACIDS,
    PROB_FLOOR,
    StochasticMatrix,
    floor_and_normalize_vector,
    stationary_of,
)

# ===========================================================================
# Matrix powers
# ===========================================================================


class MatrixPowerCache:
    """Memoised integer powers of one stochastic matrix.

    Powers are assembled by binary exponentiation from cached repeated
    squarings, then column-renormalised to absorb floating drift; the
    same assembly path serves every request, so results are reproducible
    across call orders.
    """

    def __init__(self, matrix):
        if isinstance(matrix, StochasticMatrix):
            matrix = matrix.entries
        self._base = np.asarray(matrix, dtype=float)
        self._squares = [self._base]
        self._powers = {1: self._base}
        self._neg_log2 = {}
        self._stationary = None

    @property
    def stationary(self):
        if self._stationary is None:
            self._stationary = stationary_of(self._base)
        return self._stationary

    def _square(self, k):
        while len(self._squares) <= k:
            prev = self._squares[-1]
            nxt = prev @ prev
            nxt /= nxt.sum(axis=0, keepdims=True)
            self._squares.append(nxt)
        return self._squares[k]

    def power(self, t):
        """Raw ndarray for M^t (column-renormalised)."""
        t = int(t)
        if t < 1:
            raise ParameterDomainError(f"matrix power requires t >= 1, got {t}")
        cached = self._powers.get(t)
        if cached is not None:
            return cached
        result = None
        bit, k = t, 0
        while bit:
            if bit & 1:
                sq = self._square(k)
                result = sq if result is None else result @ sq
            bit >>= 1
            k += 1
        result = result / result.sum(axis=0, keepdims=True)
        result.flags.writeable = False
        self._powers[t] = result
        return result

    def neg_log2_power(self, t):
        """-log2(M^t) with the probability floor applied, cached per t."""
        cached = self._neg_log2.get(t)
        if cached is None:
            cached = -np.log2(np.maximum(self.power(t), PROB_FLOOR))
            cached.flags.writeable = False
            self._neg_log2[t] = cached
        return cached


def matrix_power(matrix, t):
    """M^t as a StochasticMatrix (column-stochastic after renormalisation)."""
    cache = MatrixPowerCache(matrix)
    return StochasticMatrix(cache.power(t))


def stationary_distribution(matrix):
    """Stationary distribution of a stochastic matrix (power iteration)."""
    if isinstance(matrix, StochasticMatrix):
        return matrix.stationary
    return stationary_of(matrix)


def expected_change(matrix, t=1):
    """1 - sum_j pi_j * (M^t)_jj: the stationary-weighted probability that
    an amino acid differs after t steps."""
    if not isinstance(matrix, StochasticMatrix):
        matrix = StochasticMatrix(matrix)
    diag = np.diag(MatrixPowerCache(matrix).power(t))
    return float(1.0 - matrix.stationary @ diag)


# ===========================================================================
# Log-odds scoring matrices
# ===========================================================================


@dataclass(frozen=True)
class ScoringMatrix:
    """A published-style log-odds matrix: scores S_ij = scale * log2 of the
    odds of seeing amino acid i aligned to j versus chance.

    `scale` sets the score unit (2 = half-bits, 3 = third-bits, ...);
    `background` carries the amino-acid frequencies the scores were
    computed against, when known.
    """

    scores: np.ndarray
    scale: float
    background: np.ndarray = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.shape != (N_AMINO_ACIDS, N_AMINO_ACIDS):
            raise ParameterDomainError(f"expected 20x20 scores, got {scores.shape}")
        if self.scale <= 0:
            raise ParameterDomainError(f"scale must be > 0, got {self.scale}")
        object.__setattr__(self, "scores", scores)
        if self.background is not None:
            bg = np.asarray(self.background, dtype=float)
            if bg.shape != (N_AMINO_ACIDS,) or abs(bg.sum() - 1.0) > 1e-6:
                raise ParameterDomainError("background must be a 20-vector summing to 1")
            object.__setattr__(self, "background", bg)


@dataclass(frozen=True)
class LogOddsConversion:
    """Conditional matrix recovered from a log-odds matrix, with the
    pre-normalisation column sums (their deviation from 1 is the drift
    introduced by renormalisation)."""

    conditional: np.ndarray
    column_sums: np.ndarray

    @property
    def column_drift(self):
        return np.abs(self.column_sums - 1.0)


def logodds_to_conditional(scoring, fallback_freqs=None):
    """Invert S_ij = c * log2(p(a_i|a_j) / p(a_i)): the conditional entry is
    p(a_i) * 2^(S_ij / c).  Columns are renormalised to sum to 1 and the
    pre-normalisation sums reported.

    Frequencies come from the scoring matrix's own background when
    present, else from `fallback_freqs`.
    """
    if scoring.background is not None:
        freqs = scoring.background
    elif fallback_freqs is not None:
        freqs = np.asarray(fallback_freqs, dtype=float)
        if freqs.shape != (N_AMINO_ACIDS,):
            raise ParameterDomainError("fallback frequencies must be a 20-vector")
    else:
        raise ParameterDomainError(
            "no amino-acid frequencies available: scoring matrix has no background "
            "and no fallback was supplied"
        )
    raw = freqs[:, None] * np.exp2(scoring.scores / scoring.scale)
    sums = raw.sum(axis=0)
    return LogOddsConversion(conditional=raw / sums, column_sums=sums)


def conditional_to_logodds(entries, freqs, scale):
    """S_ij = scale * log2(p(a_i|a_j) / p(a_i)); exact inverse of
    logodds_to_conditional before renormalisation."""
    entries = np.maximum(np.asarray(entries, dtype=float), PROB_FLOOR)
    freqs = np.asarray(freqs, dtype=float)
    return scale * np.log2(entries / freqs[:, None])


# ===========================================================================
# Base-matrix (k-th root) search
# ===========================================================================

TARGET_EXPECTED_CHANGE = 0.01
MAX_ROOT_INDEX = 5000
CLIP_ERROR_THRESHOLD = 1e-3


@dataclass(frozen=True)
class BaseMatrixResult:
    matrix: StochasticMatrix
    k: int
    expected_change: float
    clipped_mass: float       # worst per-column mass removed by clipping
    clipped_mass_total: float
    max_imag: float           # largest imaginary artefact discarded


def _eig_or_error(entries):
    try:
        eigvals, vecs = np.linalg.eig(entries)
        inv = np.linalg.inv(vecs)
    except np.linalg.LinAlgError as exc:
        raise ConversionError(f"matrix is not diagonalisable: {exc}") from exc
    # Floor tiny negative eigenvalues; anything worse surfaces as clipped
    # mass in the reconstructed root.
    eigvals = np.where(
        (eigvals.real < 0) & (eigvals.real > -1e-8) & (np.abs(eigvals.imag) < 1e-8),
        0.0,
        eigvals,
    )
    return eigvals, vecs, inv


def _root_matrix(eigvals, vecs, inv, k):
    """Principal k-th root via the eigendecomposition, cleaned up into a
    stochastic matrix; returns (matrix, per-column clipped mass, max imag)."""
    root = (vecs * eigvals ** (1.0 / k)) @ inv
    real = root.real
    max_imag = float(np.abs(root.imag).max())
    clipped_per_col = np.abs(np.minimum(real, 0.0)).sum(axis=0)
    cleaned = StochasticMatrix.from_unnormalized(np.maximum(real, 0.0))
    return cleaned, clipped_per_col, max_imag


def find_base_matrix(conditional):
    """Calibrate a conditional-probability matrix to one step ~= 1% expected
    change by finding the integer k >= 1 whose k-th matrix root is closest
    to the target, the root taken through the eigendecomposition.

    Raises ConversionError if no k in [1, 5000] reaches expected change
    <= 0.05, or if root cleanup clips more than 1e-3 probability mass from
    some column.
    """
    if not isinstance(conditional, StochasticMatrix):
        conditional = StochasticMatrix.from_unnormalized(conditional)
    ec_full = expected_change(conditional, 1)
    if ec_full <= TARGET_EXPECTED_CHANGE:
        if ec_full < TARGET_EXPECTED_CHANGE / 2:
            warnings.warn(
                f"input matrix has expected change {ec_full:.5f}, below the "
                f"{TARGET_EXPECTED_CHANGE} calibration target for every k; keeping k=1",
                stacklevel=2,
            )
        return BaseMatrixResult(conditional, 1, ec_full, 0.0, 0.0, 0.0)
    if np.abs(conditional.entries @ conditional.entries - conditional.entries).max() < 1e-9:
        # Idempotent input (e.g. every column equal to the background):
        # every root equals the matrix itself, so the calibration target is
        # unreachable, mirroring the identity degenerate case.
        warnings.warn(
            f"input matrix is idempotent with expected change {ec_full:.5f}; the "
            f"{TARGET_EXPECTED_CHANGE} calibration target is unreachable, keeping k=1",
            stacklevel=2,
        )
        return BaseMatrixResult(conditional, 1, ec_full, 0.0, 0.0, 0.0)

    eigvals, vecs, inv = _eig_or_error(conditional.entries)
    evaluated = {}

    def ec_at(k):
        if k not in evaluated:
            cleaned, clipped, max_imag = _root_matrix(eigvals, vecs, inv, k)
            if clipped.max() > CLIP_ERROR_THRESHOLD:
                raise ConversionError(
                    f"k-th root cleanup at k={k} clipped {clipped.max():.3g} probability "
                    f"mass from one column (limit {CLIP_ERROR_THRESHOLD}); the input is too "
                    "far from a Markov power"
                )
            evaluated[k] = (cleaned, clipped, max_imag, expected_change(cleaned, 1))
        return evaluated[k][3]

    # Expected change of the k-th root decreases with k: bracket the 1%
    # crossing by doubling, then bisect to the smallest k at/below target.
    lo, hi = 1, 2
    while hi <= MAX_ROOT_INDEX and ec_at(hi) > TARGET_EXPECTED_CHANGE:
        lo, hi = hi, hi * 2
    if hi > MAX_ROOT_INDEX:
        if ec_at(MAX_ROOT_INDEX) > 0.05:
            if abs(ec_at(MAX_ROOT_INDEX) - ec_full) < 1e-6:
                # Idempotent input (columns already at a fixed point, e.g.
                # every column equal to the stationary distribution): no
                # root moves the expected change, mirroring the identity
                # degenerate case at the other extreme.
                warnings.warn(
                    f"input matrix has expected change {ec_full:.5f} at every root "
                    f"index; the {TARGET_EXPECTED_CHANGE} calibration target is "
                    "unreachable, keeping k=1",
                    stacklevel=2,
                )
                return BaseMatrixResult(conditional, 1, ec_full, 0.0, 0.0, 0.0)
            raise ConversionError(
                f"no root index in [1, {MAX_ROOT_INDEX}] reaches expected change <= 0.05 "
                f"(at k={MAX_ROOT_INDEX}: {ec_at(MAX_ROOT_INDEX):.5f}, at k=1: {ec_full:.5f})"
            )
        hi = MAX_ROOT_INDEX
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ec_at(mid) > TARGET_EXPECTED_CHANGE:
                lo = mid
            else:
                hi = mid

    candidates = [k for k in range(max(1, hi - 2), min(MAX_ROOT_INDEX, hi + 2) + 1)]
    best = min(candidates, key=lambda k: (abs(ec_at(k) - TARGET_EXPECTED_CHANGE), k))
    cleaned, clipped, max_imag, ec = evaluated[best]
    return BaseMatrixResult(
        matrix=cleaned,
        k=best,
        expected_change=ec,
        clipped_mass=float(clipped.max()),
        clipped_mass_total=float(clipped.sum()),
        max_imag=max_imag,
    )


# ===========================================================================
# Divergences
# ===========================================================================


def kl_divergence(x, y, mode="conditional"):
    """KL divergence (bits) between two substitution models, weighted by the
    first argument's joint probabilities; asymmetric in its arguments.

    conditional: sum_ij X_(i,j) log2(X_(i|j) / Y_(i|j))
    joint:       sum_ij X_(i,j) log2(X_(i,j) / Y_(i,j))

    with joint probabilities X_(i,j) = X_(i|j) * pi^X_j.
    """
    if mode not in ("joint", "conditional"):
        raise ParameterDomainError(f"mode must be 'joint' or 'conditional', got {mode!r}")
    if not isinstance(x, StochasticMatrix):
        x = StochasticMatrix(x)
    if not isinstance(y, StochasticMatrix):
        y = StochasticMatrix(y)
    xc = np.maximum(x.entries, PROB_FLOOR)
    yc = np.maximum(y.entries, PROB_FLOOR)
    xj = xc * np.maximum(x.stationary, PROB_FLOOR)[None, :]
    if mode == "conditional":
        val = float((xj * np.log2(xc / yc)).sum())
    else:
        yj = yc * np.maximum(y.stationary, PROB_FLOOR)[None, :]
        val = float((xj * np.log2(xj / yj)).sum())
    # Gibbs' inequality guarantees >= 0; clear the floating noise around 0.
    return 0.0 if -1e-6 < val < 0.0 else val


def column_convergence_curve(matrix, t_max):
    """KL divergence (bits) of each column of M^t from the stationary
    distribution, for t = 1..t_max; returns an array of shape (20, t_max).
    """
    if not isinstance(matrix, StochasticMatrix):
        matrix = StochasticMatrix(matrix)
    if t_max < 1:
        raise ParameterDomainError(f"t_max must be >= 1, got {t_max}")
    pi = np.maximum(matrix.stationary, PROB_FLOOR)
    cache = MatrixPowerCache(matrix)
    out = np.empty((N_AMINO_ACIDS, t_max))
    for t in range(1, t_max + 1):
        cols = np.maximum(cache.power(t), PROB_FLOOR)
        out[:, t - 1] = (cols * np.log2(cols / pi[:, None])).sum(axis=0)
    return out


# ===========================================================================
# Matrix file format
# ===========================================================================
#
# Text files with '#'-prefixed headers followed by 20 rows of 20 numbers:
#
#   # order: ARNDCQEGHILKMFPSTWYV
#   # type: conditional            (or: logodds)
#   # scale: 2                     (logodds only; half-bit units)
#   # divisor: 1                   (optional; scores are divided by this
#                                   on load, for ln- or 10log10-scaled files)
#   # freqs: 0.087 0.041 ...       (optional background frequencies)
#
# Rows and columns follow the declared order; files using a different
# amino-acid permutation are permuted to the canonical order on load.
# Numbers use dot-decimal notation regardless of locale.


@dataclass
class MatrixFile:
    values: np.ndarray
    mtype: str = "conditional"
    scale: float = None
    freqs: np.ndarray = None
    headers: dict = field(default_factory=dict)


def _parse_header_line(line):
    body = line.lstrip("#").strip()
    if ":" not in body:
        return None, None
    key, _, value = body.partition(":")
    return key.strip().lower(), value.strip()


def load_matrix_file(path):
    headers = {}
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, value = _parse_header_line(line)
                if key:
                    headers[key] = value
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as exc:
                raise MatrixFormatError(f"{path}: bad numeric row {line!r}") from exc
    if len(rows) != N_AMINO_ACIDS or any(len(r) != N_AMINO_ACIDS for r in rows):
        raise MatrixFormatError(
            f"{path}: expected 20 rows of 20 values, got "
            f"{[len(r) for r in rows][:25]} in {len(rows)} rows"
        )
    values = np.array(rows, dtype=float)

    order = headers.get("order", AMINO_ACIDS).replace(" ", "").upper()
    if sorted(order) != sorted(AMINO_ACIDS):
        raise MatrixFormatError(f"{path}: order {order!r} is not a 20-letter permutation")
    freqs = None
    if "freqs" in headers:
        freqs = np.array([float(tok) for tok in headers["freqs"].split()], dtype=float)
        if freqs.size != N_AMINO_ACIDS:
            raise MatrixFormatError(f"{path}: freqs header must carry 20 values")
    if order != AMINO_ACIDS:
        perm = np.array([AMINO_ACIDS.index(a) for a in order])
        permuted = np.empty_like(values)
        permuted[np.ix_(perm, perm)] = values
        values = permuted
        if freqs is not None:
            pf = np.empty_like(freqs)
            pf[perm] = freqs
            freqs = pf

    mtype = headers.get("type", "conditional").lower()
    if mtype not in ("conditional", "logodds"):
        raise MatrixFormatError(f"{path}: unknown matrix type {mtype!r}")
    scale = float(headers["scale"]) if "scale" in headers else None
    if "divisor" in headers:
        divisor = float(headers["divisor"])
        if divisor == 0:
            raise MatrixFormatError(f"{path}: divisor must be non-zero")
        values = values / divisor
    return MatrixFile(values=values, mtype=mtype, scale=scale, freqs=freqs, headers=headers)


def load_stochastic_matrix(path):
    """Load a conditional-probability matrix; entries are floored at the
    probability floor and columns renormalised."""
    mf = load_matrix_file(path)
    if mf.mtype != "conditional":
        raise MatrixFormatError(
            f"{path}: expected a conditional matrix, file declares type {mf.mtype!r}"
        )
    if np.any(mf.values < -1e-9):
        raise MatrixFormatError(f"{path}: conditional matrix has negative entries")
    return StochasticMatrix.from_unnormalized(mf.values)


def load_scoring_matrix(path, scale=None, freqs=None):
    """Load a log-odds scoring matrix; `scale`/`freqs` arguments override
    absent file headers."""
    mf = load_matrix_file(path)
    if mf.mtype != "logodds":
        raise MatrixFormatError(
            f"{path}: expected a log-odds matrix, file declares type {mf.mtype!r}"
        )
    eff_scale = mf.scale if mf.scale is not None else scale
    if eff_scale is None:
        raise MatrixFormatError(f"{path}: no scale in file header and none supplied")
    background = mf.freqs if mf.freqs is not None else freqs
    return ScoringMatrix(scores=mf.values, scale=float(eff_scale), background=background)


def _fmt(x):
    return f"{float(x):.17g}"


def save_matrix_file(path, values, mtype="conditional", scale=None, freqs=None, extra=None):
    values = np.asarray(values, dtype=float)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# order: {AMINO_ACIDS}\n")
        fh.write(f"# type: {mtype}\n")
        if scale is not None:
            fh.write(f"# scale: {_fmt(scale)}\n")
        if freqs is not None:
            fh.write("# freqs: " + " ".join(_fmt(f) for f in freqs) + "\n")
        for key, value in (extra or {}).items():
            fh.write(f"# {key}: {value}\n")
        for row in values:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def save_stochastic_matrix(path, matrix, extra=None):
    entries = matrix.entries if isinstance(matrix, StochasticMatrix) else matrix
    save_matrix_file(path, entries, mtype="conditional", extra=extra)


def load_frequency_vector(path):
    """Load a 20-vector of amino-acid frequencies (optionally with an
    `# order:` header); normalised on load."""
    headers = {}
    numbers = []
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, value = _parse_header_line(line)
                if key:
                    headers[key] = value
                continue
            try:
                numbers.extend(float(tok) for tok in line.split())
            except ValueError as exc:
                raise MatrixFormatError(f"{path}: bad numeric value in {line!r}") from exc
    if len(numbers) != N_AMINO_ACIDS:
        raise MatrixFormatError(f"{path}: expected 20 frequencies, got {len(numbers)}")
    freqs = np.array(numbers, dtype=float)
    if np.any(freqs < 0):
        raise MatrixFormatError(f"{path}: negative frequency")
    if abs(freqs.sum() - 1.0) > 1e-6:
        raise MatrixFormatError(f"{path}: frequencies sum to {freqs.sum():.8f}, not 1")
    order = headers.get("order", AMINO_ACIDS).replace(" ", "").upper()
    if sorted(order) != sorted(AMINO_ACIDS):
        raise MatrixFormatError(f"{path}: order {order!r} is not a 20-letter permutation")
    if order != AMINO_ACIDS:
        perm = np.array([AMINO_ACIDS.index(a) for a in order])
        permuted = np.empty_like(freqs)
        permuted[perm] = freqs
        freqs = permuted
    return floor_and_normalize_vector(freqs)


def save_frequency_vector(path, freqs):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# order: {AMINO_ACIDS}\n")
        fh.write(" ".join(_fmt(f) for f in np.asarray(freqs, float)) + "\n")
