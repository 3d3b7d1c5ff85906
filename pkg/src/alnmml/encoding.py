"""Assembly of the total lossless encoding length of a benchmark under a
model bundle.

The total splits into global statement costs (substitution matrix, indel
multinomial, per-bin Dirichlet parameters) plus four per-alignment terms:
the divergence time, the 3-state machine parameters, the state string,
and the residues themselves (matched pairs through the matrix, indel
residues through the multinomial).
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IncompleteBundleError, ParameterDomainError
from .mml import (
    msglen_alpha,
    msglen_simplex_vector_uniform_prior,
    msglen_theta_given_alpha,
)
from .markov import MatrixPowerCache
from .types import (
    N_AMINO_ACIDS,
    PROB_FLOOR,
    TIME_BINS,
    TransitionParams,
    encode_sequence,
    three_state_stationary,
)

LOG2_TIME_RANGE = float(np.log2(TIME_BINS))

_STATE_BYTE_TO_INDEX = np.full(256, -1, dtype=np.int64)
_STATE_BYTE_TO_INDEX[ord("m")] = 0
_STATE_BYTE_TO_INDEX[ord("i")] = 1
_STATE_BYTE_TO_INDEX[ord("d")] = 2


def msglen_time(t):
    """Statement length of one divergence time, uniform over [1, 1000]."""
    if not 1 <= int(t) <= TIME_BINS:
        raise ParameterDomainError(f"time {t} outside [1, {TIME_BINS}]")
    return LOG2_TIME_RANGE


# ===========================================================================
# Record preprocessing
# ===========================================================================


@dataclass(frozen=True)
class PreparedRecord:
    """Index arrays and sufficient statistics extracted from one record.

    match_counts = (#m->m, #m->{i,d}) and insert_counts pools the
    insert/delete symmetric transitions: (#ii+#dd, #im+#dm, #id+#di).
    """

    ident: str
    match_src: np.ndarray       # source residue index per match column
    match_tgt: np.ndarray       # target residue index per match column
    delete_residues: np.ndarray
    insert_residues: np.ndarray
    match_counts: np.ndarray    # shape (2,)
    insert_counts: np.ndarray   # shape (3,)
    first_state: int            # 0=m, 1=i, 2=d


def state_indices(a):
    """Encode a 3-state string as an index array over (m, i, d)."""
    arr = _STATE_BYTE_TO_INDEX[np.frombuffer(a.encode("ascii"), dtype=np.uint8)]
    if np.any(arr < 0):
        raise ParameterDomainError(f"invalid state characters in {a[:40]!r}")
    return arr


def transition_counts(a):
    """(3, 3) table of observed state transitions plus the first state."""
    idx = state_indices(a)
    table = np.zeros((3, 3), dtype=np.int64)
    if idx.size > 1:
        flat = np.bincount(idx[:-1] * 3 + idx[1:], minlength=9)
        table = flat.reshape(3, 3)
    return table, int(idx[0])


def pooled_transition_counts(table):
    """Collapse a 3x3 transition count table into the free-parameter
    sufficient statistics (match 2-vector, insert/delete pooled 3-vector)."""
    match2 = np.array([table[0, 0], table[0, 1] + table[0, 2]], dtype=float)
    ins3 = np.array(
        [
            table[1, 1] + table[2, 2],
            table[1, 0] + table[2, 0],
            table[1, 2] + table[2, 1],
        ],
        dtype=float,
    )
    return match2, ins3


def prepare_record(rec):
    states = state_indices(rec.a)
    s_idx = encode_sequence(rec.s)
    t_idx = encode_sequence(rec.t)
    # Positions in S advance on m/d states; positions in T advance on m/i.
    s_pos = np.cumsum(states != 1) - 1
    t_pos = np.cumsum(states != 2) - 1
    m_mask = states == 0
    table, first = transition_counts(rec.a)
    match2, ins3 = pooled_transition_counts(table)
    return PreparedRecord(
        ident=rec.ident,
        match_src=s_idx[s_pos[m_mask]],
        match_tgt=t_idx[t_pos[m_mask]],
        delete_residues=s_idx[s_pos[states == 2]],
        insert_residues=t_idx[t_pos[states == 1]],
        match_counts=match2,
        insert_counts=ins3,
        first_state=first,
    )


def prepare_records(records):
    return [prepare_record(r) for r in records]


# ===========================================================================
# Per-part statement lengths
# ===========================================================================


def msglen_matrix(matrix, column_counts):
    """Statement length of the whole substitution matrix: the sum of its 20
    column costs under the uniform Dirichlet prior, each informed by the
    number of matched pairs whose source is that column's amino acid."""
    column_counts = np.asarray(column_counts, dtype=float)
    if column_counts.shape != (N_AMINO_ACIDS,):
        raise ParameterDomainError("column_counts must be a 20-vector")
    entries = matrix.entries if hasattr(matrix, "entries") else np.asarray(matrix, float)
    cols = np.maximum(entries.T, PROB_FLOOR)
    return float(msglen_simplex_vector_uniform_prior(cols, column_counts).sum())


def msglen_indel_model(indel, indel_counts):
    """Statement length of the 20-nomial indel model under a uniform prior."""
    indel_counts = np.asarray(indel_counts, dtype=float)
    probs = np.maximum(indel.probs, PROB_FLOOR)
    return float(msglen_simplex_vector_uniform_prior(probs, indel_counts.sum()))


def fit_indel_model(indel_counts):
    """MML estimate of the indel multinomial from observed indel residue
    counts (uniform prior): p_i = (n_i + 1/2) / (N + 10)."""
    from .mml import mml_multinomial_estimate
    from .types import IndelModel

    probs = mml_multinomial_estimate(
        np.asarray(indel_counts, dtype=float), np.ones(N_AMINO_ACIDS)
    )
    return IndelModel(probs)


def state_string_cost(match_counts, insert_counts, first_state, theta):
    """Bits to encode a 3-state string from its transition counts: each
    transition costs the surprisal of the machine's probability for it and
    the first symbol is coded from the machine's stationary distribution."""
    p_mm, p_ii, p_mi = theta.p_mm, theta.p_ii, theta.p_mi
    p_leave_m = max(1.0 - p_mm, PROB_FLOOR)
    p_di = max(1.0 - p_ii - p_mi, PROB_FLOOR)
    bits = -(
        match_counts[0] * np.log2(p_mm)
        + match_counts[1] * np.log2(p_leave_m / 2.0)
        + insert_counts[0] * np.log2(p_ii)
        + insert_counts[1] * np.log2(p_mi)
        + insert_counts[2] * np.log2(p_di)
    )
    if first_state is not None:
        start = np.maximum(three_state_stationary(theta), PROB_FLOOR)
        bits -= np.log2(start[first_state])
    return float(bits)


def msglen_alignment_states(a, theta):
    """Statement length of a 3-state string under one machine's parameters."""
    table, first = transition_counts(a)
    match2, ins3 = pooled_transition_counts(table)
    return state_string_cost(match2, ins3, first, theta)


def msglen_theta(prep, theta, alpha_match, alpha_insert):
    """Statement length of one alignment's machine parameters under the
    time bin's Dirichlet pair (match part + insert part)."""
    return float(
        msglen_theta_given_alpha(
            theta.match_simplex, alpha_match, prep.match_counts.sum()
        )
        + msglen_theta_given_alpha(
            theta.insert_simplex, alpha_insert, prep.insert_counts.sum()
        )
    )


def residue_costs(prep, neg_log2_power_t, neg_log2_pi, neg_log2_indel):
    """(match, insert, delete) residue bits for one prepared record.

    Matched pairs are coded jointly: the source residue from the
    stationary distribution and the target from the source's conditional
    column of M^t; indel residues are coded from the indel multinomial.
    """
    match_bits = float(
        neg_log2_pi[prep.match_src].sum()
        + neg_log2_power_t[prep.match_tgt, prep.match_src].sum()
    )
    insert_bits = float(neg_log2_indel[prep.insert_residues].sum())
    delete_bits = float(neg_log2_indel[prep.delete_residues].sum())
    return match_bits, insert_bits, delete_bits


def msglen_sequences_given_alignment(rec, matrix_at_t, indel):
    """Statement length of the two sequences given the alignment, a matrix
    already raised to the pair's divergence time, and the indel model."""
    prep = rec if isinstance(rec, PreparedRecord) else prepare_record(rec)
    neg_log2_mt = -np.log2(np.maximum(matrix_at_t.entries, PROB_FLOOR))
    neg_log2_pi = -np.log2(np.maximum(matrix_at_t.stationary, PROB_FLOOR))
    neg_log2_p = -np.log2(np.maximum(indel.probs, PROB_FLOOR))
    return float(sum(residue_costs(prep, neg_log2_mt, neg_log2_pi, neg_log2_p)))


# ===========================================================================
# Whole-benchmark assembly
# ===========================================================================


@dataclass
class RecordEncoding:
    ident: str
    t: int
    theta: TransitionParams
    i_time: float
    i_theta: float
    i_states: float
    i_residues_match: float
    i_residues_insert: float
    i_residues_delete: float

    @property
    def total(self):
        return (
            self.i_time
            + self.i_theta
            + self.i_states
            + self.i_residues_match
            + self.i_residues_insert
            + self.i_residues_delete
        )


@dataclass
class EncodingReport:
    i_matrix: float
    i_indel_model: float
    i_alphas: float
    records: list = field(default_factory=list)

    @property
    def total(self):
        return (
            self.i_matrix
            + self.i_indel_model
            + self.i_alphas
            + sum(r.total for r in self.records)
        )

    def to_json(self, path):
        payload = {
            "i_matrix": round(self.i_matrix, 2),
            "i_indel_model": round(self.i_indel_model, 2),
            "i_alphas": round(self.i_alphas, 2),
            "total": round(self.total, 2),
            "records": [
                {
                    "id": r.ident,
                    "t": r.t,
                    "theta": [r.theta.p_mm, r.theta.p_ii, r.theta.p_mi],
                    "i_time": round(r.i_time, 2),
                    "i_theta": round(r.i_theta, 2),
                    "i_states": round(r.i_states, 2),
                    "i_residues_match": round(r.i_residues_match, 2),
                    "i_residues_insert": round(r.i_residues_insert, 2),
                    "i_residues_delete": round(r.i_residues_delete, 2),
                    "total": round(r.total, 2),
                }
                for r in self.records
            ],
        }
        with open(path, "w", encoding="ascii") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "id", "t", "p_mm", "p_ii", "p_mi", "i_time", "i_theta",
                    "i_states", "i_residues_match", "i_residues_insert",
                    "i_residues_delete", "total",
                ]
            )
            for r in self.records:
                writer.writerow(
                    [
                        r.ident, r.t,
                        f"{r.theta.p_mm:.10g}", f"{r.theta.p_ii:.10g}", f"{r.theta.p_mi:.10g}",
                        f"{r.i_time:.2f}", f"{r.i_theta:.2f}", f"{r.i_states:.2f}",
                        f"{r.i_residues_match:.2f}", f"{r.i_residues_insert:.2f}",
                        f"{r.i_residues_delete:.2f}", f"{r.total:.2f}",
                    ]
                )


def source_column_counts(preps):
    """Matched-pair observation totals per source amino acid (informs the
    per-column precision of the matrix statement)."""
    counts = np.zeros(N_AMINO_ACIDS, dtype=np.int64)
    for p in preps:
        counts += np.bincount(p.match_src, minlength=N_AMINO_ACIDS)
    return counts


def indel_residue_counts(preps):
    counts = np.zeros(N_AMINO_ACIDS, dtype=np.int64)
    for p in preps:
        counts += np.bincount(p.insert_residues, minlength=N_AMINO_ACIDS)
        counts += np.bincount(p.delete_residues, minlength=N_AMINO_ACIDS)
    return counts


def msglen_alphas_for_bins(dirichlets, bin_sizes):
    """Statement length of the time-dependent Dirichlet parameters, charged
    for every populated time bin (empty bins convey no parameters)."""
    bits = 0.0
    for t, n in sorted(bin_sizes.items()):
        if n <= 0:
            continue
        alpha_m, alpha_i = dirichlets.at(t)
        bits += msglen_alpha(alpha_m, n, "match")
        bits += msglen_alpha(alpha_i, n, "insert")
    return float(bits)


def total_message_length(records, bundle, preps=None):
    """Assemble the full two-part encoding length of a benchmark under a
    complete model bundle into an itemised EncodingReport."""
    records = list(records)
    bundle.require_per_record(len(records))
    if preps is None:
        preps = prepare_records(records)

    cache = MatrixPowerCache(bundle.matrix)
    neg_log2_pi = -np.log2(np.maximum(bundle.matrix.stationary, PROB_FLOOR))
    neg_log2_p = -np.log2(np.maximum(bundle.indel.probs, PROB_FLOOR))

    bin_sizes = {}
    for t in bundle.times:
        bin_sizes[int(t)] = bin_sizes.get(int(t), 0) + 1

    report = EncodingReport(
        i_matrix=msglen_matrix(bundle.matrix, source_column_counts(preps)),
        i_indel_model=msglen_indel_model(bundle.indel, indel_residue_counts(preps)),
        i_alphas=msglen_alphas_for_bins(bundle.dirichlets, bin_sizes),
    )
    for prep, theta, t in zip(preps, bundle.thetas, bundle.times):
        t = int(t)
        alpha_m, alpha_i = bundle.dirichlets.at(t)
        m_bits, i_bits, d_bits = residue_costs(
            prep, cache.neg_log2_power(t), neg_log2_pi, neg_log2_p
        )
        report.records.append(
            RecordEncoding(
                ident=prep.ident,
                t=t,
                theta=theta,
                i_time=msglen_time(t),
                i_theta=msglen_theta(prep, theta, alpha_m, alpha_i),
                i_states=state_string_cost(
                    prep.match_counts, prep.insert_counts, prep.first_state, theta
                ),
                i_residues_match=m_bits,
                i_residues_insert=i_bits,
                i_residues_delete=d_bits,
            )
        )
    if len(report.records) != len(records):
        raise IncompleteBundleError("internal: record/parameter mismatch")
    return report
