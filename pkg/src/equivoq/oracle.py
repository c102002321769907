"""Brute-force operational values of cipher systems at tiny blocklengths.

A cipher system of blocklength ``n`` is a pair of deterministic tables

    encoder[x^n, k] -> m        decoder[m, k] -> y^n

driven by an i.i.d. source and a uniform key independent of it. The
eavesdropper sees ``m`` and, at step ``i``, the past source symbols, the past
reconstructions or both, and picks ``z_i`` to minimize the average payoff.
Sequences are indexed big-endian: ``x^n`` maps to ``sum_i x_i * |X|**(n-1-i)``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import ordered_map
from .characterization import (
    AuxTriple,
    SearchOptions,
    SecrecyConfig,
    joint_equivocation,
    reconstruction_equivocation,
    source_equivocation,
)
from .errors import ArgumentError, InfeasibleError, ResourceError
from .logloss import LogLossPayoff, expected_logloss, posterior_strategy
from .prob import JointPmf, Pmf

ENUMERATION_LIMIT = 10**8
AGREEMENT_TOL = 1e-10
GAP_TOL = 1e-9
DECODER_CHUNK = 1 << 14


class DisclosureMode(enum.Enum):
    PAST_SOURCE = "past-source"
    PAST_RECONSTRUCTION = "past-reconstruction"
    PAST_BOTH = "past-both"

    @classmethod
    def parse(cls, s) -> "DisclosureMode":
        if isinstance(s, cls):
            return s
        try:
            return cls(str(s).lower())
        except ValueError:
            raise ArgumentError(
                f"unknown disclosure mode {s!r}; use past-source, past-reconstruction or past-both"
            ) from None


MATCHED_MODE = {
    LogLossPayoff.SOURCE: DisclosureMode.PAST_SOURCE,
    LogLossPayoff.RECONSTRUCTION: DisclosureMode.PAST_RECONSTRUCTION,
    LogLossPayoff.JOINT: DisclosureMode.PAST_BOTH,
}


def is_matched(variant, mode) -> bool:
    return MATCHED_MODE[LogLossPayoff.parse(variant)] is DisclosureMode.parse(mode)


@dataclass(frozen=True, eq=False)
class BlockCode:
    n: int
    source_alphabet: int
    recon_alphabet: int
    key_size: int
    message_size: int
    encoder: np.ndarray  # (|X|**n, key_size) -> message
    decoder: np.ndarray  # (message_size, key_size) -> index of y^n

    def __post_init__(self):
        enc = np.array(self.encoder, dtype=np.int64)
        dec = np.array(self.decoder, dtype=np.int64)
        if min(self.n, self.source_alphabet, self.recon_alphabet, self.key_size, self.message_size) < 1:
            raise ArgumentError("blocklength, alphabets, key and message sizes must be >= 1")
        if enc.shape != (self.source_alphabet**self.n, self.key_size):
            raise ArgumentError(f"encoder shape {enc.shape} != {(self.source_alphabet**self.n, self.key_size)}")
        if dec.shape != (self.message_size, self.key_size):
            raise ArgumentError(f"decoder shape {dec.shape} != {(self.message_size, self.key_size)}")
        if enc.min() < 0 or enc.max() >= self.message_size:
            raise ArgumentError("encoder output outside the message set")
        if dec.min() < 0 or dec.max() >= self.recon_alphabet**self.n:
            raise ArgumentError("decoder output outside the reconstruction sequences")
        enc.setflags(write=False)
        dec.setflags(write=False)
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoder", dec)

    @property
    def rate(self) -> float:
        return math.log2(self.message_size) / self.n

    @property
    def key_rate(self) -> float:
        return math.log2(self.key_size) / self.n

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "source_alphabet": self.source_alphabet,
            "recon_alphabet": self.recon_alphabet,
            "key_size": self.key_size,
            "message_size": self.message_size,
            "encoder": self.encoder.tolist(),
            "decoder": self.decoder.tolist(),
        }

    @classmethod
    def from_json(cls, data) -> "BlockCode":
        return cls(**data)


def _digits(idx, base: int, n: int) -> np.ndarray:
    """Big-endian base-``base`` digits of ``idx``, new trailing axis of length n."""
    idx = np.asarray(idx)
    powers = base ** np.arange(n - 1, -1, -1)
    return (idx[..., None] // powers) % base


def _sequence_probs(source: Pmf, n: int) -> np.ndarray:
    p = source.probs
    for _ in range(n - 1):
        p = np.multiply.outer(p, source.probs).ravel()
    return p


def _check_code(code: BlockCode, source: Pmf):
    if code.source_alphabet != source.alphabet_size:
        raise ArgumentError(
            f"code expects {code.source_alphabet} source symbols, source has {source.alphabet_size}"
        )


class _Outcomes:
    """All (x^n, k) outcomes of a source/key pair and their probabilities."""

    def __init__(self, source: Pmf, n: int, nx: int, ny: int, K: int):
        self.n, self.nx, self.ny, self.K = n, nx, ny, K
        seq = _sequence_probs(source, n)
        self.xi = np.repeat(np.arange(nx**n), K)
        self.k = np.tile(np.arange(K), nx**n)
        self.p = np.repeat(seq, K) / K
        self.xdig = _digits(self.xi, nx, n)


def _cond_entropy_batch(p, hkey, tkey, nh, nt) -> np.ndarray:
    """H(T | H) in bits for each row of the integer key arrays (B, N)."""
    B = hkey.shape[0]
    flat = (np.arange(B)[:, None] * nh + hkey) * nt + tkey
    J = np.bincount(flat.ravel(), weights=np.broadcast_to(p, flat.shape).ravel(), minlength=B * nh * nt)
    J = J.reshape(B, nh, nt)
    Jh = J.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(J > 0, J * np.log2(np.where(J > 0, Jh / np.where(J > 0, J, 1.0), 1.0)), 0.0)
    return np.maximum(terms.sum(axis=(1, 2)), 0.0)


def _history_key(out: _Outcomes, m, ydig, mode: DisclosureMode, i: int):
    nx, ny = out.nx, out.ny
    xpre = (out.xi // nx ** (out.n - i))[None, :]
    ypre = np.zeros_like(m)
    for j in range(i):
        ypre = ypre * ny + ydig[..., j]
    if mode is DisclosureMode.PAST_SOURCE:
        return m * nx**i + xpre, nx**i
    if mode is DisclosureMode.PAST_RECONSTRUCTION:
        return m * ny**i + ypre, ny**i
    return (m * nx**i + xpre) * ny**i + ypre, (nx * ny) ** i


def _target_key(out: _Outcomes, ydig, variant: LogLossPayoff, i: int):
    x = np.broadcast_to(out.xdig[None, :, i], ydig.shape[:-1])
    if variant is LogLossPayoff.SOURCE:
        return x, out.nx
    if variant is LogLossPayoff.RECONSTRUCTION:
        return ydig[..., i], out.ny
    return x * out.ny + ydig[..., i], out.nx * out.ny


def _closed_form_batch(out: _Outcomes, m, y, M, variant: LogLossPayoff):
    nseq_x = out.nx**out.n
    nseq_y = out.ny**out.n
    if variant is LogLossPayoff.SOURCE:
        t, nt = np.broadcast_to(out.xi, m.shape), nseq_x
    elif variant is LogLossPayoff.RECONSTRUCTION:
        t, nt = y, nseq_y
    else:
        t, nt = out.xi[None, :] * nseq_y + y, nseq_x * nseq_y
    return _cond_entropy_batch(out.p, m, t, M, nt) / out.n


def _stepwise_batch(out: _Outcomes, m, ydig, M, mode, variant):
    total = np.zeros(m.shape[0])
    for i in range(out.n):
        h, nh = _history_key(out, m, ydig, mode, i)
        t, nt = _target_key(out, ydig, variant, i)
        total += _cond_entropy_batch(out.p, h, t, M * nh, nt)
    return total / out.n


def _distortion_batch(out: _Outcomes, ydig, dmat):
    per = dmat[out.xdig[None, :, :], ydig]  # (B, N, n)
    return (per.mean(axis=2) * out.p[None, :]).sum(axis=1)


def _code_arrays(code: BlockCode, out: _Outcomes):
    m = code.encoder[out.xi, out.k][None, :]
    y = code.decoder[m, out.k[None, :]]
    return m, y, _digits(y, code.recon_alphabet, code.n)


def induced_joint(code: BlockCode, source: Pmf) -> JointPmf:
    """Exact law of (X^n, K, M, Y^n) with axes labelled xn, k, m, yn."""
    _check_code(code, source)
    out = _Outcomes(source, code.n, code.source_alphabet, code.recon_alphabet, code.key_size)
    m, y, _ = _code_arrays(code, out)
    t = np.zeros((code.source_alphabet**code.n, code.key_size, code.message_size, code.recon_alphabet**code.n))
    np.add.at(t, (out.xi, out.k, m[0], y[0]), out.p)
    return JointPmf(t, ("xn", "k", "m", "yn"))


def closed_form_equivocation(code: BlockCode, source: Pmf, variant) -> float:
    """(1/n) H(target^n | M) for the target selected by ``variant``."""
    variant = LogLossPayoff.parse(variant)
    _check_code(code, source)
    out = _Outcomes(source, code.n, code.source_alphabet, code.recon_alphabet, code.key_size)
    m, y, _ = _code_arrays(code, out)
    return float(_closed_form_batch(out, m, y, code.message_size, variant)[0])


def _strategy_value(code: BlockCode, source: Pmf, mode: DisclosureMode, variant: LogLossPayoff) -> float:
    """Average payoff of the explicit posterior strategy, built step by step."""
    out = _Outcomes(source, code.n, code.source_alphabet, code.recon_alphabet, code.key_size)
    m, _, ydig = _code_arrays(code, out)
    total = 0.0
    for i in range(code.n):
        h, nh = _history_key(out, m, ydig, mode, i)
        t, nt = _target_key(out, ydig, variant, i)
        table = np.zeros((code.message_size * nh, nt))
        np.add.at(table, (h[0], t[0]), out.p)
        total += expected_logloss(posterior_strategy(table), table)
    return total / code.n


def eavesdropper_value_logloss(code: BlockCode, source: Pmf, mode, variant) -> float:
    """Minimum average log-loss over causal eavesdropper strategies, bits/symbol.

    The value is computed from per-history posterior strategies. For the
    matched pairings (pi1/past-source, pi2/past-reconstruction,
    pi3/past-both) it is also computed in closed form as (1/n) H(target^n | M)
    and the two are required to agree.
    """
    mode = DisclosureMode.parse(mode)
    variant = LogLossPayoff.parse(variant)
    _check_code(code, source)
    value = _strategy_value(code, source, mode, variant)
    if MATCHED_MODE[variant] is mode:
        closed = closed_form_equivocation(code, source, variant)
        if abs(closed - value) > AGREEMENT_TOL:
            raise AssertionError(
                f"posterior-strategy value {value!r} differs from closed form {closed!r}"
            )
    return value


def _general_batch(out: _Outcomes, m, ydig, M, mode, payoff):
    nx, ny, nz = payoff.shape
    total = np.zeros(m.shape[0])
    for i in range(out.n):
        h, nh = _history_key(out, m, ydig, mode, i)
        x = np.broadcast_to(out.xdig[None, :, i], m.shape)
        t = x * ny + ydig[..., i]
        B = m.shape[0]
        flat = (np.arange(B)[:, None] * (M * nh) + h) * (nx * ny) + t
        J = np.bincount(flat.ravel(), weights=np.broadcast_to(out.p, flat.shape).ravel(),
                        minlength=B * M * nh * nx * ny).reshape(B, M * nh, nx * ny)
        cost = J @ payoff.reshape(nx * ny, nz)  # (B, H, Z)
        total += cost.min(axis=2).sum(axis=1)
    return total / out.n


def eavesdropper_value_general(code: BlockCode, source: Pmf, mode, payoff) -> float:
    """Exact best-response value for a finite-action payoff ``payoff[x, y, z]``.

    The eavesdropper's action at step i cannot affect what is disclosed later,
    so minimizing the conditional expected payoff separately for each step
    and each history is optimal.
    """
    mode = DisclosureMode.parse(mode)
    _check_code(code, source)
    payoff = np.asarray(payoff, dtype=float)
    if payoff.ndim != 3 or payoff.shape[:2] != (code.source_alphabet, code.recon_alphabet):
        raise ArgumentError(
            f"payoff must have shape (|X|, |Y|, |Z|) = ({code.source_alphabet}, {code.recon_alphabet}, .), "
            f"got {payoff.shape}"
        )
    if not np.all(np.isfinite(payoff)):
        raise ArgumentError("payoff entries must be finite")
    out = _Outcomes(source, code.n, code.source_alphabet, code.recon_alphabet, code.key_size)
    m, _, ydig = _code_arrays(code, out)
    return float(_general_batch(out, m, ydig, code.message_size, mode, payoff)[0])


def code_count(n: int, nx: int, ny: int, M: int, K: int) -> int:
    return M ** (nx**n * K) * (ny**n) ** (M * K)


def _count_text(count: int) -> str:
    return str(count) if count < 10**15 else f"{float(count):.3e}"


def _check_enumeration(n, nx, ny, M, K) -> int:
    count = code_count(n, nx, ny, M, K)
    if count > ENUMERATION_LIMIT:
        raise ResourceError(
            f"enumerating {_count_text(count)} codes (n={n}, |M|={M}, |K|={K}) exceeds the limit {ENUMERATION_LIMIT}",
            count=count,
        )
    return count


def enumerate_codes(n: int, source_alphabet: int, recon_alphabet: int, message_size: int, key_size: int):
    """Every deterministic (encoder, decoder) pair once, encoder-major order."""
    _check_enumeration(n, source_alphabet, recon_alphabet, message_size, key_size)
    enc_cells = source_alphabet**n * key_size
    dec_cells = message_size * key_size
    for enc in itertools.product(range(message_size), repeat=enc_cells):
        enc_t = np.array(enc).reshape(source_alphabet**n, key_size)
        for dec in itertools.product(range(recon_alphabet**n), repeat=dec_cells):
            yield BlockCode(n, source_alphabet, recon_alphabet, key_size, message_size, enc_t,
                            np.array(dec).reshape(message_size, key_size))


def code_values(n: int, source: Pmf, recon_alphabet: int, message_size: int, key_size: int, variant,
                mode=None, dmat=None) -> dict:
    """Values of every code of ``enumerate_codes`` in the same order, batched.

    Returns ``closed`` ((1/n) H(target^n | M)) and, when ``mode`` is given,
    ``stepwise`` (per-history posterior strategies summed step by step);
    ``distortion`` is included when ``dmat`` is given.
    """
    variant = LogLossPayoff.parse(variant)
    mode = None if mode is None else DisclosureMode.parse(mode)
    nx = source.alphabet_size
    ny, M, K = recon_alphabet, message_size, key_size
    _check_enumeration(n, nx, ny, M, K)
    out = _Outcomes(source, n, nx, ny, K)
    dec_all = np.array(list(itertools.product(range(ny**n), repeat=M * K)), dtype=np.int64)
    closed, stepwise, dist = [], [], []
    for e in itertools.product(range(M), repeat=nx**n * K):
        enc = np.array(e, dtype=np.int64).reshape(nx**n, K)
        m = np.broadcast_to(enc[out.xi, out.k][None, :], (len(dec_all), len(out.p)))
        y = dec_all[:, m[0] * K + out.k]
        ydig = _digits(y, ny, n)
        closed.append(_closed_form_batch(out, m, y, M, variant))
        if mode is not None:
            stepwise.append(_stepwise_batch(out, m, ydig, M, mode, variant))
        if dmat is not None:
            dist.append(_distortion_batch(out, ydig, np.asarray(dmat, dtype=float)))
    res = {"closed": np.concatenate(closed)}
    if mode is not None:
        res["stepwise"] = np.concatenate(stepwise)
    if dmat is not None:
        res["distortion"] = np.concatenate(dist)
    return res


def message_key_sizes(n: int, rate: float, key_rate: float) -> tuple:
    """(|M|, |K|) = floor(2**(n R)), floor(2**(n R0)), each at least 1."""
    def size(r):
        return max(1, int(math.floor(2.0 ** (n * r) * (1 + 1e-12))))
    return size(rate), size(key_rate)


@dataclass(frozen=True, eq=False)
class OracleReport:
    n: int
    mode: str
    variant: str
    best_code: BlockCode
    operational_value: float
    intended_distortion: float
    characterization_value: float | None
    gap: float | None
    codes_evaluated: int
    feasible_codes: int

    @property
    def consistent(self) -> bool:
        return self.gap is None or self.gap >= -GAP_TOL

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "mode": self.mode,
            "variant": self.variant,
            "best_code": self.best_code.to_json(),
            "operational_value": self.operational_value,
            "intended_distortion": self.intended_distortion,
            "characterization_value": self.characterization_value,
            "gap": self.gap,
            "codes_evaluated": self.codes_evaluated,
            "feasible_codes": self.feasible_codes,
        }

    @classmethod
    def from_json(cls, data) -> "OracleReport":
        kw = dict(data)
        kw["best_code"] = BlockCode.from_json(kw["best_code"])
        return cls(**kw)


def code_aux_triple(code: BlockCode, source: Pmf) -> AuxTriple:
    """Single-letter triple with U = (M, K) induced by a blocklength-1 code.

    Y is a function of U, so X - U - Y holds; the triple meets the code's
    distortion, has I(X;Y) <= log|M|, and its max-form objectives dominate
    the code's operational equivocations.
    """
    if code.n != 1:
        raise ArgumentError("only blocklength-1 codes induce a single-letter triple")
    j = induced_joint(code, source).probs  # (x, k, m, y)
    t = np.transpose(j, (0, 2, 1, 3)).reshape(code.source_alphabet, -1, code.recon_alphabet)
    w = t.sum(axis=2) / source.probs[:, None]
    v = t.sum(axis=0)
    mass = v.sum(axis=1, keepdims=True)
    v = np.where(mass > 0, v / np.where(mass > 0, mass, 1.0), 1.0 / code.recon_alphabet)
    return AuxTriple.from_conditionals(source, w, v)


def _evaluate_encoder(args):
    (enc, out, dec_all, M, mode, variant, dmat, limit, use_filter) = args
    m = np.broadcast_to(enc[out.xi, out.k][None, :], (len(dec_all), len(out.p)))
    y = dec_all[:, m[0] * out.K + out.k]
    ydig = _digits(y, out.ny, out.n)
    dist = _distortion_batch(out, ydig, dmat)
    ok = dist <= limit + GAP_TOL if use_filter else np.ones(len(dist), dtype=bool)
    if not ok.any():
        return None, 0
    value = _stepwise_batch(out, m, ydig, M, mode, variant)
    if MATCHED_MODE[variant] is mode:
        closed = _closed_form_batch(out, m, y, M, variant)
        worst = float(np.max(np.abs(closed - value)))
        if worst > AGREEMENT_TOL:
            raise AssertionError(f"posterior-strategy and closed-form values differ by {worst:.3g}")
    masked = np.where(ok, value, -np.inf)
    j = int(np.argmax(masked))
    return (float(masked[j]), j, float(dist[j])), int(ok.sum())


def operational_value(
    n: int,
    cfg: SecrecyConfig,
    mode,
    variant,
    distortion_filter: bool = True,
    opts: SearchOptions | None = None,
    characterize: bool = True,
) -> OracleReport:
    """Best log-loss equivocation over all deterministic codes of blocklength n.

    Message and key sizes come from ``message_key_sizes``. With
    ``distortion_filter`` only codes meeting the receiver's distortion limit
    compete. For matched variant/mode pairings the corresponding
    characterization is attached and ``gap = characterization - operational``.
    """
    mode = DisclosureMode.parse(mode)
    variant = LogLossPayoff.parse(variant)
    nx, ny = cfg.shape
    M, K = message_key_sizes(n, cfg.rate, cfg.key_rate)
    total = _check_enumeration(n, nx, ny, M, K)
    out = _Outcomes(cfg.source, n, nx, ny, K)
    dmat = cfg.distortion.matrix
    enc_cells = nx**n * K
    dec_all = np.array(list(itertools.product(range(ny**n), repeat=M * K)), dtype=np.int64)
    n_dec = len(dec_all)
    encoders = (np.array(e, dtype=np.int64).reshape(nx**n, K)
                for e in itertools.product(range(M), repeat=enc_cells))

    best = None  # (value, enumeration index, distortion, encoder, decoder row)
    feasible = 0
    batch = []

    def flush():
        nonlocal best, feasible
        args = [(enc, out, dec_all, M, mode, variant, dmat, cfg.limit, distortion_filter) for _, enc in batch]
        for (e_idx, enc), (res, n_ok) in zip(batch, ordered_map(_evaluate_encoder, args)):
            feasible += n_ok
            if res is None:
                continue
            val, j, dist = res
            if best is None or val > best[0]:
                best = (val, e_idx * n_dec + j, dist, enc, dec_all[j])
        batch.clear()

    for e_idx, enc in enumerate(encoders):
        batch.append((e_idx, enc))
        if len(batch) >= 64:
            flush()
    flush()
    if best is None:
        raise InfeasibleError(f"no code with n={n}, |M|={M}, |K|={K} meets distortion {cfg.limit}")
    value, _, dist, enc, dec = best
    code = BlockCode(n, nx, ny, K, M, enc, dec.reshape(M, K))

    char = None
    if characterize and MATCHED_MODE[variant] is mode:
        if variant is LogLossPayoff.SOURCE:
            char = source_equivocation(cfg).value
        else:
            seeds = [code_aux_triple(code, cfg.source)] if n == 1 else None
            solver = reconstruction_equivocation if variant is LogLossPayoff.RECONSTRUCTION else joint_equivocation
            char = solver(cfg, opts, seeds=seeds).value
    gap = None if char is None else char - value
    return OracleReport(n, mode.value, variant.value, code, value, dist, char, gap, total, feasible)
