"""Optimal equivocation of a cipher system with a distortion-constrained receiver.

For source ``P_X``, receiver distortion ``d`` with limit ``D``, message rate
``R`` and key rate ``R0`` (bits per source symbol):

* equivocation of the source is ``H(X) - [R(D) - R0]+``;
* equivocation of the reconstruction is the maximum of
  ``H(Y) - [I(Y;U) - R0]+``;
* equivocation of source and reconstruction together is the maximum of
  ``H(X,Y) - [I(X,Y;U) - R0]+``;

where both maxima range over triples with X - U - Y Markov, E d(X,Y) <= D
and I(X;Y) <= R. The maxima are nonconvex and are found by local search
(a lower bound on the true value); ``exhaustive_aux_search`` is an
independent grid oracle for small alphabets.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import _search
from .errors import ArgumentError, InfeasibleError, ResourceError
from .prob import JointPmf, Kernel, Pmf, compose, entropy, mutual_information
from .ratedist import ENDPOINT_TOL, DistortionSpec, rd_function, rd_test_channel

MEMBERSHIP_TOL = 1e-9
GRID_LIMIT = 10**8
TIE_TOL = 1e-9

ATTAINABILITY_NOTE = (
    "best objective found by local search; a lower bound on the maximum over the feasible set"
)


class Equivocation(enum.Enum):
    SOURCE = "source"
    RECONSTRUCTION = "reconstruction"
    JOINT = "joint"

    @classmethod
    def parse(cls, s) -> "Equivocation":
        if isinstance(s, cls):
            return s
        try:
            return cls(str(s).lower())
        except ValueError:
            raise ArgumentError(f"unknown equivocation {s!r}; use source, reconstruction or joint") from None


@dataclass(frozen=True, eq=False)
class SecrecyConfig:
    """Problem instance (P_X, d, D, R, R0).

    With ``check=True`` (the default) the instance must be communication
    feasible, R >= R(D); D below the least achievable distortion raises
    InfeasibleError.
    """

    source: Pmf
    distortion: DistortionSpec
    rate: float
    key_rate: float
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not isinstance(self.source, Pmf):
            object.__setattr__(self, "source", Pmf(self.source))
        self.distortion._check_source(self.source)
        for name in ("rate", "key_rate"):
            val = float(getattr(self, name))
            if not math.isfinite(val) or val < 0:
                raise ArgumentError(f"{name} must be finite and >= 0, got {getattr(self, name)!r}")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "_rd", None)
        if self.check:
            rd = self.rd
            if self.rate < rd - MEMBERSHIP_TOL:
                raise InfeasibleError(
                    f"rate {self.rate} is below R(D) = {rd:.12g}; the receiver cannot meet D = {self.limit}"
                )

    @property
    def limit(self) -> float:
        return self.distortion.limit

    @property
    def rd(self) -> float:
        """R(D) for this instance (cached)."""
        if self._rd is None:
            object.__setattr__(self, "_rd", rd_function(self.source, self.distortion))
        return self._rd

    @property
    def shape(self) -> tuple:
        return self.distortion.shape

    def replace(self, **changes) -> "SecrecyConfig":
        limit = changes.pop("limit", None)
        kw = dict(source=self.source, distortion=self.distortion, rate=self.rate,
                  key_rate=self.key_rate, check=self.check)
        kw.update(changes)
        if limit is not None:
            kw["distortion"] = kw["distortion"].with_limit(limit)
        return SecrecyConfig(**kw)

    def to_json(self) -> dict:
        return {
            "source": self.source.to_json(),
            "distortion": self.distortion.to_json(),
            "rate": self.rate,
            "key_rate": self.key_rate,
        }

    @classmethod
    def from_json(cls, data, check=True) -> "SecrecyConfig":
        return cls(
            Pmf(data["source"]),
            DistortionSpec.from_json(data["distortion"]),
            data["rate"],
            data["key_rate"],
            check=check,
        )


@dataclass(frozen=True, eq=False)
class AuxTriple:
    """(p_U, P_{X|U}, P_{Y|U}); kernels are indexed by u."""

    p_u: Pmf
    k_xu: Kernel
    k_yu: Kernel

    def __post_init__(self):
        nu = self.p_u.alphabet_size
        if self.k_xu.n_inputs != nu or self.k_yu.n_inputs != nu:
            raise ArgumentError(
                f"kernels have {self.k_xu.n_inputs} and {self.k_yu.n_inputs} rows, expected |U| = {nu}"
            )

    @property
    def aux_cardinality(self) -> int:
        return self.p_u.alphabet_size

    def joint(self) -> JointPmf:
        return compose(self.p_u, self.k_xu, self.k_yu)

    @classmethod
    def from_conditionals(cls, px, w, v) -> "AuxTriple":
        """Build from w[x, u] = P(u|x) and v[u, y] = P(y|u)."""
        px = np.asarray(px.probs if isinstance(px, Pmf) else px, dtype=float)
        w = np.asarray(w, dtype=float)
        v = np.asarray(v, dtype=float)
        joint_xu = px[:, None] * w
        pu = joint_xu.sum(axis=0)
        safe = np.where(pu > 0, pu, 1.0)
        k_xu = np.where(pu[:, None] > 0, joint_xu.T / safe[:, None], 1.0 / len(px))
        v = v / v.sum(axis=1, keepdims=True)
        return cls(Pmf(pu / pu.sum()), Kernel(k_xu), Kernel(v))

    def conditionals(self, px, nu: int | None = None) -> tuple:
        """(w, v) for this triple, padded with unused U symbols up to ``nu``."""
        px = np.asarray(px.probs if isinstance(px, Pmf) else px, dtype=float)
        k = self.aux_cardinality
        nu = k if nu is None else nu
        if nu < k:
            raise ArgumentError(f"cannot embed |U| = {k} into {nu} symbols")
        joint_xu = self.p_u.probs[None, :] * self.k_xu.rows.T
        safe = np.where(px > 0, px, 1.0)[:, None]
        w = np.zeros((len(px), nu))
        w[:, :k] = np.where(px[:, None] > 0, joint_xu / safe, 1.0 / k)
        w /= w.sum(axis=1, keepdims=True)
        v = np.full((nu, self.k_yu.n_outputs), 1.0 / self.k_yu.n_outputs)
        v[:k] = self.k_yu.rows
        return w, v

    def to_json(self) -> dict:
        return {"p_u": self.p_u.to_json(), "k_xu": self.k_xu.to_json(), "k_yu": self.k_yu.to_json()}

    @classmethod
    def from_json(cls, data) -> "AuxTriple":
        return cls(Pmf(data["p_u"]), Kernel(data["k_xu"]), Kernel(data["k_yu"]))


@dataclass(frozen=True)
class MembershipReport:
    """Slack of each constraint; negative slack means violated."""

    member: bool
    distortion_slack: float
    rate_slack: float
    marginal_error: float
    expected_distortion: float
    mutual_information_xy: float

    def __bool__(self):
        return self.member


def check_membership(t: AuxTriple, cfg: SecrecyConfig, tol: float = MEMBERSHIP_TOL) -> MembershipReport:
    """Test whether ``t`` lies in the feasible set of ``cfg``.

    Markovity holds by construction; the X marginal, the distortion limit and
    the rate limit are checked with tolerance ``tol``.
    """
    nx, ny = cfg.shape
    if t.k_xu.n_outputs != nx or t.k_yu.n_outputs != ny:
        raise ArgumentError(
            f"triple alphabets ({t.k_xu.n_outputs}, {t.k_yu.n_outputs}) do not match instance ({nx}, {ny})"
        )
    j = t.joint()
    pxy = j.probs.sum(axis=1)
    px = pxy.sum(axis=1)
    ed = cfg.distortion.expected(pxy)
    ixy = mutual_information(j, "x", "y")
    marg = float(np.abs(px - cfg.source.probs).max())
    ds = cfg.limit - ed
    rs = cfg.rate - ixy
    return MembershipReport(ds >= -tol and rs >= -tol and marg <= tol, ds, rs, marg, ed, ixy)


@dataclass(frozen=True)
class SearchOptions:
    aux_cardinality: int | None = None
    restarts: int = 64
    seed: int = 0
    barrier_weight: float = 1e-3
    tol: float = 1e-9
    patience: int = 20
    max_iter: int = 300
    polish: int = 8

    def __post_init__(self):
        if self.aux_cardinality is not None and self.aux_cardinality < 1:
            raise ArgumentError("aux_cardinality must be >= 1")
        if self.restarts < 0 or self.polish < 0:
            raise ArgumentError("restarts and polish must be >= 0")
        if self.barrier_weight < 0 or self.tol <= 0:
            raise ArgumentError("barrier_weight must be >= 0 and tol > 0")

    def cardinality(self, cfg: SecrecyConfig) -> int:
        nx, ny = cfg.shape
        return self.aux_cardinality if self.aux_cardinality is not None else nx * ny + 2

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_json(cls, data) -> "SearchOptions":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown search options {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class EquivocationResult:
    value: float
    optimizer: AuxTriple | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "optimizer": None if self.optimizer is None else self.optimizer.to_json(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, data) -> "EquivocationResult":
        opt = data.get("optimizer")
        return cls(float(data["value"]), None if opt is None else AuxTriple.from_json(opt),
                   dict(data.get("diagnostics", {})))


def _hinge(x: float) -> float:
    return max(0.0, x)


def source_equivocation(cfg: SecrecyConfig) -> EquivocationResult:
    """H(X) - [R(D) - R0]+, clamped below at zero."""
    rd = cfg.rd
    hx = entropy(cfg.source)
    value = max(hx - _hinge(rd - cfg.key_rate), 0.0)
    return EquivocationResult(value, None, {"rate_distortion": rd, "source_entropy": hx})


def objective_value(t: AuxTriple, cfg: SecrecyConfig, which) -> float:
    """Objective of a max-form statement evaluated at one triple."""
    which = Equivocation.parse(which)
    j = t.joint()
    if which is Equivocation.RECONSTRUCTION:
        return entropy(j.probs.sum(axis=(0, 1))) - _hinge(mutual_information(j, "y", "u") - cfg.key_rate)
    if which is Equivocation.JOINT:
        return entropy(j.probs.sum(axis=1)) - _hinge(mutual_information(j, ("x", "y"), "u") - cfg.key_rate)
    raise ArgumentError("the source statement has no auxiliary objective")


def _problem(cfg: SecrecyConfig, which: Equivocation) -> _search.Problem:
    code = _search.RECONSTRUCTION if which is Equivocation.RECONSTRUCTION else _search.JOINT
    return _search.Problem(cfg.source.probs, cfg.distortion.matrix, cfg.limit, cfg.rate, cfg.key_rate, code)


def _require_nonempty(cfg: SecrecyConfig):
    dmin = cfg.distortion.d_min(cfg.source)
    if cfg.limit < dmin - ENDPOINT_TOL:
        raise InfeasibleError(f"distortion limit {cfg.limit} is below the least achievable {dmin}")


def _anchor_seeds(cfg: SecrecyConfig, nu: int) -> list:
    """Deterministic starting points: the R(D) test channel with U = X, and the
    zero-rate constant reconstruction."""
    nx, ny = cfg.shape
    seeds = []
    if nu >= nx:
        try:
            ch = rd_test_channel(cfg.source, cfg.distortion)
        except InfeasibleError:
            ch = None
        if ch is not None:
            w = np.zeros((nx, nu))
            w[:, :nx] = np.eye(nx)
            v = np.full((nu, ny), 1.0 / ny)
            v[:nx] = ch
            seeds.append((w, v))
    col = int(np.argmin(cfg.source.probs @ cfg.distortion.matrix))
    w = np.zeros((nx, nu))
    w[:, 0] = 1.0
    v = np.full((nu, ny), 1.0 / ny)
    v[0] = 0.0
    v[0, col] = 1.0
    seeds.append((w, v))
    return seeds


def _maximize(cfg: SecrecyConfig, which: Equivocation, opts: SearchOptions | None, seeds) -> EquivocationResult:
    opts = opts or SearchOptions()
    _require_nonempty(cfg)
    nx, ny = cfg.shape
    nu = opts.cardinality(cfg)
    if seeds:
        nu = max([nu] + [s.aux_cardinality for s in seeds])
    start = [s.conditionals(cfg.source, nu) for s in (seeds or [])]
    start += _anchor_seeds(cfg, nu)
    n_fixed = len(start)
    rng_root = np.random.SeedSequence(opts.seed)
    for child in rng_root.spawn(opts.restarts):
        rng = np.random.default_rng(child)
        start.append((rng.dirichlet(np.ones(nu), size=nx), rng.dirichlet(np.ones(ny), size=nu)))
    w0 = np.stack([s[0] for s in start])
    v0 = np.stack([s[1] for s in start])
    problem = _problem(cfg, which)
    best_f, best_w, best_v, traces, iters = _search.ascend(
        problem, w0, v0, opts.barrier_weight, opts.tol, opts.patience, opts.max_iter
    )
    # second-order refinement of the most promising restarts
    order = sorted(np.flatnonzero(np.isfinite(best_f)), key=lambda k: (-best_f[k], k))
    for k in order[: opts.polish]:
        f, wk, vk = _search.polish(problem, best_w[k], best_v[k])
        if f > best_f[k]:
            best_f[k], best_w[k], best_v[k] = f, wk, vk
            traces[k].append(float(f))

    chosen = None
    n_valid = 0
    for k in range(len(start)):
        if not np.isfinite(best_f[k]):
            continue
        t = AuxTriple.from_conditionals(cfg.source, best_w[k], best_v[k])
        if not check_membership(t, cfg):
            continue
        n_valid += 1
        val = objective_value(t, cfg, which)
        if chosen is None or val > chosen[0] + TIE_TOL:
            chosen = (val, k, t)
    if chosen is None:
        raise InfeasibleError(f"no feasible auxiliary triple found in {len(start)} restarts")
    value, k, t = chosen
    upper = math.log2(ny) if which is Equivocation.RECONSTRUCTION else math.log2(nx * ny)
    value = min(max(value, 0.0), upper)
    diagnostics = {
        "statement": which.value,
        "restarts": len(start),
        "seeded_restarts": n_fixed,
        "feasible_restarts": n_valid,
        "best_restart": int(k),
        "best_restart_trace": traces[k],
        "iterations": int(iters.sum()),
        "converged": bool(iters[k] < opts.max_iter),
        "aux_cardinality": nu,
        "options": opts.to_json(),
        "note": ATTAINABILITY_NOTE,
    }
    return EquivocationResult(value, t, diagnostics)


def reconstruction_equivocation(cfg: SecrecyConfig, opts: SearchOptions | None = None, seeds=None) -> EquivocationResult:
    """max over the feasible set of H(Y) - [I(Y;U) - R0]+ by multi-start local ascent.

    ``seeds`` is an optional list of AuxTriple starting points tried before
    the random restarts (e.g. the grid oracle's best point).
    """
    return _maximize(cfg, Equivocation.RECONSTRUCTION, opts, seeds)


def joint_equivocation(cfg: SecrecyConfig, opts: SearchOptions | None = None, seeds=None) -> EquivocationResult:
    """max over the feasible set of H(X,Y) - [I(X,Y;U) - R0]+ by multi-start local ascent."""
    return _maximize(cfg, Equivocation.JOINT, opts, seeds)


def equivocation(cfg: SecrecyConfig, which, opts: SearchOptions | None = None) -> EquivocationResult:
    which = Equivocation.parse(which)
    if which is Equivocation.SOURCE:
        return source_equivocation(cfg)
    return _maximize(cfg, which, opts, None)


SWEEP_AXES = ("key_rate", "distortion_limit", "rate")


def equivocation_sweep(cfg: SecrecyConfig, axis: str, values, which, opts: SearchOptions | None = None) -> list:
    """One result per value of ``axis``, in order.

    Each max-form search is also started from the previous point's optimizer.
    Along increasing key rate the objective of a fixed triple cannot drop,
    and along increasing distortion limit or rate the feasible set only
    grows, so on increasing sweeps the values found are nondecreasing.
    """
    which = Equivocation.parse(which)
    if axis not in SWEEP_AXES:
        raise ArgumentError(f"unknown sweep axis {axis!r}; use {', '.join(SWEEP_AXES)}")
    results = []
    prev = None
    for val in values:
        try:
            if axis == "key_rate":
                point = cfg.replace(key_rate=val)
            elif axis == "rate":
                point = cfg.replace(rate=val)
            else:
                point = cfg.replace(limit=val)
        except InfeasibleError as exc:
            raise InfeasibleError(f"{axis} = {val}: {exc}") from None
        if which is Equivocation.SOURCE:
            res = source_equivocation(point)
        else:
            seeds = None if prev is None or prev.optimizer is None else [prev.optimizer]
            res = _maximize(point, which, opts, seeds)
        results.append(res)
        prev = res
    return results


def exhaustive_aux_search(cfg: SecrecyConfig, grid_step: float, max_aux: int, objective) -> EquivocationResult:
    """Maximize a max-form objective over a simplex grid of triples.

    P(u|x) rows and P(y|u) rows range over all pmfs whose entries are
    multiples of ``grid_step``, with |U| = ``max_aux`` (smaller auxiliaries
    are included as triples with unused symbols). Only one ordering of the U
    labels is enumerated.
    """
    which = Equivocation.parse(objective)
    if which is Equivocation.SOURCE:
        raise ArgumentError("the source statement is closed form; grid search applies to reconstruction/joint")
    if not 0 < grid_step <= 0.5:
        raise ArgumentError(f"grid_step must lie in (0, 0.5], got {grid_step}")
    units = round(1.0 / grid_step)
    if abs(units * grid_step - 1.0) > 1e-9:
        raise ArgumentError(f"grid_step {grid_step} does not divide 1")
    if max_aux < 1:
        raise ArgumentError("max_aux must be >= 1")
    nx, ny = cfg.shape
    raw, _ = _search.grid_sizes(nx, ny, max_aux, units)
    enumerated = raw // math.factorial(max_aux)
    if enumerated > GRID_LIMIT:
        raise ResourceError(f"grid has about {enumerated} points (limit {GRID_LIMIT})", count=enumerated)
    _require_nonempty(cfg)
    best, w, v, n_points, n_feasible = _search.grid_search(_problem(cfg, which), max_aux, units, MEMBERSHIP_TOL)
    if w is None:
        raise InfeasibleError(f"no grid point of {n_points} satisfies the constraints")
    t = AuxTriple.from_conditionals(cfg.source, w, v)
    diagnostics = {
        "statement": which.value,
        "grid_step": grid_step,
        "aux_cardinality": max_aux,
        "grid_points": n_points,
        "feasible_points": n_feasible,
    }
    return EquivocationResult(objective_value(t, cfg, which), t, diagnostics)
