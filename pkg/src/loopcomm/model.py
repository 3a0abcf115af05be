"""Domain types and configuration handling.

Everything here is plain data: channel physics parameters, the two-level
damping profile, source and receiver geometry, time grids, and the scenario
document that bundles them. Objects are frozen dataclasses and are safe to
share between workers once validated.

All quantities are SI (metres, seconds, 1/s); config files carry no unit
annotations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigValidationError, GridAlignment, InvalidParameter

SOURCE_KINDS = ("point", "distributed")
RECEIVER_KINDS = ("point", "interval")


@dataclass(frozen=True)
class DampingProfile:
    """Two-level degradation rate: ``alpha`` on [x_a, x_b], ``beta`` elsewhere."""

    alpha: float
    beta: float
    x_a: float
    x_b: float

    @classmethod
    def localized(cls, alpha: float, x_a: float, x_b: float) -> "DampingProfile":
        """Damping confined to [x_a, x_b]; no baseline degradation."""
        return cls(alpha=alpha, beta=0.0, x_a=x_a, x_b=x_b)

    @classmethod
    def uniform(cls, rate: float, loop_length: float) -> "DampingProfile":
        """Homogeneous degradation at ``rate`` over the whole loop."""
        return cls(alpha=rate, beta=rate, x_a=0.0, x_b=loop_length)

    @classmethod
    def none(cls, loop_length: float) -> "DampingProfile":
        """No degradation anywhere."""
        return cls(alpha=0.0, beta=0.0, x_a=0.0, x_b=loop_length)


@dataclass(frozen=True)
class SourceSpec:
    """Release geometry. Point releases sit at x=0; distributed releases span [0, release_width]."""

    kind: str = "point"
    release_width: Optional[float] = None


@dataclass(frozen=True)
class ReceiverSpec:
    """Transparent receiver: a point sample at ``x_rx`` or an interval [x_rx_a, x_rx_b]."""

    kind: str = "interval"
    x_rx: Optional[float] = None
    x_rx_a: Optional[float] = None
    x_rx_b: Optional[float] = None

    @property
    def center(self) -> float:
        if self.kind == "point":
            return float(self.x_rx)
        return 0.5 * (float(self.x_rx_a) + float(self.x_rx_b))

    @property
    def width(self) -> float:
        if self.kind == "point":
            return 0.0
        return float(self.x_rx_b) - float(self.x_rx_a)


@dataclass(frozen=True)
class ChannelConfig:
    """Physical channel parameters plus damping profile and source spec."""

    d_eff: float
    v_eff: float
    loop_length: float
    pipe_radius: float
    truncation_order: int
    n_molecules: int
    damping: DampingProfile
    source: SourceSpec = SourceSpec()


@dataclass(frozen=True)
class TimeGrid:
    """Uniform output grid: times are t_start + k*dt for k in [0, n_samples)."""

    t_start: float
    dt: float
    n_samples: int

    @property
    def t_end(self) -> float:
        return self.t_start + (self.n_samples - 1) * self.dt

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_samples)


@dataclass(frozen=True)
class BitSequence:
    """OOK impulse train: bit p is released at t_start + p*symbol_duration."""

    bits: tuple
    symbol_duration: float
    t_start: float = 0.0
    seed: Optional[int] = None

    @classmethod
    def random(cls, length: int, symbol_duration: float, seed: int,
               t_start: float = 0.0) -> "BitSequence":
        """Seeded equiprobable bit draw (reproducible given the seed)."""
        rng = np.random.default_rng(seed)
        bits = tuple(int(b) for b in rng.integers(0, 2, size=length))
        return cls(bits=bits, symbol_duration=symbol_duration, t_start=t_start, seed=seed)

    @property
    def ones_fraction(self) -> float:
        return float(np.mean(self.bits)) if self.bits else 0.0

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class PbsConfig:
    """Particle-simulation controls. ``d_mol`` defaults to the channel's d_eff."""

    pbs_dt: float
    t_end: float
    seed: int = 0
    n_workers: int = 1
    d_mol: Optional[float] = None


@dataclass(frozen=True)
class Scenario:
    """One self-contained run description: channel + receiver + grid (+ sequence, pbs)."""

    channel: ChannelConfig
    receiver: ReceiverSpec
    grid: TimeGrid
    sequence: Optional[BitSequence] = None
    pbs: Optional[PbsConfig] = None


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real signal; the common currency between solver, PBS and comms."""

    t_start: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(len(self.values))

    def __len__(self) -> int:
        return len(self.values)

    def scaled(self, factor: float) -> "TimeSeries":
        return TimeSeries(self.t_start, self.dt, self.values * factor)

    def same_grid(self, other: "TimeSeries", rtol: float = 1e-9) -> bool:
        return (len(self) == len(other)
                and abs(self.t_start - other.t_start) <= rtol * max(1.0, abs(self.t_start))
                and abs(self.dt - other.dt) <= rtol * self.dt)

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises GridAlignment when t is off-grid."""
        k = (t - self.t_start) / self.dt
        k_round = round(k)
        if abs(k - k_round) > 1e-6:
            raise GridAlignment(f"time {t} is not on the sample grid (dt={self.dt})")
        return int(k_round)


# ---------------------------------------------------------------------------
# Validation


def collect_violations(config: ChannelConfig) -> list[InvalidParameter]:
    """Check every ChannelConfig invariant and return all violations at once."""
    out: list[InvalidParameter] = []
    if not config.d_eff > 0:
        out.append(InvalidParameter("channel.d_eff", "d_eff > 0 violated"))
    if not config.loop_length > 0:
        out.append(InvalidParameter("channel.loop_length", "loop_length > 0 violated"))
    if not config.pipe_radius > 0:
        out.append(InvalidParameter("channel.pipe_radius", "pipe_radius > 0 violated"))
    if not config.truncation_order >= 1:
        out.append(InvalidParameter("channel.truncation_order", "truncation_order >= 1 violated"))
    if not config.n_molecules >= 1:
        out.append(InvalidParameter("channel.n_molecules", "n_molecules >= 1 violated"))
    if config.v_eff < 0:
        out.append(InvalidParameter("channel.v_eff", "v_eff >= 0 violated (downstream convention)"))

    d = config.damping
    if d.beta < 0:
        out.append(InvalidParameter("damping.beta", "beta >= 0 violated"))
    if d.alpha < d.beta:
        out.append(InvalidParameter("damping.alpha", "alpha >= beta violated"))
    if not 0 <= d.x_a:
        out.append(InvalidParameter("damping.x_a", "x_a >= 0 violated"))
    if not d.x_a < d.x_b:
        out.append(InvalidParameter("damping.x_b", "x_a < x_b violated"))
    if config.loop_length > 0 and not d.x_b <= config.loop_length:
        out.append(InvalidParameter("damping.x_b", "x_b <= L violated"))

    s = config.source
    if s.kind not in SOURCE_KINDS:
        out.append(InvalidParameter("source.kind", f"kind must be one of {SOURCE_KINDS}"))
    elif s.kind == "distributed":
        if s.release_width is None or not 0 < s.release_width:
            out.append(InvalidParameter("source.release_width", "0 < release_width violated"))
        elif config.loop_length > 0 and not s.release_width < config.loop_length:
            out.append(InvalidParameter("source.release_width", "release_width < L violated"))
    elif s.release_width is not None:
        out.append(InvalidParameter("source.release_width", "release_width only valid for distributed sources"))
    return out


def collect_receiver_violations(rx: ReceiverSpec, loop_length: float) -> list[InvalidParameter]:
    out: list[InvalidParameter] = []
    if rx.kind not in RECEIVER_KINDS:
        out.append(InvalidParameter("receiver.kind", f"kind must be one of {RECEIVER_KINDS}"))
        return out
    if rx.kind == "point":
        if rx.x_rx is None:
            out.append(InvalidParameter("receiver.x_rx", "x_rx required for point receivers"))
        elif not 0 <= rx.x_rx <= loop_length:
            out.append(InvalidParameter("receiver.x_rx", "0 <= x_rx <= L violated"))
    else:
        if rx.x_rx_a is None or rx.x_rx_b is None:
            out.append(InvalidParameter("receiver.x_rx_a", "x_rx_a and x_rx_b required for interval receivers"))
        else:
            if not 0 <= rx.x_rx_a:
                out.append(InvalidParameter("receiver.x_rx_a", "x_rx_a >= 0 violated"))
            if not rx.x_rx_a < rx.x_rx_b:
                out.append(InvalidParameter("receiver.x_rx_b", "x_rx_a < x_rx_b violated"))
            if not rx.x_rx_b <= loop_length:
                out.append(InvalidParameter("receiver.x_rx_b", "x_rx_b <= L violated"))
    return out


def collect_scenario_violations(scenario: Scenario) -> list[InvalidParameter]:
    out = collect_violations(scenario.channel)
    out += collect_receiver_violations(scenario.receiver, scenario.channel.loop_length)

    g = scenario.grid
    if not g.dt > 0:
        out.append(InvalidParameter("grid.dt", "dt > 0 violated"))
    if not g.n_samples >= 2:
        out.append(InvalidParameter("grid.n_samples", "n_samples >= 2 violated"))
    if g.t_start < 0:
        out.append(InvalidParameter("grid.t_start", "t_start >= 0 violated"))

    seq = scenario.sequence
    if seq is not None:
        if len(seq) < 1:
            out.append(InvalidParameter("sequence.bits", "sequence length >= 1 violated"))
        if not seq.symbol_duration > 0:
            out.append(InvalidParameter("sequence.symbol_duration", "symbol_duration > 0 violated"))
        if any(b not in (0, 1) for b in seq.bits):
            out.append(InvalidParameter("sequence.bits", "bits must be 0 or 1"))
        if g.dt > 0 and seq.symbol_duration > 0:
            ratio = seq.symbol_duration / g.dt
            if abs(ratio - round(ratio)) > 1e-9:
                out.append(InvalidParameter(
                    "sequence.symbol_duration",
                    "symbol_duration must be an integer multiple of grid.dt"))

    pbs = scenario.pbs
    if pbs is not None:
        if not pbs.pbs_dt > 0:
            out.append(InvalidParameter("pbs.pbs_dt", "pbs_dt > 0 violated"))
        if not pbs.t_end > 0:
            out.append(InvalidParameter("pbs.t_end", "t_end > 0 violated"))
        if pbs.n_workers < 1:
            out.append(InvalidParameter("pbs.n_workers", "n_workers >= 1 violated"))
        if pbs.d_mol is not None and not pbs.d_mol > 0:
            out.append(InvalidParameter("pbs.d_mol", "d_mol > 0 violated"))
        if g.dt > 0 and pbs.pbs_dt > 0:
            ratio = g.dt / pbs.pbs_dt
            if abs(ratio - round(ratio)) > 1e-9:
                out.append(InvalidParameter("grid.dt", "grid.dt must be an integer multiple of pbs.pbs_dt"))
            if g.t_end > pbs.t_end + 1e-9 * pbs.t_end:
                out.append(InvalidParameter("pbs.t_end", "grid extends beyond pbs.t_end"))
    return out


def validate(config: ChannelConfig) -> ChannelConfig:
    """Return ``config`` unchanged if every invariant holds, else raise with all violations."""
    violations = collect_violations(config)
    if violations:
        raise ConfigValidationError(violations)
    return config


def validate_scenario(scenario: Scenario) -> Scenario:
    violations = collect_scenario_violations(scenario)
    if violations:
        raise ConfigValidationError(violations)
    return scenario


# ---------------------------------------------------------------------------
# Damping profile evaluation


def damping_at(profile: DampingProfile, x) -> np.ndarray | float:
    """Degradation rate f(x): ``alpha`` on the closed interval [x_a, x_b], ``beta`` elsewhere."""
    x = np.asarray(x, dtype=float)
    rate = np.where((x >= profile.x_a) & (x <= profile.x_b), profile.alpha, profile.beta)
    return float(rate) if rate.ndim == 0 else rate


def damping_integral(profile: DampingProfile, loop_length: float) -> float:
    """Closed form of the loop integral of f(x)."""
    width = profile.x_b - profile.x_a
    return profile.beta * loop_length + (profile.alpha - profile.beta) * width


# ---------------------------------------------------------------------------
# Scenario document (strict JSON parsing: unknown keys are errors)

_SECTION_KEYS = {
    "channel": {"d_eff", "v_eff", "loop_length", "pipe_radius", "n_molecules", "truncation_order"},
    "damping": {"alpha", "beta", "x_a", "x_b"},
    "source": {"kind", "release_width"},
    "receiver": {"kind", "x_rx", "x_rx_a", "x_rx_b"},
    "grid": {"t_start", "dt", "n_samples"},
    "sequence": {"bits", "length", "seed", "symbol_duration", "t_start"},
    "pbs": {"pbs_dt", "t_end", "seed", "n_workers", "d_mol"},
}
_REQUIRED_SECTIONS = ("channel", "damping", "source", "receiver", "grid")
_OPTIONAL_SECTIONS = ("sequence", "pbs")


def _check_keys(section: str, data: dict, errors: list) -> None:
    unknown = set(data) - _SECTION_KEYS[section]
    for key in sorted(unknown):
        errors.append(InvalidParameter(f"{section}.{key}", "unknown key"))


def scenario_from_dict(doc: dict) -> Scenario:
    """Parse a scenario document. Strict: unknown keys and missing sections are errors."""
    if not isinstance(doc, dict):
        raise ConfigValidationError([InvalidParameter("document", "expected a JSON object")])
    errors: list[InvalidParameter] = []
    unknown = set(doc) - set(_REQUIRED_SECTIONS) - set(_OPTIONAL_SECTIONS)
    for key in sorted(unknown):
        errors.append(InvalidParameter(key, "unknown section"))
    for section in _REQUIRED_SECTIONS:
        if section not in doc:
            errors.append(InvalidParameter(section, "missing section"))
        elif not isinstance(doc[section], dict):
            errors.append(InvalidParameter(section, "expected an object"))
        else:
            _check_keys(section, doc[section], errors)
    for section in _OPTIONAL_SECTIONS:
        if section in doc:
            if not isinstance(doc[section], dict):
                errors.append(InvalidParameter(section, "expected an object"))
            else:
                _check_keys(section, doc[section], errors)
    if errors:
        raise ConfigValidationError(errors)

    ch = doc["channel"]
    da = doc["damping"]
    so = doc["source"]
    rx = doc["receiver"]
    gr = doc["grid"]
    try:
        channel = ChannelConfig(
            d_eff=float(ch["d_eff"]),
            v_eff=float(ch["v_eff"]),
            loop_length=float(ch["loop_length"]),
            pipe_radius=float(ch["pipe_radius"]),
            truncation_order=int(ch["truncation_order"]),
            n_molecules=int(ch["n_molecules"]),
            damping=DampingProfile(
                alpha=float(da["alpha"]), beta=float(da["beta"]),
                x_a=float(da["x_a"]), x_b=float(da["x_b"])),
            source=SourceSpec(
                kind=str(so["kind"]),
                release_width=(float(so["release_width"]) if so.get("release_width") is not None else None)),
        )
        receiver = ReceiverSpec(
            kind=str(rx["kind"]),
            x_rx=(float(rx["x_rx"]) if rx.get("x_rx") is not None else None),
            x_rx_a=(float(rx["x_rx_a"]) if rx.get("x_rx_a") is not None else None),
            x_rx_b=(float(rx["x_rx_b"]) if rx.get("x_rx_b") is not None else None),
        )
        grid = TimeGrid(t_start=float(gr["t_start"]), dt=float(gr["dt"]), n_samples=int(gr["n_samples"]))
    except KeyError as exc:
        raise ConfigValidationError([InvalidParameter(str(exc.args[0]), "missing key")]) from exc

    sequence = None
    if "sequence" in doc:
        sq = doc["sequence"]
        try:
            t0 = float(sq.get("t_start", 0.0))
            t_s = float(sq["symbol_duration"])
            if "bits" in sq:
                sequence = BitSequence(
                    bits=tuple(int(b) for b in sq["bits"]),
                    symbol_duration=t_s, t_start=t0,
                    seed=(int(sq["seed"]) if sq.get("seed") is not None else None))
            elif "length" in sq and sq.get("seed") is not None:
                sequence = BitSequence.random(int(sq["length"]), t_s, int(sq["seed"]), t_start=t0)
            else:
                raise ConfigValidationError([InvalidParameter(
                    "sequence", "either 'bits' or ('length' and 'seed') required")])
        except KeyError as exc:
            raise ConfigValidationError([InvalidParameter(f"sequence.{exc.args[0]}", "missing key")]) from exc

    pbs = None
    if "pbs" in doc:
        pb = doc["pbs"]
        try:
            pbs = PbsConfig(
                pbs_dt=float(pb["pbs_dt"]),
                t_end=float(pb["t_end"]),
                seed=int(pb.get("seed", 0)),
                n_workers=int(pb.get("n_workers", 1)),
                d_mol=(float(pb["d_mol"]) if pb.get("d_mol") is not None else None),
            )
        except KeyError as exc:
            raise ConfigValidationError([InvalidParameter(f"pbs.{exc.args[0]}", "missing key")]) from exc

    return validate_scenario(Scenario(channel=channel, receiver=receiver, grid=grid,
                                      sequence=sequence, pbs=pbs))


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of scenario_from_dict (round-trips a validated scenario)."""
    ch = scenario.channel
    doc = {
        "channel": {
            "d_eff": ch.d_eff, "v_eff": ch.v_eff, "loop_length": ch.loop_length,
            "pipe_radius": ch.pipe_radius, "n_molecules": ch.n_molecules,
            "truncation_order": ch.truncation_order,
        },
        "damping": {"alpha": ch.damping.alpha, "beta": ch.damping.beta,
                    "x_a": ch.damping.x_a, "x_b": ch.damping.x_b},
        "source": {"kind": ch.source.kind},
        "receiver": {"kind": scenario.receiver.kind},
        "grid": {"t_start": scenario.grid.t_start, "dt": scenario.grid.dt,
                 "n_samples": scenario.grid.n_samples},
    }
    if ch.source.kind == "distributed":
        doc["source"]["release_width"] = ch.source.release_width
    if scenario.receiver.kind == "point":
        doc["receiver"]["x_rx"] = scenario.receiver.x_rx
    else:
        doc["receiver"]["x_rx_a"] = scenario.receiver.x_rx_a
        doc["receiver"]["x_rx_b"] = scenario.receiver.x_rx_b
    if scenario.sequence is not None:
        seq = scenario.sequence
        doc["sequence"] = {"bits": list(seq.bits), "symbol_duration": seq.symbol_duration,
                           "t_start": seq.t_start}
        if seq.seed is not None:
            doc["sequence"]["seed"] = seq.seed
    if scenario.pbs is not None:
        pb = scenario.pbs
        doc["pbs"] = {"pbs_dt": pb.pbs_dt, "t_end": pb.t_end, "seed": pb.seed,
                      "n_workers": pb.n_workers}
        if pb.d_mol is not None:
            doc["pbs"]["d_mol"] = pb.d_mol
    return doc


def load_scenario(path) -> Scenario:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def dump_scenario(scenario: Scenario, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


def with_updates(scenario: Scenario, **kwargs) -> Scenario:
    """Functional update helper used by sweeps (e.g. alpha=0.1, truncation_order=50)."""
    ch = scenario.channel
    damping = ch.damping
    receiver = scenario.receiver
    sequence = scenario.sequence
    channel_updates = {}
    for key, value in kwargs.items():
        if key in ("alpha", "beta", "x_a", "x_b"):
            damping = replace(damping, **{key: float(value)})
        elif key in ("d_eff", "v_eff", "loop_length", "pipe_radius"):
            channel_updates[key] = float(value)
        elif key in ("truncation_order", "n_molecules"):
            channel_updates[key] = int(value)
        elif key == "symbol_duration":
            if sequence is None:
                raise ConfigValidationError([InvalidParameter("sequence", "no sequence to update")])
            sequence = replace(sequence, symbol_duration=float(value))
        elif key == "x_rx":
            if receiver.kind == "point":
                receiver = replace(receiver, x_rx=float(value))
            else:
                half = 0.5 * receiver.width
                receiver = replace(receiver, x_rx_a=float(value) - half, x_rx_b=float(value) + half)
        else:
            raise ConfigValidationError([InvalidParameter(key, "unknown sweep parameter")])
    ch = replace(ch, damping=damping, **channel_updates)
    return validate_scenario(replace(scenario, channel=ch, receiver=receiver, sequence=sequence))
