"""Line-oriented run configuration.

Each non-blank line reads ``section.key = value``; ``#`` starts a comment.
Recognized keys::

    network.text = A + 2B <-> B + C        # or network.file = net.txt
    diffusion.<species> = 1.0
    domain.dim = 1
    domain.lengths = 1.0                   # one value per axis, or one for all
    domain.cells = 64
    time.dt = 1e-3
    time.t_end = 1.0
    time.scheme = strang                   # or explicit-rk4
    time.record_every = 1
    time.negativity_tol = 1e-10
    init.<species> = 1.0                   # uniform part, default 1
    init.<species>.modes = 1:0.1; 2:-0.05  # cosine modes; 1x2:0.1 in 2-d
    reference.kind = none                  # none, positive or boundary
    experiment.kind = none                 # none, instability or stability
    experiment.delta = 1e-4
    experiment.theta0 = 0.05
    experiment.amplitude = 1e-2
    experiment.theta = 1.0
    perturbation.<species> = 1.0           # shape, per species
    perturbation.<species>.modes = 1:1.0
    output.dir = out
    output.snapshot_every = 0              # steps between snapshots; 0 keeps only the last

Unknown keys, repeated keys and out-of-range values are rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .experiments import DEFAULT_AMPLITUDE, DEFAULT_DELTA, DEFAULT_THETA, DEFAULT_THETA0
from .grid import BoxDomain
from .network import NetworkSyntaxError, ReactionNetwork, parse_network
from .simulator import FieldSet, SimConfig

SCHEMES = ("strang", "explicit-rk4")
EXPERIMENTS = ("none", "instability", "stability")
REFERENCES = ("none", "positive", "boundary")

_LINE = re.compile(r"^\s*([A-Za-z_][\w]*(?:\.[\w\-]+)+)\s*=\s*(.*?)\s*$")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str, line: Optional[int] = None):
        self.field = field_name
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field_name}: {message}{where}")


Modes = tuple[tuple[tuple[int, ...], float], ...]


@dataclass(frozen=True)
class SpeciesProfile:
    """Constant plus a finite cosine series."""

    constant: float = 0.0
    modes: Modes = ()

    def evaluate(self, domain: BoxDomain) -> np.ndarray:
        out = np.full(domain.shape, float(self.constant))
        for k, amp in self.modes:
            out = out + amp * domain.cosine_mode(k)
        return out

    def minimum_bound(self) -> float:
        """Lower bound ``c - sum |a_k|`` valid on any grid."""
        return self.constant - sum(abs(a) for _, a in self.modes)


@dataclass(frozen=True)
class RunConfig:
    network: ReactionNetwork
    network_text: str
    domain: BoxDomain
    sim: SimConfig
    init: dict[str, SpeciesProfile]
    reference: str = "none"
    experiment: str = "none"
    delta: float = DEFAULT_DELTA
    theta0: float = DEFAULT_THETA0
    amplitude: float = DEFAULT_AMPLITUDE
    theta: float = DEFAULT_THETA
    perturbation: dict[str, SpeciesProfile] = field(default_factory=dict)
    output_dir: Path = Path("out")
    snapshot_every: int = 0
    source: Optional[Path] = None

    def initial_values(self) -> np.ndarray:
        return np.stack([self.init[name].evaluate(self.domain) for name in self.network.names])

    def initial_state(self) -> FieldSet:
        return FieldSet.from_values(self.domain, self.initial_values())

    def initial_mean(self) -> np.ndarray:
        return self.domain.mean(self.initial_values())

    def perturbation_values(self) -> Optional[np.ndarray]:
        if not self.perturbation:
            return None
        zero = SpeciesProfile()
        return np.stack([self.perturbation.get(n, zero).evaluate(self.domain) for n in self.network.names])


# --------------------------------------------------------------------------
# scalar parsers; each raises ConfigError naming the key


def _float(key, raw, line, *, positive=False, nonnegative=False) -> float:
    try:
        x = float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}", line) from None
    if not math.isfinite(x):
        raise ConfigError(key, f"must be finite, got {raw!r}", line)
    if positive and not x > 0:
        raise ConfigError(key, f"must be positive, got {raw}", line)
    if nonnegative and x < 0:
        raise ConfigError(key, f"must be nonnegative, got {raw}", line)
    return x


def _int(key, raw, line, *, minimum=None) -> int:
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}", line) from None
    if minimum is not None and n < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {n}", line)
    return n


def _choice(key, raw, line, options) -> str:
    if raw not in options:
        raise ConfigError(key, f"must be one of {', '.join(options)}, got {raw!r}", line)
    return raw


def _list(key, raw, line, conv):
    items = [s for s in re.split(r"[,\s]+", raw) if s]
    if not items:
        raise ConfigError(key, "expected at least one value", line)
    return [conv(key, s, line) for s in items]


def parse_modes(key: str, raw: str, dim: int, line=None) -> Modes:
    """``1:0.1; 2:-0.05`` in 1-d, ``1x0:0.1`` in higher dimensions."""
    out = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError(key, f"mode entry {chunk!r} must read k:amplitude", line)
        k_raw, a_raw = chunk.split(":", 1)
        try:
            k = tuple(int(x) for x in k_raw.strip().split("x"))
        except ValueError:
            raise ConfigError(key, f"bad mode index {k_raw.strip()!r}", line) from None
        if len(k) == 1 and dim > 1:
            k = k + (0,) * (dim - 1)
        if len(k) != dim:
            raise ConfigError(key, f"mode {k_raw.strip()!r} needs {dim} indices", line)
        if any(x < 0 for x in k):
            raise ConfigError(key, f"mode indices must be nonnegative, got {k_raw.strip()!r}", line)
        out.append((k, _float(key, a_raw.strip(), line)))
    return tuple(out)


def read_entries(text: str) -> dict[str, tuple[str, int]]:
    entries: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        m = _LINE.match(body)
        if not m:
            raise ConfigError("<syntax>", f"expected 'section.key = value', got {body.strip()!r}", lineno)
        key, value = m.group(1), m.group(2)
        if key in entries:
            raise ConfigError(key, f"repeated key (first on line {entries[key][1]})", lineno)
        entries[key] = (value, lineno)
    return entries


_FIXED_KEYS = {
    "network.text", "network.file",
    "domain.dim", "domain.lengths", "domain.cells",
    "time.dt", "time.t_end", "time.scheme", "time.record_every", "time.negativity_tol",
    "reference.kind",
    "experiment.kind", "experiment.delta", "experiment.theta0", "experiment.amplitude", "experiment.theta",
    "output.dir", "output.snapshot_every",
}
_SPECIES_SECTIONS = ("diffusion", "init", "perturbation")


def _network(entries, base_dir: Path) -> tuple[ReactionNetwork, str]:
    has_text = "network.text" in entries
    has_file = "network.file" in entries
    if has_text == has_file:
        raise ConfigError("network", "give exactly one of network.text or network.file")
    if has_text:
        key = "network.text"
        raw, line = entries[key]
        text = raw.replace("\\n", "\n")
    else:
        key = "network.file"
        raw, line = entries[key]
        path = Path(raw)
        if not path.is_absolute():
            path = base_dir / path
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(key, f"cannot read {path}: {exc.strerror}", line) from None
    try:
        return parse_network(text), text
    except NetworkSyntaxError as exc:
        raise ConfigError(key, str(exc), line) from None
    except ValueError as exc:
        raise ConfigError(key, str(exc), line) from None


def _species_key(key: str, names: set[str], line: int) -> tuple[str, str, Optional[str]]:
    parts = key.split(".")
    section = parts[0]
    if section not in _SPECIES_SECTIONS or len(parts) not in (2, 3):
        raise ConfigError(key, "unknown key", line)
    name = parts[1]
    if name not in names:
        raise ConfigError(key, f"species {name!r} is not in the network", line)
    sub = parts[2] if len(parts) == 3 else None
    if sub is not None and (section == "diffusion" or sub != "modes"):
        raise ConfigError(key, "unknown key", line)
    return section, name, sub


def config_from_text(text: str, base_dir: Path | str = ".", source: Optional[Path] = None) -> RunConfig:
    entries = read_entries(text)
    base_dir = Path(base_dir)
    net, net_text = _network(entries, base_dir)
    names = set(net.names)

    def get(key, default=None):
        return entries[key] if key in entries else (default, None)

    # domain
    raw, line = get("domain.dim", "1")
    dim = _int("domain.dim", raw, line, minimum=1)
    if dim > 3:
        raise ConfigError("domain.dim", f"must be 1, 2 or 3, got {dim}", line)
    raw, line = get("domain.lengths", "1.0")
    lengths = _list("domain.lengths", raw, line, lambda k, s, l: _float(k, s, l, positive=True))
    raw, line = get("domain.cells", "64")
    cells = _list("domain.cells", raw, line, lambda k, s, l: _int(k, s, l, minimum=1))
    for key, vals in (("domain.lengths", lengths), ("domain.cells", cells)):
        if len(vals) not in (1, dim):
            raise ConfigError(key, f"expected 1 or {dim} values, got {len(vals)}", entries[key][1])
    domain = BoxDomain(dim=dim, lengths=tuple(lengths), cells=tuple(cells))

    # time
    raw, line = get("time.dt", "1e-3")
    dt = _float("time.dt", raw, line, positive=True)
    raw, line = get("time.t_end", "1.0")
    t_end = _float("time.t_end", raw, line, positive=True)
    raw, line = get("time.scheme", "strang")
    scheme = _choice("time.scheme", raw, line, SCHEMES)
    raw, line = get("time.record_every", "1")
    record_every = _int("time.record_every", raw, line, minimum=1)
    raw, line = get("time.negativity_tol", "1e-10")
    neg_tol = _float("time.negativity_tol", raw, line, nonnegative=True)
    sim = SimConfig(dt=dt, t_end=t_end, scheme=scheme, record_every=record_every, negativity_tol=neg_tol)

    # per-species sections
    diffusion: dict[str, float] = {}
    init_c = {n: 1.0 for n in net.names}
    init_m: dict[str, Modes] = {}
    pert_c: dict[str, float] = {}
    pert_m: dict[str, Modes] = {}
    for key, (raw, line) in entries.items():
        if key in _FIXED_KEYS:
            continue
        section, name, sub = _species_key(key, names, line)
        if section == "diffusion":
            diffusion[name] = _float(key, raw, line, nonnegative=True)
        elif sub == "modes":
            modes = parse_modes(key, raw, dim, line)
            for k, _ in modes:
                try:
                    domain._check_mode(k)
                except ValueError as exc:
                    raise ConfigError(key, str(exc), line) from None
            (init_m if section == "init" else pert_m)[name] = modes
        elif section == "init":
            init_c[name] = _float(key, raw, line, nonnegative=True)
        else:
            pert_c[name] = _float(key, raw, line)
    net = net.with_diffusion(diffusion)
    init = {n: SpeciesProfile(init_c[n], init_m.get(n, ())) for n in net.names}
    for n, prof in init.items():
        if prof.modes and prof.minimum_bound() < 0:
            low = float(prof.evaluate(domain).min())
            if low < 0:
                key = f"init.{n}.modes"
                raise ConfigError(key, f"initial {n} reaches {low:.6g} < 0 on the grid", entries[key][1])
    perturbation = {
        n: SpeciesProfile(pert_c.get(n, 0.0), pert_m.get(n, ()))
        for n in net.names
        if n in pert_c or n in pert_m
    }

    raw, line = get("reference.kind", "none")
    reference = _choice("reference.kind", raw, line, REFERENCES)
    raw, line = get("experiment.kind", "none")
    experiment = _choice("experiment.kind", raw, line, EXPERIMENTS)
    raw, line = get("experiment.delta", repr(DEFAULT_DELTA))
    delta = _float("experiment.delta", raw, line, nonnegative=True)
    raw, line = get("experiment.theta0", repr(DEFAULT_THETA0))
    theta0 = _float("experiment.theta0", raw, line, positive=True)
    if not delta < theta0:
        raise ConfigError("experiment.delta", f"must be below experiment.theta0={theta0:g}", entries.get("experiment.delta", (None, None))[1])
    raw, line = get("experiment.amplitude", repr(DEFAULT_AMPLITUDE))
    amplitude = _float("experiment.amplitude", raw, line, nonnegative=True)
    raw, line = get("experiment.theta", repr(DEFAULT_THETA))
    theta = _float("experiment.theta", raw, line, positive=True)

    raw, line = get("output.dir", "out")
    if not raw:
        raise ConfigError("output.dir", "must not be empty", line)
    out = Path(raw)
    if not out.is_absolute():
        out = base_dir / out
    raw, line = get("output.snapshot_every", "0")
    snapshot_every = _int("output.snapshot_every", raw, line, minimum=0)

    return RunConfig(
        network=net,
        network_text=net_text,
        domain=domain,
        sim=sim,
        init=init,
        reference=reference,
        experiment=experiment,
        delta=delta,
        theta0=theta0,
        amplitude=amplitude,
        theta=theta,
        perturbation=perturbation,
        output_dir=out,
        snapshot_every=snapshot_every,
        source=source,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return config_from_text(text, base_dir=path.parent, source=path)
