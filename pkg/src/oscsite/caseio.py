"""Case/disturbance file parsing, result serialization, bundled cases.

Case file grammar (one record per line, '#' starts a comment):

    system base_mva=100 frequency_hz=60
    bus <id> type={slack|PV|PQ} [v=<p.u.>] [load_p=<p.u.>] [load_q=<p.u.>]
    branch <from> <to> r=<p.u.> x=<p.u.> [b=<p.u.>]
    gen <bus> h=<s> d=<p.u.> xdp=<p.u.> [p=<p.u.>] [q=<p.u.>]
    wind_bus <id>
    candidates <id> [<id> ...]
    wind shape= scale= cut_in= rated_speed= cut_out= rated_power= [base_power=]

Disturbance file grammar:

    disturbance <id> [prob=<p>] <gen_bus>=<delta_omega> [...]

Probabilities are either given on every record (must sum to 1 within 1e-9)
or on none (uniform). All numeric output uses repr() so files round-trip to
full precision and reruns are byte-identical.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, ProbabilityMassError, ValidationError
from .grid import Branch, Bus, EquilibriumState, Generator, NetworkCase
from .modal import ModalDecomposition, damping_ratio, frequency_hz
from .siting import Disturbance, SitingResult
from .wind import WindModel

EXPLICIT_PROB_TOL = 1e-9

_BUS_KEYS = {"type", "v", "load_p", "load_q"}
_BRANCH_KEYS = {"r", "x", "b"}
_GEN_KEYS = {"h", "d", "xdp", "p", "q"}
_SYSTEM_KEYS = {"base_mva", "frequency_hz"}
_WIND_KEYS = {"shape", "scale", "cut_in", "rated_speed", "cut_out",
              "rated_power", "base_power"}


def _tokenize(path: str | Path):
    """Yield (line_number, tokens) for every non-empty, non-comment line."""
    text = Path(path).read_text()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line.split()


def _split_fields(path, ln, tokens, allowed):
    """Separate positional tokens from key=value fields; reject unknown keys."""
    positional = []
    fields = {}
    for tok in tokens:
        if "=" in tok:
            key, _, value = tok.partition("=")
            if key not in allowed:
                raise ParseError(f"{path}:{ln}: unknown key {key!r}")
            if key in fields:
                raise ParseError(f"{path}:{ln}: duplicate key {key!r}")
            fields[key] = value
        else:
            if fields:
                raise ParseError(f"{path}:{ln}: positional token after key=value")
            positional.append(tok)
    return positional, fields


def _as_int(path, ln, text):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{path}:{ln}: expected integer, got {text!r}") from None


def _as_float(path, ln, text):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{path}:{ln}: expected number, got {text!r}") from None


def _parse_records(path: str | Path):
    buses, branches, gens, candidates = [], [], [], None
    system, wind_bus, wind_fields = {}, None, None
    for ln, tokens in _tokenize(path):
        record, rest = tokens[0], tokens[1:]
        if record == "system":
            pos, fields = _split_fields(path, ln, rest, _SYSTEM_KEYS)
            if pos:
                raise ParseError(f"{path}:{ln}: system record takes no positionals")
            for k, v in fields.items():
                if k in system:
                    raise ParseError(f"{path}:{ln}: {k} given twice")
                system[k] = _as_float(path, ln, v)
        elif record == "bus":
            pos, fields = _split_fields(path, ln, rest, _BUS_KEYS)
            if len(pos) != 1:
                raise ParseError(f"{path}:{ln}: bus needs exactly one id")
            if "type" not in fields:
                raise ParseError(f"{path}:{ln}: bus needs type=")
            buses.append(Bus(
                id=_as_int(path, ln, pos[0]),
                type=fields["type"],
                v_setpoint=_as_float(path, ln, fields.get("v", "1.0")),
                load_p=_as_float(path, ln, fields.get("load_p", "0.0")),
                load_q=_as_float(path, ln, fields.get("load_q", "0.0")),
            ))
        elif record == "branch":
            pos, fields = _split_fields(path, ln, rest, _BRANCH_KEYS)
            if len(pos) != 2:
                raise ParseError(f"{path}:{ln}: branch needs from and to ids")
            if "r" not in fields or "x" not in fields:
                raise ParseError(f"{path}:{ln}: branch needs r= and x=")
            branches.append(Branch(
                from_bus=_as_int(path, ln, pos[0]),
                to_bus=_as_int(path, ln, pos[1]),
                r=_as_float(path, ln, fields["r"]),
                x=_as_float(path, ln, fields["x"]),
                b=_as_float(path, ln, fields.get("b", "0.0")),
            ))
        elif record == "gen":
            pos, fields = _split_fields(path, ln, rest, _GEN_KEYS)
            if len(pos) != 1:
                raise ParseError(f"{path}:{ln}: gen needs exactly one bus id")
            missing = {"h", "d", "xdp"} - set(fields)
            if missing:
                raise ParseError(f"{path}:{ln}: gen needs {sorted(missing)}")
            gens.append(Generator(
                bus=_as_int(path, ln, pos[0]),
                h=_as_float(path, ln, fields["h"]),
                d=_as_float(path, ln, fields["d"]),
                xdp=_as_float(path, ln, fields["xdp"]),
                p=_as_float(path, ln, fields.get("p", "0.0")),
                q=_as_float(path, ln, fields.get("q", "0.0")),
            ))
        elif record == "wind_bus":
            if len(rest) != 1:
                raise ParseError(f"{path}:{ln}: wind_bus needs exactly one id")
            if wind_bus is not None:
                raise ParseError(f"{path}:{ln}: wind_bus given twice")
            wind_bus = _as_int(path, ln, rest[0])
        elif record == "candidates":
            if not rest:
                raise ParseError(f"{path}:{ln}: candidates needs at least one id")
            if candidates is not None:
                raise ParseError(f"{path}:{ln}: candidates given twice")
            candidates = tuple(_as_int(path, ln, t) for t in rest)
        elif record == "wind":
            pos, fields = _split_fields(path, ln, rest, _WIND_KEYS)
            if pos:
                raise ParseError(f"{path}:{ln}: wind record takes no positionals")
            if wind_fields is not None:
                raise ParseError(f"{path}:{ln}: wind record given twice")
            wind_fields = {k: _as_float(path, ln, v) for k, v in fields.items()}
        else:
            raise ParseError(f"{path}:{ln}: unknown record type {record!r}")
    return buses, branches, gens, wind_bus, candidates, system, wind_fields


def parse_case(path: str | Path) -> NetworkCase:
    """Load and validate a case file.

    Raises:
        ParseError: malformed line, unknown record or key.
        ValidationError: grid invariant breach (duplicate bus, H <= 0, ...).
    """
    buses, branches, gens, wind_bus, candidates, system, _ = _parse_records(path)
    if not buses:
        raise ParseError(f"{path}: no bus records")
    if wind_bus is None:
        raise ParseError(f"{path}: missing wind_bus record")
    if candidates is None:
        raise ParseError(f"{path}: missing candidates record")
    return NetworkCase(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(gens),
        wind_bus=wind_bus,
        candidate_buses=candidates,
        base_mva=system.get("base_mva", 100.0),
        frequency_hz=system.get("frequency_hz", 60.0),
    )


def parse_wind_model(path: str | Path) -> WindModel:
    """Load the wind block of a case file.

    Raises:
        ParseError: no wind record present or malformed file.
    """
    *_, wind_fields = _parse_records(path)
    if wind_fields is None:
        raise ParseError(f"{path}: missing wind record")
    required = {"shape", "scale", "cut_in", "rated_speed", "cut_out", "rated_power"}
    missing = required - set(wind_fields)
    if missing:
        raise ParseError(f"{path}: wind record needs {sorted(missing)}")
    return WindModel(**wind_fields)


def parse_disturbances(path: str | Path) -> tuple[Disturbance, ...]:
    """Load a disturbance set; uniform probabilities when none are given.

    Raises:
        ParseError: malformed record or mixed explicit/implicit probabilities.
        ProbabilityMassError: explicit probabilities off 1 by more than 1e-9.
    """
    records = []
    for ln, tokens in _tokenize(path):
        if tokens[0] != "disturbance":
            raise ParseError(f"{path}:{ln}: unknown record type {tokens[0]!r}")
        if len(tokens) < 3:
            raise ParseError(f"{path}:{ln}: disturbance needs an id and a speed")
        _, dist_id, *rest = tokens
        prob = None
        speeds = []
        for tok in rest:
            key, sep, value = tok.partition("=")
            if not sep:
                raise ParseError(f"{path}:{ln}: expected key=value, got {tok!r}")
            if key == "prob":
                if prob is not None:
                    raise ParseError(f"{path}:{ln}: prob given twice")
                prob = _as_float(path, ln, value)
            else:
                speeds.append((_as_int(path, ln, key), _as_float(path, ln, value)))
        if not speeds:
            raise ParseError(f"{path}:{ln}: disturbance has no speed deviations")
        records.append((ln, dist_id, prob, tuple(speeds)))
    if not records:
        raise ParseError(f"{path}: no disturbance records")
    ids = [r[1] for r in records]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate disturbance id")

    explicit = [r for r in records if r[2] is not None]
    if explicit and len(explicit) != len(records):
        raise ParseError(f"{path}: give prob= on every disturbance or on none")
    if explicit:
        total = sum(r[2] for r in records)
        if abs(total - 1.0) > EXPLICIT_PROB_TOL:
            raise ProbabilityMassError(
                f"{path}: probabilities sum to {total!r}, not 1")
        probs = [r[2] / total for r in records]
    else:
        probs = [1.0 / len(records)] * len(records)
    return tuple(
        Disturbance(id=dist_id, speeds=speeds, probability=prob)
        for (_, dist_id, _, speeds), prob in zip(records, probs))


# ---------------------------------------------------------------------------
# result serialization


def _write_text(path: Path, text: str):
    path.write_text(text, newline="\n")


def emit_results(result: SitingResult, out_dir: str | Path) -> list[Path]:
    """Write summary, per-disturbance probability matrix, and histograms.

    summary.txt, probabilities.csv and histograms.csv are byte-identical
    across reruns with the same inputs; wall-clock timings go to the
    separate timing.txt, which is diagnostic and excluded from that
    contract.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = [
        f"winner {result.winner}",
        f"method {result.method}",
        f"samples {result.samples}",
        f"seed {result.seed}",
        f"gain {result.gain!r}",
        f"base_wind {result.base_wind!r}",
        "candidates " + " ".join(str(b) for b in result.candidates),
        "phi " + " ".join(repr(float(v)) for v in result.phi),
    ]
    summary = out / "summary.txt"
    _write_text(summary, "\n".join(lines) + "\n")

    header = "disturbance,probability," + ",".join(
        f"P_{b}" for b in result.candidates)
    rows = [header]
    for di, dist_id in enumerate(result.disturbance_ids):
        cells = [dist_id, repr(float(result.disturbance_probabilities[di]))]
        cells += [repr(float(v)) for v in result.probabilities[di]]
        rows.append(",".join(cells))
    probs_csv = out / "probabilities.csv"
    _write_text(probs_csv, "\n".join(rows) + "\n")

    rows = ["disturbance,bus,bin_left,bin_right,count"]
    for h in result.histograms:
        for i, count in enumerate(h.counts):
            rows.append(",".join([
                h.disturbance_id, str(h.bus),
                repr(float(h.bin_edges[i])), repr(float(h.bin_edges[i + 1])),
                str(int(count)),
            ]))
    hist_csv = out / "histograms.csv"
    _write_text(hist_csv, "\n".join(rows) + "\n")

    timing = out / "timing.txt"
    _write_text(timing, (
        f"base_build_seconds {result.base_build_seconds!r}\n"
        f"per_sample_microseconds {result.per_sample_microseconds!r}\n"))
    return [summary, probs_csv, hist_csv, timing]


def parse_summary(path: str | Path) -> dict:
    """Read back a summary.txt; numeric fields round-trip to full precision."""
    out: dict = {}
    for ln, tokens in _tokenize(path):
        key, rest = tokens[0], tokens[1:]
        if key in ("winner", "samples", "seed"):
            out[key] = _as_int(path, ln, rest[0])
        elif key in ("gain", "base_wind"):
            out[key] = _as_float(path, ln, rest[0])
        elif key == "method":
            out[key] = rest[0]
        elif key == "candidates":
            out[key] = [_as_int(path, ln, t) for t in rest]
        elif key == "phi":
            out[key] = [_as_float(path, ln, t) for t in rest]
        else:
            raise ParseError(f"{path}:{ln}: unknown summary key {key!r}")
    return out


def emit_equilibrium(eq: EquilibriumState, path: str | Path):
    """CSV dump of the solved operating point: bus, |V|, theta."""
    rows = ["bus,v_mag,v_angle_rad"]
    for i, bus in enumerate(eq.case.buses):
        rows.append(f"{bus.id},{eq.v_mag[i]!r},{eq.v_ang[i]!r}")
    _write_text(Path(path), "\n".join(rows) + "\n")


def emit_modes(dec: ModalDecomposition, path: str | Path):
    """CSV dump of the spectrum: index, Re, Im, frequency, damping ratio."""
    zeta = damping_ratio(dec.eigenvalues)
    freq = frequency_hz(dec.eigenvalues)
    rows = ["index,re,im,frequency_hz,damping_ratio"]
    for i, lam in enumerate(dec.eigenvalues):
        rows.append(f"{i},{lam.real!r},{lam.imag!r},{freq[i]!r},{zeta[i]!r}")
    _write_text(Path(path), "\n".join(rows) + "\n")


def emit_wind_histogram(samples: np.ndarray, bins: int, path: str | Path):
    """CSV histogram of wind power samples."""
    counts, edges = np.histogram(samples, bins=bins,
                                 range=(0.0, float(np.max(samples)) or 1.0))
    rows = ["bin_left,bin_right,count"]
    for i, count in enumerate(counts):
        rows.append(f"{edges[i]!r},{edges[i + 1]!r},{int(count)}")
    _write_text(Path(path), "\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# bundled desk cases

BUNDLED_CASES = ("two_machine", "three_machine", "two_area")


def bundled_case_path(name: str) -> Path:
    """Filesystem path of a bundled case file."""
    if name not in BUNDLED_CASES:
        raise ValidationError(
            f"unknown bundled case {name!r}; available: {BUNDLED_CASES}")
    return Path(str(resources.files("oscsite").joinpath(f"cases/{name}.case")))


def bundled_disturbance_path(name: str) -> Path:
    if name not in BUNDLED_CASES:
        raise ValidationError(
            f"unknown bundled case {name!r}; available: {BUNDLED_CASES}")
    return Path(str(resources.files("oscsite").joinpath(f"cases/{name}.dist")))


def load_bundled_case(name: str) -> NetworkCase:
    return parse_case(bundled_case_path(name))


def load_bundled_wind(name: str) -> WindModel:
    return parse_wind_model(bundled_case_path(name))


def load_bundled_disturbances(name: str) -> tuple[Disturbance, ...]:
    return parse_disturbances(bundled_disturbance_path(name))
