"""JSON / CSV artifact formats.

Every structured artifact (experiment spec, dataset, HSD parameters, result)
is a JSON object tagged with a ``"kind"`` field. Complex values are written as
``{"re": ..., "im": ...}``. Floats are written with ``repr`` precision, so a
write/read cycle reproduces the in-memory value exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any

import numpy as np

from .evaluate import MatchReport
from .experiments import ExperimentSpec
from .forward import Box, MeasurementSet, Scatterer
from .hsd import HsdParams, RestartReport
from .kernel import SourceDetectorPair
from .objective import Configuration
from .powell import PowellOptions


class FormatError(ValueError):
    """An artifact file could not be parsed; the message names the offending field."""


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj: dict, path) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def load_json(path, kind: str | None = None) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise FormatError(f"{path} is empty")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: top level must be an object")
    if kind is not None and obj.get("kind") != kind:
        raise FormatError(f"{path}: field 'kind' must be {kind!r}, got {obj.get('kind')!r}")
    return obj


def _get(obj: dict, key: str, where: str):
    if key not in obj:
        raise FormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _point(value, where: str) -> tuple[float, float, float]:
    try:
        p = tuple(float(c) for c in value)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: expected [x1, x2, x3], got {value!r}") from exc
    if len(p) != 3:
        raise FormatError(f"{where}: expected 3 coordinates, got {len(p)}")
    return p


def _complex(value, where: str) -> complex:
    try:
        return complex(float(value["re"]), float(value["im"]))
    except (TypeError, KeyError, ValueError) as exc:
        raise FormatError(f"{where}: expected {{'re': .., 'im': ..}}, got {value!r}") from exc


# -- scatterers / configurations ------------------------------------------------

def scatterers_to_json(items) -> list[dict]:
    return [{"position": list(s.position), "intensity": s.intensity} for s in items]


def scatterers_from_json(items, where: str) -> list[Scatterer]:
    if not isinstance(items, list):
        raise FormatError(f"{where}: expected a list")
    out = []
    for i, s in enumerate(items):
        pos = _point(_get(s, "position", f"{where}[{i}]"), f"{where}[{i}].position")
        try:
            v = float(_get(s, "intensity", f"{where}[{i}]"))
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{where}[{i}].intensity: not a number") from exc
        out.append(Scatterer(pos, v))
    return out


def configuration_to_json(cfg: Configuration) -> dict:
    return {"scatterers": scatterers_to_json(cfg.scatterers), "value": cfg.value}


def configuration_from_json(obj: dict, where: str = "configuration") -> Configuration:
    scat = scatterers_from_json(_get(obj, "scatterers", where), f"{where}.scatterers")
    return Configuration.from_scatterers(scat, float(_get(obj, "value", where)))


# -- experiment spec ----------------------------------------------------------------

def spec_to_json(spec: ExperimentSpec) -> dict:
    return {
        "kind": "experiment_spec",
        "name": spec.name,
        "box": {"a": spec.box.a, "b": spec.box.b, "c": spec.box.c},
        "k": spec.k,
        "v_max": spec.v_max,
        "sources": [list(p) for p in spec.sources],
        "detectors": [list(p) for p in spec.detectors],
        "truth": scatterers_to_json(spec.truth),
        "noise_delta": spec.noise_delta,
        "seed": spec.seed,
    }


def spec_from_json(obj: dict) -> ExperimentSpec:
    where = "experiment_spec"
    box = _get(obj, "box", where)
    try:
        box = Box(float(_get(box, "a", "box")), float(_get(box, "b", "box")), float(_get(box, "c", "box")))
        return ExperimentSpec(
            box=box,
            k=float(_get(obj, "k", where)),
            sources=[_point(p, f"sources[{i}]") for i, p in enumerate(_get(obj, "sources", where))],
            detectors=[_point(p, f"detectors[{i}]") for i, p in enumerate(_get(obj, "detectors", where))],
            truth=scatterers_from_json(obj.get("truth", []), "truth"),
            noise_delta=float(obj.get("noise_delta", 0.0)),
            seed=int(obj.get("seed", 0)),
            v_max=float(obj.get("v_max", 2.0)),
            name=str(obj.get("name", "custom")),
        )
    except FormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


# -- measurement sets ---------------------------------------------------------------

def measurement_to_json(ms: MeasurementSet) -> dict:
    return {
        "kind": "dataset",
        "k": ms.k,
        "measurements": [
            {
                "source": list(p.source),
                "detector": list(p.detector),
                "f": {"re": float(f.real), "im": float(f.imag)},
            }
            for p, f in zip(ms.pairs, ms.data)
        ],
    }


def measurement_from_json(obj: dict) -> MeasurementSet:
    where = "dataset"
    rows = _get(obj, "measurements", where)
    if not isinstance(rows, list) or not rows:
        raise FormatError(f"{where}: field 'measurements' must be a nonempty list")
    pairs, data = [], []
    try:
        for j, row in enumerate(rows):
            w = f"measurements[{j}]"
            pairs.append(
                SourceDetectorPair(_point(_get(row, "source", w), f"{w}.source"),
                                   _point(_get(row, "detector", w), f"{w}.detector"))
            )
            data.append(_complex(_get(row, "f", w), f"{w}.f"))
        return MeasurementSet(k=float(_get(obj, "k", where)), pairs=pairs, data=np.array(data))
    except FormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


CSV_COLUMNS = ["s1", "s2", "s3", "d1", "d2", "d3", "re_f", "im_f"]


def measurement_to_csv(ms: MeasurementSet) -> str:
    buf = _io.StringIO()
    buf.write(f"# k={ms.k!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p, f in zip(ms.pairs, ms.data):
        w.writerow([repr(c) for c in (*p.source, *p.detector, float(f.real), float(f.imag))])
    return buf.getvalue()


def measurement_from_csv(text: str) -> MeasurementSet:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# k="):
        raise FormatError("dataset CSV: first line must be '# k=<wavenumber>'")
    try:
        k = float(lines[0][4:])
    except ValueError as exc:
        raise FormatError("dataset CSV: unreadable wavenumber") from exc
    reader = csv.DictReader(lines[1:])
    if reader.fieldnames != CSV_COLUMNS:
        raise FormatError(f"dataset CSV: header must be {','.join(CSV_COLUMNS)}")
    pairs, data = [], []
    try:
        for row in reader:
            v = [float(row[c]) for c in CSV_COLUMNS]
            pairs.append(SourceDetectorPair(tuple(v[0:3]), tuple(v[3:6])))
            data.append(complex(v[6], v[7]))
        return MeasurementSet(k=k, pairs=pairs, data=np.array(data))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"dataset CSV: {exc}") from exc


def write_measurement(ms: MeasurementSet, path) -> None:
    if str(path).endswith(".csv"):
        atomic_write_text(path, measurement_to_csv(ms))
    else:
        dump_json(measurement_to_json(ms), path)


def read_measurement(path) -> MeasurementSet:
    if str(path).endswith(".csv"):
        try:
            return measurement_from_csv(Path(path).read_text())
        except OSError as exc:
            raise FormatError(f"cannot read {path}: {exc}") from exc
    return measurement_from_json(load_json(path, "dataset"))


# -- parameters ---------------------------------------------------------------------

def params_to_json(params: HsdParams) -> dict:
    d = asdict(params)
    d["kind"] = "hsd_params"
    return d


def params_from_json(obj: dict) -> HsdParams:
    """Build HsdParams; unknown fields are a FormatError, bad values a ValueError."""
    obj = {k: v for k, v in obj.items() if k != "kind"}
    known = {f.name for f in fields(HsdParams)}
    unknown = set(obj) - known
    if unknown:
        raise FormatError(f"hsd_params: unknown field(s) {sorted(unknown)}")
    powell = obj.pop("powell", None) or {}
    pknown = {f.name for f in fields(PowellOptions)}
    if set(powell) - pknown:
        raise FormatError(f"hsd_params.powell: unknown field(s) {sorted(set(powell) - pknown)}")
    return HsdParams(powell=PowellOptions(**powell), **obj)


# -- results ------------------------------------------------------------------------

def report_to_json(r: RestartReport) -> dict:
    return {
        "best": configuration_to_json(r.best),
        "random_tries_used": r.random_tries_used,
        "powell_invocations": r.powell_invocations,
        "powell_time_fraction": r.powell_time_fraction,
        "stop_reason": r.stop_reason,
        "wall_time": r.wall_time,
    }


def report_from_json(obj: dict) -> RestartReport:
    return RestartReport(
        best=configuration_from_json(obj["best"], "reports.best"),
        random_tries_used=int(obj["random_tries_used"]),
        powell_invocations=int(obj["powell_invocations"]),
        powell_time_fraction=float(obj["powell_time_fraction"]),
        stop_reason=str(obj["stop_reason"]),
        wall_time=float(obj["wall_time"]),
    )


def match_to_json(m: MatchReport) -> dict:
    return {
        "matched_pairs": [
            {"truth": t, "found": f, "distance": d, "intensity_error": e}
            for t, f, d, e in m.matched_pairs
        ],
        "missed_truth": list(m.missed_truth),
        "spurious_found": list(m.spurious_found),
    }


def match_from_json(obj: dict) -> MatchReport:
    return MatchReport(
        matched_pairs=[
            (int(p["truth"]), int(p["found"]), float(p["distance"]), float(p["intensity_error"]))
            for p in obj["matched_pairs"]
        ],
        missed_truth=[int(i) for i in obj["missed_truth"]],
        spurious_found=[int(i) for i in obj["spurious_found"]],
    )


def result_to_json(found: Configuration, reports, match: MatchReport | None, wall_time: float,
                   params: HsdParams | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {
        "kind": "result",
        "found": configuration_to_json(found),
        "table": format_table(found),
        "reports": [report_to_json(r) for r in reports],
        "match": match_to_json(match) if match is not None else None,
        "wall_time": wall_time,
    }
    if params is not None:
        out["params"] = params_to_json(params)
    return out


def result_from_json(obj: dict):
    """Inverse of ``result_to_json``: (found, reports, match, wall_time)."""
    try:
        found = configuration_from_json(obj["found"], "found")
        reports = [report_from_json(r) for r in obj["reports"]]
        match = match_from_json(obj["match"]) if obj.get("match") is not None else None
        return found, reports, match, float(obj["wall_time"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"result: {exc}") from exc


def format_table(cfg: Configuration) -> list[str]:
    """Rows 'x1 x2 x3 v' in the layout of the published tables (3 and 5 decimals)."""
    return [
        f"{p[0]:7.3f} {p[1]:7.3f} {p[2]:7.3f} {v:8.5f}"
        for p, v in zip(cfg.positions, cfg.intensities)
    ]


# -- landscape CSV ------------------------------------------------------------------

def slice_to_csv(curve) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "phi_tilde"])
    for r, val in curve:
        w.writerow([repr(float(r)), repr(float(val))])
    return buf.getvalue()


def slice_from_csv(text: str) -> list[tuple[float, float]]:
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header != ["r", "phi_tilde"]:
        raise FormatError("slice CSV: header must be r,phi_tilde")
    return [(float(r), float(v)) for r, v in reader]
