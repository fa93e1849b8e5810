"""Dataset and model files.

CSV datasets have a header ``freq_rad_s`` (or ``freq_hz``), then
``re_yIuJ, im_yIuJ`` per channel in row-major (output, input) order, then an
optional ``weight`` column.  Floats are written with ``repr`` (shortest
round-trip form) so a write/read cycle is bit-exact.  All outputs are written
to a temporary file and renamed into place.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .core import FrequencyResponseData, RationalModel

FORMAT_TAG = "ovfit-model"
_CHANNEL = re.compile(r"^(re|im)_y(\d+)u(\d+)$")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    return repr(float(x))


def _freq_factor(unit: str) -> float:
    u = unit.lower().replace(" ", "")
    if u in ("rad/s", "rad_s", "rads"):
        return 1.0
    if u in ("hz",):
        return 2 * np.pi
    raise ValueError(f"unknown frequency unit {unit!r}")


# --- datasets ------------------------------------------------------------------

def dataset_to_csv(data: FrequencyResponseData) -> str:
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    header = ["freq_rad_s"]
    for i in range(data.p):
        for j in range(data.m):
            header += [f"re_y{i + 1}u{j + 1}", f"im_y{i + 1}u{j + 1}"]
    if data.weights is not None:
        header.append("weight")
    wr.writerow(header)
    for t in range(data.l):
        row = [_fmt(data.frequencies[t])]
        for i in range(data.p):
            for j in range(data.m):
                h = data.responses[t, i, j]
                row += [_fmt(h.real), _fmt(h.imag)]
        if data.weights is not None:
            row.append(_fmt(data.weights[t]))
        wr.writerow(row)
    return buf.getvalue()


def dataset_from_csv(text: str, freq_unit: str | None = None) -> FrequencyResponseData:
    rows = [r for r in csv.reader(_io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError("empty dataset")
    header = [c.strip().lower() for c in rows[0]]
    if header[0] == "freq_rad_s":
        unit = "rad/s"
    elif header[0] == "freq_hz":
        unit = "hz"
    else:
        raise ValueError("first column must be freq_rad_s or freq_hz")
    if freq_unit is not None:
        unit = freq_unit
    chans = {}
    wcol = None
    for k, name in enumerate(header[1:], start=1):
        if name == "weight":
            wcol = k
            continue
        mt = _CHANNEL.match(name)
        if not mt:
            raise ValueError(f"unrecognised column {name!r}")
        part, i, j = mt.group(1), int(mt.group(2)), int(mt.group(3))
        if i < 1 or j < 1:
            raise ValueError(f"channel indices are 1-based: {name!r}")
        chans[(i - 1, j - 1, part)] = k
    if not chans:
        raise ValueError("no response columns")
    p = max(i for i, _, _ in chans) + 1
    m = max(j for _, j, _ in chans) + 1
    for i in range(p):
        for j in range(m):
            for part in ("re", "im"):
                if (i, j, part) not in chans:
                    raise ValueError(f"missing column {part}_y{i + 1}u{j + 1}")
    body = rows[1:]
    try:
        vals = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ValueError(f"non-numeric entry: {exc}") from exc
    if vals.ndim != 2 or vals.shape[1] != len(header):
        raise ValueError("rows have inconsistent column counts")
    freqs = vals[:, 0] * _freq_factor(unit)
    resp = np.empty((vals.shape[0], p, m), dtype=complex)
    for i in range(p):
        for j in range(m):
            resp[:, i, j] = vals[:, chans[(i, j, "re")]] + 1j * vals[:, chans[(i, j, "im")]]
    weights = vals[:, wcol] if wcol is not None else None
    return FrequencyResponseData(freqs, resp, weights)


def dataset_to_json(data: FrequencyResponseData) -> str:
    doc = {
        "frequency_unit": "rad/s",
        "frequencies": [float(x) for x in data.frequencies],
        "real": data.responses.real.tolist(),
        "imag": data.responses.imag.tolist(),
    }
    if data.weights is not None:
        doc["weights"] = [float(x) for x in data.weights]
    return json.dumps(doc, indent=1) + "\n"


def dataset_from_json(text: str, freq_unit: str | None = None) -> FrequencyResponseData:
    doc = json.loads(text)
    unit = freq_unit or doc.get("frequency_unit", "rad/s")
    try:
        freqs = np.asarray(doc["frequencies"], dtype=float) * _freq_factor(unit)
        resp = np.asarray(doc["real"], dtype=float) + 1j * np.asarray(doc["imag"], dtype=float)
    except KeyError as exc:
        raise ValueError(f"missing field {exc}") from exc
    if resp.ndim == 1:
        resp = resp.reshape(-1, 1, 1)
    weights = doc.get("weights")
    return FrequencyResponseData(freqs, resp, None if weights is None else np.asarray(weights, float))


def read_dataset(path, freq_unit: str | None = None) -> FrequencyResponseData:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return dataset_from_json(text, freq_unit)
    return dataset_from_csv(text, freq_unit)


def write_dataset(path, data: FrequencyResponseData) -> None:
    path = Path(path)
    text = dataset_to_json(data) if path.suffix.lower() == ".json" else dataset_to_csv(data)
    atomic_write(path, text)


def read_weights(path) -> np.ndarray:
    """One weight per line (a single-column CSV with optional header also works)."""
    out = []
    for line in Path(path).read_text().splitlines():
        cell = line.split(",")[-1].strip()
        if not cell:
            continue
        try:
            out.append(float(cell))
        except ValueError:
            if out:
                raise ValueError(f"bad weight entry {cell!r}") from None
    return np.asarray(out, dtype=float)


# --- models --------------------------------------------------------------------

def _cpl(values):
    return [[float(np.real(z)), float(np.imag(z))] for z in values]


def model_to_dict(model: RationalModel, **extra) -> dict:
    num, den = model.coefficients()
    doc = {
        "format": FORMAT_TAG,
        "domain": model.domain,
        "numerator": num.tolist(),
        "denominator": [float(x) for x in den],
        "poles": _cpl(model.poles),
        "zeros": [[_cpl(model.zeros[i][j]) for j in range(model.m)] for i in range(model.p)],
        "gains": model.gains.tolist(),
    }
    doc.update(extra)
    return doc


def model_from_dict(doc: dict) -> RationalModel:
    if doc.get("format") != FORMAT_TAG:
        raise ValueError("not a model file")
    poles = np.array([complex(a, b) for a, b in doc["poles"]], dtype=complex)
    zeros = [[np.array([complex(a, b) for a, b in ch], dtype=complex) for ch in row]
             for row in doc["zeros"]]
    gains = np.asarray(doc["gains"], dtype=float)
    return RationalModel(poles=poles, zeros=zeros, gains=gains, domain=doc.get("domain", "s"),
                         num=np.asarray(doc["numerator"], dtype=float),
                         den=np.asarray(doc["denominator"], dtype=float))


def _json_safe(obj):
    # strict JSON has no NaN/inf; those become null
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_model(path, model: RationalModel, **extra) -> None:
    doc = _json_safe(model_to_dict(model, **extra))
    atomic_write(path, json.dumps(doc, indent=1, allow_nan=False) + "\n")


def read_model(path) -> RationalModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def bode_csv(frequencies, measured, fitted) -> str:
    """Magnitude (dB) and phase (deg) of measured and fitted responses per channel."""
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    l, p, m = measured.shape
    header = ["freq_rad_s"]
    for i in range(p):
        for j in range(m):
            tag = f"y{i + 1}u{j + 1}"
            header += [f"meas_mag_db_{tag}", f"meas_phase_deg_{tag}",
                       f"fit_mag_db_{tag}", f"fit_phase_deg_{tag}"]
    wr.writerow(header)
    with np.errstate(divide="ignore"):
        mm, fm = 20 * np.log10(np.abs(measured)), 20 * np.log10(np.abs(fitted))
    mp, fp = np.degrees(np.angle(measured)), np.degrees(np.angle(fitted))
    for t in range(l):
        row = [_fmt(frequencies[t])]
        for i in range(p):
            for j in range(m):
                row += [_fmt(mm[t, i, j]), _fmt(mp[t, i, j]), _fmt(fm[t, i, j]), _fmt(fp[t, i, j])]
        wr.writerow(row)
    return buf.getvalue()
