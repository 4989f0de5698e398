"""Model files: loading, saving and run manifests.

A model file is a TOML document with a top-level ``kind``.  Matrices are
row-major nested arrays and every covariance is a full matrix.

``kind = "linear"``::

    kind = "linear"
    A = [[...]]            # n x n
    B = [[...]]            # n x p
    C = [[...]]            # m x n
    Sigma_dd = [[...]]     # n x n process disturbance covariance
    Sigma_nn = [[...]]     # m x m sensor noise covariance

    [gains]                # either explicit gains ...
    K = [[...]]            # p x n, u = K x_hat
    L = [[...]]            # n x m observer gain
    # ... or weights for LQR / Kalman synthesis: Q_lqr (n x n), R_lqr (p x p)

``kind = "cstr"``::

    kind = "cstr"
    dt = 0.01              # hours
    [params]               # any CstrParams field, defaults otherwise
    [weights]              # Q_lqr, R_lqr (4 x 4)
    [noise]                # Sigma_dd, Sigma_nn (4 x 4)
    [measurement]          # C (m x 4)

Omitted ``cstr`` sections fall back to the built-in defaults.  The name
``cstr-table1`` loads the default two-tank configuration without a file.
"""

import hashlib
import json
import re
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .cstr import CstrConfig, CstrParams, build_cstr_system, synthesize_gains
from .errors import ParseError, ValidationError
from .plant import PlantModel, build_closed_loop

BUILTIN_CSTR = "cstr-table1"


@dataclass(frozen=True)
class LoadedModel:
    """A validated model with its closed loop.

    ``description`` is the canonical plain-data form used for hashing and
    for saving; ``cstr`` holds the built system for CSTR models.
    """

    kind: str
    plant: PlantModel
    closed_loop: object
    description: dict
    cstr: object = None

    @property
    def model_hash(self):
        return description_hash(self.description)

    @property
    def unit_groups(self):
        """Measurement index groups per process unit (two tanks for the CSTR)."""
        if self.kind == "cstr" and self.plant.m == 4:
            return {"tank1": [0, 1], "tank2": [2, 3]}
        return {}


def description_hash(desc):
    text = json.dumps(desc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _matrix(doc, name, section=None):
    where = f"{section}.{name}" if section else name
    if name not in doc:
        raise ParseError("missing matrix", field=where)
    value = doc[name]
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ParseError("matrix must be a nested array of rows", field=where)
    if len({len(r) for r in value}) != 1:
        raise ParseError("matrix rows differ in length", field=where)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError("matrix entries must be numbers", field=where) from None
    if not np.all(np.isfinite(arr)):
        raise ParseError("matrix entries must be finite", field=where)
    return arr


def _rows(M):
    return [[float(v) for v in row] for row in np.atleast_2d(M)]


def _load_linear(doc):
    plant = PlantModel(*(_matrix(doc, k) for k in ("A", "B", "C", "Sigma_dd", "Sigma_nn")))
    gains = doc.get("gains")
    if not isinstance(gains, dict):
        raise ParseError("missing [gains] section", field="gains")
    desc = {"kind": "linear"}
    for k in ("A", "B", "C", "Sigma_dd", "Sigma_nn"):
        desc[k] = _rows(getattr(plant, k))
    if "K" in gains or "L" in gains:
        K, L = _matrix(gains, "K", "gains"), _matrix(gains, "L", "gains")
        desc["gains"] = {"K": _rows(K), "L": _rows(L)}
    elif "Q_lqr" in gains or "R_lqr" in gains:
        Q, R = _matrix(gains, "Q_lqr", "gains"), _matrix(gains, "R_lqr", "gains")
        K, L = synthesize_gains(plant, Q, R)
        desc["gains"] = {"Q_lqr": _rows(Q), "R_lqr": _rows(R)}
    else:
        raise ParseError("[gains] needs K and L or Q_lqr and R_lqr", field="gains")
    return LoadedModel("linear", plant, build_closed_loop(plant, K, L), desc)


def cstr_description(cfg):
    return {
        "kind": "cstr",
        "dt": cfg.dt,
        "params": asdict(cfg.params),
        "weights": {"Q_lqr": _rows(cfg.Q_lqr), "R_lqr": _rows(cfg.R_lqr)},
        "noise": {"Sigma_dd": _rows(cfg.Sigma_dd), "Sigma_nn": _rows(cfg.Sigma_nn)},
        "measurement": {"C": _rows(cfg.C)},
    }


def _section(doc, name):
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ParseError("expected a table", field=name)
    return value


def _load_cstr(doc):
    known = {f.name for f in fields(CstrParams)}
    raw = _section(doc, "params")
    for key, value in raw.items():
        if key not in known:
            raise ParseError("unknown CSTR parameter", field=f"params.{key}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError("parameter must be a number", field=f"params.{key}")
    defaults = CstrConfig()
    kwargs = {"params": CstrParams(**raw)}
    dt = doc.get("dt", defaults.dt)
    if isinstance(dt, bool) or not isinstance(dt, (int, float)):
        raise ParseError("dt must be a number", field="dt")
    kwargs["dt"] = dt
    for section, names in (("weights", ("Q_lqr", "R_lqr")), ("noise", ("Sigma_dd", "Sigma_nn")),
                           ("measurement", ("C",))):
        table = _section(doc, section)
        for name in names:
            if name in table:
                kwargs[name] = _matrix(table, name, section)
    cfg = CstrConfig(**kwargs)
    return model_from_cstr_config(cfg)


def model_from_cstr_config(cfg=None):
    cfg = CstrConfig() if cfg is None else cfg
    system = build_cstr_system(cfg)
    return LoadedModel("cstr", system.plant, system.closed_loop, cstr_description(cfg), system)


def _line_of(exc):
    line = getattr(exc, "lineno", None)
    if line is None:
        match = re.search(r"line (\d+)", str(exc))
        line = int(match.group(1)) if match else None
    return line


def parse_model(text):
    """Parse and validate TOML model text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed model file: {getattr(exc, 'msg', exc)}", line=_line_of(exc)) from None
    kind = doc.get("kind")
    if kind == "linear":
        return _load_linear(doc)
    if kind == "cstr":
        return _load_cstr(doc)
    raise ParseError(f"kind must be 'linear' or 'cstr', got {kind!r}", field="kind")


def load_model(path):
    """Load a model file, or the built-in ``cstr-table1`` configuration."""
    if str(path) == BUILTIN_CSTR:
        return model_from_cstr_config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read model file {path}: {exc.strerror}") from None
    return parse_model(text)


def dumps_model(model):
    return tomli_w.dumps(model.description)


def save_model(model, path):
    Path(path).write_text(dumps_model(model))


def linear_model(plant, K, L):
    """Wrap an explicit plant and gains as a saveable linear model."""
    desc = {"kind": "linear"}
    for k in ("A", "B", "C", "Sigma_dd", "Sigma_nn"):
        desc[k] = _rows(getattr(plant, k))
    desc["gains"] = {"K": _rows(K), "L": _rows(L)}
    return LoadedModel("linear", plant, build_closed_loop(plant, K, L), desc)


def run_manifest(model, seed=None, extra=None):
    """Provenance recorded with every output file."""
    desc = model.description
    manifest = {
        "tool": "diattack",
        "version": __version__,
        "model_kind": model.kind,
        "model_hash": model.model_hash,
        "model": desc,
        "seed": seed,
    }
    if model.kind == "cstr":
        manifest["dt"] = desc["dt"]
        manifest["gain_weights"] = desc["weights"]
        manifest["noise"] = desc["noise"]
    else:
        manifest["dt"] = None
        manifest["gain_weights"] = desc["gains"] if "Q_lqr" in desc["gains"] else None
        manifest["noise"] = {"Sigma_dd": desc["Sigma_dd"], "Sigma_nn": desc["Sigma_nn"]}
    if extra:
        manifest.update(extra)
    return manifest


def model_from_manifest(manifest):
    """Rebuild the model recorded in a manifest."""
    return parse_model(tomli_w.dumps(manifest["model"]))
