"""Lambda sweeps, Pareto curves, vulnerability ranking and their file formats."""

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .attack import (
    GaussianAttack,
    NonConvexAtSolution,
    full_attack,
    greedy_sparse_attack,
    single_measurement_attack,
    single_measurement_windows,
)
from .detector import detection_probability
from .divergence import detection_kl, disruption_kl, estimate_kl
from .errors import DegenerateAttack, DiaError, InvalidParameter, NoFeasibleMeasurement
from .plant import AttackContext, objective_matrices

DOMINANCE_TOL = 1e-9
AUTO_POINTS = 20

CSV_COLUMNS = (
    "lambda",
    "attack_kind",
    "support",
    "status",
    "disruption_kl",
    "estimate_kl",
    "detection_kl",
    "p_detect",
    "p_false_alarm",
    "feasibility",
    "reason",
    "sigma_aa",
)


@dataclass
class ParetoRecord:
    """One point of a sweep.

    KL values are in nats and are ``None`` when the attack could not be built;
    ``status`` then says why.
    """

    lam: float
    attack_kind: str
    support: list = field(default_factory=list)
    status: str = "ok"
    disruption_kl: float = None
    estimate_kl: float = None
    detection_kl: float = None
    p_detect: float = None
    p_false_alarm: float = None
    feasibility: dict = field(default_factory=dict)
    reason: str = ""
    Sigma_aa: np.ndarray = None

    @property
    def feasible(self):
        return self.status in ("ok", "stationary")

    def as_dict(self):
        return {
            "lambda": self.lam,
            "attack_kind": self.attack_kind,
            "support": list(self.support),
            "status": self.status,
            "disruption_kl": self.disruption_kl,
            "estimate_kl": self.estimate_kl,
            "detection_kl": self.detection_kl,
            "p_detect": self.p_detect,
            "p_false_alarm": self.p_false_alarm,
            "feasibility": self.feasibility,
            "reason": self.reason,
            "sigma_aa": None if self.Sigma_aa is None else self.Sigma_aa.tolist(),
        }


def _closed_loop(model):
    return getattr(model, "closed_loop", model)


def _kind_label(kind, index=None, k=None):
    if kind == "full":
        return "full"
    if kind == "single":
        return "single" if index is None else f"single({index})"
    if kind == "sparse":
        return f"sparse({k})"
    raise InvalidParameter(f"unknown attack kind {kind!r}")


def _window_grid(lo, hi, n):
    # log-spaced points strictly inside the open window
    return np.geomspace(lo, hi, n + 2)[1:-1]


def auto_lambda_grid(model, index=None, indices=None, n=AUTO_POINTS):
    """Log-spaced lambda values inside the single-measurement windows.

    With ``index`` the grid covers that measurement's window.  Otherwise it
    covers the intersection of the windows of ``indices`` (all measurements
    by default), or their overall span when the intersection is empty.
    """
    M1, M2 = objective_matrices(_closed_loop(model))
    windows = single_measurement_windows(AttackContext(M1, M2, 1.0))
    if index is not None:
        windows = [windows[index]]
    elif indices is not None:
        windows = [windows[j] for j in sorted(indices)]
    windows = [w for w in windows if w[1] < w[2]]
    if not windows:
        raise NoFeasibleMeasurement("every requested measurement has an empty lambda window")
    lo = max(w[1] for w in windows)
    hi = min(w[2] for w in windows)
    if not lo < hi:
        lo = min(w[1] for w in windows)
        hi = max(w[2] for w in windows)
    return _window_grid(lo, hi, n)


def _check_grid(lambdas):
    grid = np.asarray(lambdas, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InvalidParameter("lambda grid is empty")
    if not np.all(np.isfinite(grid)) or np.any(grid <= 0):
        raise InvalidParameter("lambda values must be positive and finite")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameter("lambda grid must be strictly ascending")
    return grid


def build_attack(ctx, kind, index=None, k=None, candidates=None):
    """Run one construction; returns ``(attack, feasibility summary, status)``."""
    if kind == "full":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvexAtSolution)
            attack, report = full_attack(ctx)
        status = "ok" if report.hessian_condition else "stationary"
        return attack, report.summary(), status
    if kind == "single":
        pool = candidates if index is None else [index]
        attack, _ = single_measurement_attack(ctx, candidates=pool)
        return attack, {"status": "optimal"}, "ok"
    if kind == "sparse":
        attack, trace = greedy_sparse_attack(ctx, k, candidates=candidates)
        return attack, {"status": "greedy", "order": [s.index for s in trace]}, "ok"
    raise InvalidParameter(f"unknown attack kind {kind!r}")


def evaluate_attack(cl, attack):
    """``(disruption, estimate, detection)`` KL values of an attack."""
    return disruption_kl(cl, attack), estimate_kl(cl, attack), detection_kl(cl, attack)


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def _sweep_cell(cl, M1, M2, lam, kind, index, k, candidates, detector_cfg):
    label = _kind_label(kind, index, k)
    ctx = AttackContext(M1, M2, lam)
    try:
        attack, summary, status = build_attack(ctx, kind, index, k, candidates)
        dis, est, det = evaluate_attack(cl, attack)
    except DiaError as exc:
        status = "infeasible" if exc.exit_code == 3 else "failed"
        summary = getattr(getattr(exc, "report", None), "summary", lambda: {})()
        return ParetoRecord(float(lam), label, status=status, feasibility=summary,
                            reason=f"{type(exc).__name__}: {exc}")
    rec = ParetoRecord(
        float(lam), label, list(attack.support), status,
        _finite_or_none(dis), _finite_or_none(est), _finite_or_none(det),
        feasibility=summary, Sigma_aa=attack.Sigma_aa,
    )
    if None in (rec.disruption_kl, rec.estimate_kl, rec.detection_kl):
        rec.status, rec.reason = "failed", "non-finite divergence"
        rec.disruption_kl = rec.estimate_kl = rec.detection_kl = None
        return rec
    if detector_cfg is not None and not attack.is_zero:
        res = detection_probability(cl, attack, detector_cfg)
        rec.p_detect, rec.p_false_alarm = res.p_detect, res.p_false_alarm
    return rec


def pareto_sweep(model, kind, lambdas, detector_cfg=None, index=None, k=None, candidates=None):
    """Sweep ``lambdas`` for one construction.

    Parameters
    ----------
    model : LoadedModel or ClosedLoop
    kind : {"full", "single", "sparse"}
    lambdas : array_like
        Strictly ascending positive values.
    detector_cfg : DetectorConfig, optional
        Attach Monte-Carlo detection rates to every feasible row.
    index : int, optional
        For ``single``: attack only this measurement.  Without it the best
        measurement is chosen at each lambda.
    k : int, optional
        Sparsity for ``sparse``.
    candidates : iterable of int, optional
        Restrict ``single``/``sparse`` to these measurements.

    Returns
    -------
    list of ParetoRecord
        One row per lambda, ascending.  Failures never raise; they are
        recorded in ``status`` and ``reason``.
    """
    grid = _check_grid(lambdas)
    if kind == "sparse" and k is None:
        raise InvalidParameter("sparse sweeps need k")
    cl = _closed_loop(model)
    M1, M2 = objective_matrices(cl)
    return [_sweep_cell(cl, M1, M2, lam, kind, index, k, candidates, detector_cfg) for lam in grid]


# -- dominance -----------------------------------------------------------------

def disruption_envelope(records):
    """Breakpoints ``(detection, disruption)`` of a curve's achievable disruption.

    The curve starts at the origin (no attack), interpolates linearly between
    the feasible rows ordered by detection divergence, keeps the running
    maximum so the envelope is non-decreasing, and stays flat past the last
    point.
    """
    pts = sorted((r.detection_kl, r.disruption_kl) for r in records if r.feasible)
    xs, ys = [0.0], [0.0]
    for x, y in pts:
        y = max(y, ys[-1])
        if x == xs[-1]:
            ys[-1] = max(ys[-1], y)
        else:
            xs.append(x)
            ys.append(y)
    return np.array(xs), np.array(ys)


def _evaluate_envelope(env, x):
    xs, ys = env
    return np.interp(x, xs, ys)


def compare_curves(env_a, env_b, tol=DOMINANCE_TOL):
    """Verdict between two envelopes: ``">"``, ``"<"``, ``"="`` or ``"incomparable"``.

    ``a`` dominates ``b`` when its envelope is nowhere below that of ``b`` and
    exceeds it by more than ``tol`` somewhere.  Both are piecewise linear, so
    checking the union of breakpoints is exact.
    """
    grid = np.union1d(env_a[0], env_b[0])
    diff = _evaluate_envelope(env_a, grid) - _evaluate_envelope(env_b, grid)
    if np.all(np.abs(diff) <= tol):
        return "="
    if np.all(diff >= -tol) and np.any(diff > tol):
        return ">"
    if np.all(diff <= tol) and np.any(diff < -tol):
        return "<"
    return "incomparable"


def dominance_verdicts(curves):
    """Verdict for every unordered pair of named curves, in a fixed order."""
    names = list(curves)
    envs = {name: disruption_envelope(curves[name]) for name in names}
    out = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            out.append({"a": a, "b": b, "verdict": compare_curves(envs[a], envs[b])})
    return out


def rank_curves(names, verdicts):
    """Order names by how many others they dominate, then by how few dominate them."""
    wins = {n: 0 for n in names}
    losses = {n: 0 for n in names}
    for v in verdicts:
        if v["verdict"] == ">":
            wins[v["a"]] += 1
            losses[v["b"]] += 1
        elif v["verdict"] == "<":
            wins[v["b"]] += 1
            losses[v["a"]] += 1
    order = sorted(range(len(names)), key=lambda i: (-wins[names[i]], losses[names[i]], i))
    return [{"name": names[i], "dominates": wins[names[i]], "dominated_by": losses[names[i]]}
            for i in order]


def vulnerability_report(model, lambdas=None, detector_cfg=None, groups=None):
    """Per-measurement and per-unit Pareto curves with dominance verdicts.

    Parameters
    ----------
    model : LoadedModel or ClosedLoop
    lambdas : array_like, optional
        Shared grid; by default every curve uses its own automatic grid.
    detector_cfg : DetectorConfig, optional
    groups : dict of name -> list of int, optional
        Measurement groups attacked together by a sparse attack restricted
        to the group.  Defaults to the model's process units, if any.
    """
    cl = _closed_loop(model)
    if groups is None:
        groups = getattr(model, "unit_groups", {})
    curves = {}
    for j in range(cl.m):
        try:
            grid = auto_lambda_grid(cl, index=j) if lambdas is None else lambdas
        except NoFeasibleMeasurement:
            # empty window: the curve stays at the origin
            curves[f"y{j}"] = []
            continue
        curves[f"y{j}"] = pareto_sweep(cl, "single", grid, detector_cfg, index=j)
    verdicts = dominance_verdicts(curves)
    report = {
        "measurements": {name: [r.as_dict() for r in rows] for name, rows in curves.items()},
        "verdicts": verdicts,
        "ranking": rank_curves(list(curves), verdicts),
        "groups": {},
        "group_verdicts": [],
        "group_ranking": [],
    }
    if groups:
        gcurves = {}
        for name, members in groups.items():
            members = sorted(int(j) for j in members)
            try:
                grid = auto_lambda_grid(cl, indices=members) if lambdas is None else lambdas
                gcurves[name] = pareto_sweep(cl, "sparse", grid, detector_cfg, k=len(members),
                                             candidates=members)
            except NoFeasibleMeasurement:
                gcurves[name] = []
            report["groups"][name] = {"members": members, "curve": [r.as_dict() for r in gcurves[name]]}
        report["group_verdicts"] = dominance_verdicts(gcurves)
        report["group_ranking"] = rank_curves(list(gcurves), report["group_verdicts"])
    return report


# -- one-off detection ------------------------------------------------------------

@dataclass(frozen=True)
class AttackSpec:
    """What to build for a detection experiment.

    ``kind`` is ``full``, ``single``, ``sparse`` or ``explicit``; the last
    uses ``Sigma_aa`` (and optionally ``mu``) as given.
    """

    kind: str
    lam: float = None
    index: int = None
    k: int = None
    Sigma_aa: np.ndarray = None
    mu: np.ndarray = None


def run_detection(model, spec, detector_cfg):
    """Build the attack, calibrate the LRT and estimate its rates."""
    cl = _closed_loop(model)
    if spec.kind == "explicit":
        S = np.atleast_2d(np.asarray(spec.Sigma_aa, dtype=float))
        mu = np.zeros(cl.m) if spec.mu is None else spec.mu
        attack = GaussianAttack(mu, S)
        summary, status, label, lam = {"status": "given"}, "ok", "explicit", spec.lam
    else:
        M1, M2 = objective_matrices(cl)
        ctx = AttackContext(M1, M2, spec.lam)
        attack, summary, status = build_attack(ctx, spec.kind, spec.index, spec.k)
        label, lam = _kind_label(spec.kind, spec.index, spec.k), spec.lam
    if attack.is_zero:
        raise DegenerateAttack("the requested attack has zero mean and zero covariance")
    result = detection_probability(cl, attack, detector_cfg)
    dis, est, det = evaluate_attack(cl, attack)
    rec = ParetoRecord(
        float(lam) if lam is not None else 0.0, label, list(attack.support), status,
        _finite_or_none(dis), _finite_or_none(est), _finite_or_none(det),
        result.p_detect, result.p_false_alarm, summary, Sigma_aa=attack.Sigma_aa,
    )
    return result, rec


# -- serialization -------------------------------------------------------------------

def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records):
    """CSV text with :data:`CSV_COLUMNS`; accepts records or their ``as_dict`` form."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        d = r.as_dict() if isinstance(r, ParetoRecord) else r
        writer.writerow([
            _cell(d["lambda"]),
            d["attack_kind"],
            ";".join(str(j) for j in d["support"]),
            d["status"],
            _cell(d["disruption_kl"]),
            _cell(d["estimate_kl"]),
            _cell(d["detection_kl"]),
            _cell(d["p_detect"]),
            _cell(d["p_false_alarm"]),
            json.dumps(d["feasibility"], sort_keys=True),
            d["reason"],
            "" if d["sigma_aa"] is None else json.dumps(d["sigma_aa"]),
        ])
    return buf.getvalue()


def read_csv_rows(text):
    """Parse CSV written by :func:`records_to_csv` back into dicts of plain values."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        out = dict(row)
        for key in ("lambda", "disruption_kl", "estimate_kl", "detection_kl", "p_detect", "p_false_alarm"):
            out[key] = float(row[key]) if row[key] else None
        out["support"] = [int(j) for j in row["support"].split(";")] if row["support"] else []
        out["feasibility"] = json.loads(row["feasibility"])
        out["sigma_aa"] = json.loads(row["sigma_aa"]) if row["sigma_aa"] else None
        rows.append(out)
    return rows


def to_json(payload, manifest):
    return json.dumps({"manifest": manifest, **payload}, indent=2, sort_keys=True, allow_nan=False) + "\n"
