"""CSV export of simulation runs and re-verification from the files alone."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .executive import EPS_CONSIST, TOL_CONSTANT, TOL_SPACING, CheckResult, SimulationResult


def trajectory_rows(r: SimulationResult):
    """Header and rows ``t, x_*, u_*, thetahat_*, V, threshold, event_flag``.

    At an event time the row carries the post-event estimate, input and
    threshold.  The initial time is not flagged.
    """
    p = r.scenario.model.plant
    header = (["t"] + [f"x_{i + 1}" for i in range(p.n)] + [f"u_{i + 1}" for i in range(p.m)]
              + [f"thetahat_{i + 1}" for i in range(p.l)] + ["V", "threshold", "event_flag"])
    fired = {rec.t for rec in r.records}
    rows = []
    segs = r.segments
    for j, sg in enumerate(segs):
        last = len(sg.log)
        if j + 1 < len(segs) and segs[j + 1].t0 == sg.log.t[-1]:
            last -= 1
        thr = math.nan if sg.threshold is None else sg.threshold
        for k in range(last):
            t = float(sg.log.t[k])
            rows.append([t, *sg.log.x[k], *sg.log.u[k], *sg.thetahat, sg.V[k], thr,
                         int(t in fired)])
    return header, rows


def event_rows(r: SimulationResult):
    p = r.scenario.model.plant
    l = p.l
    header = (["index", "t", "cause", "mu", "rank", "update_distance"]
              + [f"x_{i + 1}" for i in range(p.n)] + [f"thetahat_{i + 1}" for i in range(l)]
              + [f"G_{i + 1}{j + 1}" for i in range(l) for j in range(l)]
              + [f"Z_{i + 1}" for i in range(l)])
    rows = []
    for rec in r.records:
        G = rec.gram.G if rec.gram is not None else np.full((l, l), np.nan)
        Z = rec.gram.Z if rec.gram is not None else np.full(l, np.nan)
        rows.append([rec.index, rec.t, rec.cause, rec.mu, rec.rank, rec.update_distance,
                     *rec.x, *rec.thetahat, *G.ravel(), *Z])
    return header, rows


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_trajectory_csv(r: SimulationResult, path):
    _write(path, *trajectory_rows(r))


def write_events_csv(r: SimulationResult, path):
    _write(path, *event_rows(r))


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns by name; numeric columns become float arrays."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [row[j] for row in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col, dtype=object)
    return out


def _prefixed(cols, prefix):
    names = sorted((k for k in cols if k.startswith(prefix)), key=lambda k: int(k[len(prefix):]))
    if not names:
        return None
    return np.column_stack([cols[k] for k in names])


def verify_files(events_csv, trajectory_csv, T: float | None = None,
                 theta_true=None) -> list[CheckResult]:
    """Re-check a run from its CSV files.

    Checks needing ``T`` or the true parameter are skipped when those are
    not supplied.
    """
    ev = read_csv(events_csv)
    tr = read_csv(trajectory_csv)
    results = []

    V, thr = tr["V"], tr["threshold"]
    has = np.isfinite(thr)
    margin = float(np.max(V[has] - thr[has] - 1e-8 * (1 + thr[has]))) if has.any() else -1.0
    results.append(CheckResult("lyapunov_bound", margin <= 0, margin))

    times = np.concatenate([[0.0], ev["t"]]) if len(ev.get("t", [])) else np.array([0.0])
    if T is not None:
        tol = 1e-10 * np.maximum(1.0, times[:-1])
        margin = float(np.max(np.diff(times) - T - tol)) if len(times) > 1 else -T
        results.append(CheckResult("dwell_cap", margin <= 0, margin))

    if theta_true is not None and len(times) > 1:
        theta = np.atleast_1d(np.asarray(theta_true, dtype=float))
        l = len(theta)
        hats = _prefixed(ev, "thetahat_")
        th0 = _prefixed(tr, "thetahat_")[0]
        prev = np.vstack([th0, hats[:-1]])
        tol_b = 1e-8 * (1 + np.linalg.norm(theta))
        err_prev = np.linalg.norm(theta - prev, axis=1)
        jump = float(np.max(np.linalg.norm(hats - prev, axis=1) - err_prev - tol_b))
        growth = float(np.max(np.linalg.norm(theta - hats, axis=1) - 2 * err_prev - tol_b))
        results.append(CheckResult("jump_bound", jump <= 0, jump))
        results.append(CheckResult("growth_bound", growth <= 0, growth))

        G = np.column_stack([ev[f"G_{i + 1}{j + 1}"] for i in range(l) for j in range(l)])
        G = G.reshape(-1, l, l)
        Z = _prefixed(ev, "Z_")
        res = np.linalg.norm(np.einsum("kij,j->ki", G, theta) - Z, axis=1)
        consist = float(np.max(res - EPS_CONSIST * (1 + np.linalg.norm(Z, axis=1))))
        results.append(CheckResult("gram_consistency", consist <= 0, consist))

        eps_id = 1e-6 * (1 + np.linalg.norm(theta))
        ident = np.flatnonzero(np.linalg.norm(hats - theta, axis=1) <= eps_id)
        if len(ident):
            k = ident[0]
            constancy = float(np.max(np.linalg.norm(hats[k:] - hats[k], axis=1))) - TOL_CONSTANT
            results.append(CheckResult("post_id_constancy", constancy <= 0, constancy))
            if T is not None and len(ev["t"]) > k + 1:
                spacing = float(np.max(np.abs(np.diff(ev["t"][k:]) - T))) - TOL_SPACING
                results.append(CheckResult("post_id_spacing", spacing <= 0, spacing))
    return results
