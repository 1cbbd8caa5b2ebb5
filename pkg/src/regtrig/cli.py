"""Command line entry point: ``regtrig {simulate,check-observability,verify,plot}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .csvio import verify_files, write_events_csv, write_trajectory_csv
from .executive import ConfigError, fit_decay, run_closed_loop, scenario_from_config
from .models import ModelError
from .observability import check_observability
from .polybridge import PolyModel, poly_model


def _load(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None


def cmd_simulate(args):
    doc = _load(args.config)
    scenario = scenario_from_config(doc)
    result = run_closed_loop(scenario)
    print(f"model {scenario.model.name}, {len(result.records)} events on [0, {scenario.t_final}]")
    for rec in result.records[: args.show_events]:
        print(f"  event {rec.index:3d}  t={rec.t:.9f}  {rec.cause:<12} "
              f"thetahat={np.array2string(rec.thetahat, precision=8)}  rank={rec.rank}")
    print(f"identification time: {result.t_id}")
    if result.t_id is not None and np.linalg.norm(result.log.x[-1]) > 1e-12:
        try:
            M, w = fit_decay(result, result.t_id)
            print(f"decay fit after identification: omega={w:.6g}, M={M:.6g}")
        except ValueError:
            pass
    for v in result.verdicts.values():
        print(v.line())
    out = scenario.output
    if out.get("trajectory_csv"):
        write_trajectory_csv(result, out["trajectory_csv"])
    if out.get("events_csv"):
        write_events_csv(result, out["events_csv"])
    if out.get("plot_svg") and out.get("trajectory_csv"):
        from .plotting import plot_trajectory
        plot_trajectory(out["trajectory_csv"], out["plot_svg"])
    return 0 if result.all_passed else 1


def _poly_model_from_doc(doc, base: Path):
    if "model_file" in doc:
        return PolyModel.load(base / doc["model_file"])
    if "polynomial_model" in doc:
        return PolyModel.from_dict(doc["polynomial_model"])
    spec = doc.get("model")
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("model", "need model {name, ...}, model_file or polynomial_model")
    params = dict(spec.get("params", {}))
    params.update({k: v for k, v in spec.items() if k not in ("name", "params")})
    return poly_model(spec["name"], **params)


def cmd_check_observability(args):
    path = Path(args.config)
    doc = _load(path)
    model = _poly_model_from_doc(doc, path.parent)
    theta = doc.get("theta_true") if args.theta is None else args.theta
    draws = args.draws if args.draws is not None else doc.get("draws", 16)
    J = args.J if args.J is not None else doc.get("J")
    reports = check_observability(model, draws=draws, J=J, seed=args.seed, theta=theta)
    summary = {
        "model": model.name,
        "draws": len(reports),
        "certified_all": all(r.certified for r in reports),
        "certifying_all": all(r.certifying for r in reports),
        "reports": [r.to_dict() for r in reports],
    }
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2))
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        for d, r in enumerate(reports):
            sets = [sorted(i + 1 for i in s) for s in r.index_sets]
            line = f"draw {d:2d}: index sets {sets} -> "
            if r.certified:
                kind = "exact" if r.certifying else "numerical search, non-certifying"
                line += f"certified with N={r.N} ({kind})"
            else:
                line += f"NOT certified, first uncovered index {r.first_uncovered + 1}"
            print(line)
            for s, i, w, res in r.witnesses():
                print(f"    step {s}, index {i + 1}: witness {np.array2string(w, precision=6)}"
                      f" residual {res:.2e}")
        verdict = "certified" if summary["certified_all"] else "not certified"
        print(f"overall: {verdict} on {len(reports)} draws")
    return 0 if summary["certified_all"] else 1


def cmd_verify(args):
    theta = None if args.theta_true is None else [float(v) for v in args.theta_true.split(",")]
    results = verify_files(args.events_csv, args.trajectory_csv, T=args.T, theta_true=theta)
    for c in results:
        print(c.line())
    return 0 if all(c.passed for c in results) else 1


def cmd_plot(args):
    from .plotting import plot_trajectory
    plot_trajectory(args.trajectory_csv, args.output)
    print(f"wrote {args.output}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="regtrig", description="Event-triggered adaptive control: simulate, check observability, verify logs, plot.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a closed-loop scenario from a JSON config")
    p.add_argument("config")
    p.add_argument("--show-events", type=int, default=10, help="number of event rows to print")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-observability", help="run the Lie-derivative observability test")
    p.add_argument("config", help="JSON with model {name, gains}, model_file or polynomial_model")
    p.add_argument("--draws", type=int)
    p.add_argument("--J", type=int, help="highest Lie-derivative order (default 2n-1)")
    p.add_argument("--theta", type=float, nargs="+")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="print the machine-readable summary")
    p.add_argument("--summary", help="also write the summary JSON here")
    p.set_defaults(func=cmd_check_observability)

    p = sub.add_parser("verify", help="re-check invariants from exported CSV files")
    p.add_argument("events_csv")
    p.add_argument("trajectory_csv")
    p.add_argument("--T", type=float)
    p.add_argument("--theta-true", help="comma-separated true parameter")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="plot |x(t)| and estimates to SVG")
    p.add_argument("trajectory_csv")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
