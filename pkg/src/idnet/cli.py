"""Command-line entry point.

Exit codes: 0 success, 1 expected-outcome mismatch or failed check, 2 bad input.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import tomli_w

from .calibration import CalibrationError, calibrate
from .dynamics import DivergenceError
from .equilibria import CertificateError, SteadyStateError
from .formats import FormatError, dumps_spec, load_spec, reference_spec
from .interventions import EventError, EventKind, EventSchedule, bolus
from .loops import verify_loop_checklist
from .model import InvalidSpecError, signed_adjacency, validate_spec
from .scenarios import (
    ScenarioError,
    builtin,
    builtin_scenarios,
    dose_scan,
    load_scenario,
    log_grid,
    redundancy_experiment,
    run_scenario,
    steady_states,
)

OK, MISMATCH, BAD_INPUT = 0, 1, 2


class UsageError(ValueError):
    pass


def _spec(args):
    spec = load_spec(args.spec) if args.spec else reference_spec()
    problems = validate_spec(spec)
    if problems:
        raise UsageError("invalid spec:\n  " + "\n  ".join(str(v) for v in problems))
    return spec


def _scenario(name: str):
    if name.endswith(".toml") or Path(name).exists():
        return load_scenario(name)
    try:
        return builtin(name)
    except KeyError:
        known = ", ".join(s.name for s in builtin_scenarios())
        raise UsageError(f"unknown scenario {name!r} (builtin: {known})") from None


def _grid(text: str):
    try:
        a, b, n = text.split(":")
        return log_grid(float(a), float(b), int(n))
    except ValueError as exc:
        raise UsageError(f"--grid expects a:b:n with 0 < a < b and n >= 2 ({exc})") from None


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _with_dose(sc, dose: float):
    events = list(sc.events)
    for k, e in enumerate(events):
        if e.kind is not EventKind.KNOCKOUT:
            events[k] = replace(e, magnitude=dose)
            return replace(sc, events=EventSchedule(events))
    raise UsageError(f"scenario {sc.name!r} has no event to dose")


def _with_naive(sc, fraction: float):
    if fraction < 0:
        raise UsageError("--naive-fraction must be >= 0")
    extra = [bolus("naive", e.time, fraction * e.magnitude) for e in sc.events
             if e.kind is EventKind.BOLUS and e.species == "th1"]
    if not extra:
        raise UsageError(f"scenario {sc.name!r} has no TH1 transfer to add naive cells to")
    return replace(sc, events=EventSchedule.sorted([*sc.events, *extra]))


def cmd_run(args) -> int:
    spec = _spec(args)
    sc = _scenario(args.scenario)
    if args.dose is not None:
        sc = _with_dose(sc, args.dose)
    if args.naive_fraction:
        sc = _with_naive(sc, args.naive_fraction)
    if args.horizon is not None:
        sc = replace(sc, horizon=args.horizon)
    res = run_scenario(sc, spec, args.dt)
    out = _out(args)
    res.trajectory.write_csv(out / f"{sc.name}.csv")
    res.trajectory.write_events_csv(out / f"{sc.name}.events.csv")
    record = {
        "scenario": sc.name,
        "expected": sc.expected.value,
        "final_label": res.final_label.value,
        "tail_stable": res.tail_stable,
        "passed": res.passed,
        "dt": args.dt,
        "horizon": sc.horizon,
    }
    (out / f"{sc.name}.result.toml").write_text(tomli_w.dumps(record))
    if args.plots:
        from .plotting import plot_trajectory

        plot_trajectory(res.trajectory, out / f"{sc.name}.svg", sc.name)
    print(f"{sc.name}: final {res.final_label.value}, expected {sc.expected.value} -> {'PASS' if res.passed else 'FAIL'}")
    return OK if res.passed else MISMATCH


def cmd_steady(args) -> int:
    spec = _spec(args)
    try:
        cert = steady_states(spec)
    except CertificateError as exc:
        print(f"no bistability certificate: {exc}")
        return MISMATCH
    doc = {k: r.to_dict(spec.names) for k, r in cert.items()}
    text = tomli_w.dumps(doc)
    if args.out:
        (_out(args) / "steady_states.toml").write_text(text)
    print(text, end="")
    return OK


def cmd_scan(args) -> int:
    spec = _spec(args)
    sc = _scenario(args.scenario)
    resp = dose_scan(sc, args.param, _grid(args.grid), spec, args.dt, args.workers)
    lines = ["magnitude,label,response"]
    lines += [f"{g!r},{lab.value},{r!r}" for g, lab, r in zip(resp.grid, resp.labels, resp.response)]
    text = "\n".join(lines) + "\n"
    if args.out:
        (_out(args) / f"{sc.name}.scan.csv").write_text(text)
    print(text, end="")
    th = resp.threshold
    print(f"pattern {resp.pattern()}; threshold {'none' if th is None else repr(th)}; "
          f"top-decade variation {resp.top_decade_variation():.3g}")
    return OK


def cmd_loops(args) -> int:
    spec = _spec(args)
    lines = verify_loop_checklist(signed_adjacency(spec), args.max_len)
    for k, ln in enumerate(lines, 1):
        print(f"{k}. [{'PASS' if ln.passed else 'FAIL'}] {ln.name}: {ln.detail}")
    return OK if all(ln.passed for ln in lines) else MISMATCH


def cmd_redundancy(args) -> int:
    spec = _spec(args)
    rep = redundancy_experiment(spec, args.k, args.dt)
    for name, lab in rep.single.items():
        print(f"knockout {name}: {lab.value}")
    print(f"knockout all: {rep.full.value}")
    print(f"aggregation fidelity {rep.fidelity:.3e}; full-group vs cyt_a knockout {rep.full_vs_knockout:.3e}")
    print("PASS" if rep.passed else "FAIL")
    return OK if rep.passed else MISMATCH


def cmd_calibrate(args) -> int:
    center = _spec(args)
    try:
        res = calibrate(center, args.seed, args.budget, args.width, dt=args.dt)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}")
        for k, v in exc.scorecard.items():
            print(f"  {k}: {'pass' if v else 'fail'}")
        return MISMATCH
    text = dumps_spec(res.spec)
    (_out(args) / "calibrated_spec.toml").write_text(text)
    print(f"accepted candidate {res.candidate} for seed {res.seed}")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idnet", description="id/anti-id TH1-TH2 network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--spec", help="network spec TOML (default: bundled reference)")
        sp.add_argument("--dt", type=float, default=1e-3)
        sp.add_argument("--out", default=out_default)

    r = sub.add_parser("run", help="run a scenario (builtin name or TOML file)")
    r.add_argument("scenario", nargs="?")
    r.add_argument("--scenario", dest="scenario_opt")
    common(r, "out")
    r.add_argument("--horizon", type=float)
    r.add_argument("--dose", type=float, help="override the magnitude of the first event")
    r.add_argument("--naive-fraction", type=float, default=0.0,
                   help="add naive cells alongside each TH1 transfer, as a fraction of its dose")
    r.add_argument("--plots", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("steady", help="report the two steady states")
    common(s)
    s.set_defaults(func=cmd_steady)

    sc = sub.add_parser("scan", help="dose scan over one event magnitude")
    sc.add_argument("scenario", nargs="?")
    sc.add_argument("--scenario", dest="scenario_opt")
    sc.add_argument("--param", required=True, help="species whose event magnitude is scanned")
    sc.add_argument("--grid", required=True, help="log-spaced grid a:b:n")
    sc.add_argument("--workers", type=int, default=1)
    common(sc)
    sc.set_defaults(func=cmd_scan)

    lo = sub.add_parser("loops", help="feedback-loop checklist")
    lo.add_argument("--spec")
    lo.add_argument("--max-len", type=int, default=6)
    lo.set_defaults(func=cmd_loops)

    rd = sub.add_parser("redundancy", help="split CytA into k copies and knock them out")
    rd.add_argument("--k", type=int, default=2)
    common(rd)
    rd.set_defaults(func=cmd_redundancy)

    ca = sub.add_parser("calibrate", help="seeded random search around a spec")
    ca.add_argument("--seed", type=int, default=0)
    ca.add_argument("--budget", type=int, default=200)
    ca.add_argument("--width", type=float, default=1.0, help="search window in decades")
    common(ca, "out")
    ca.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return BAD_INPUT if exc.code else OK
    if hasattr(args, "scenario_opt"):
        args.scenario = args.scenario or args.scenario_opt
        if not args.scenario:
            print("error: a scenario is required", file=sys.stderr)
            return BAD_INPUT
    if getattr(args, "dt", 1.0) is not None and not getattr(args, "dt", 1.0) > 0:
        print("error: --dt must be > 0", file=sys.stderr)
        return BAD_INPUT
    if getattr(args, "horizon", None) is not None and not args.horizon > 0:
        print("error: --horizon must be > 0", file=sys.stderr)
        return BAD_INPUT
    try:
        return args.func(args)
    except (UsageError, FormatError, ScenarioError, EventError, InvalidSpecError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return BAD_INPUT
    except (DivergenceError, SteadyStateError, CertificateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return MISMATCH


if __name__ == "__main__":
    sys.exit(main())
