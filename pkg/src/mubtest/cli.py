"""Command line front end.

Subcommands run one tester on planted fixtures (or on states loaded from
JSON files) and emit CSV sweeps or single JSON verdicts.

    mubtest identity --epsilon 0.5 --trials 200 --seed 7
    mubtest identity --state-a a.json --state-b b.json --epsilon 0.3
    mubtest independence --layout 2,2 --setting collective --out rates.csv
    mubtest sweep --tester identity --epsilon 1,0.5,0.25 --format csv
    mubtest calibrate --tester condindep --setting independent
    mubtest selftest

Option precedence is CLI flag > config file (--config, ``key = value`` lines,
``#`` comments) > built-in defaults.  Config keys: any TesterConfig constant
(closeness_C, collective_C, swap_C, collection_L, condindep_L_collective,
condindep_L_independent), plus setting, epsilon, trials, seed, format,
workers.  Exit codes: 0 verdict computed, 2 invalid input, 3 selftest or
calibration failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from mubtest import harness, testers
from mubtest.classical import BadEpsilon
from mubtest.harness import (
    BadSpec,
    CalibrationFailed,
    ExperimentSpec,
    IoError,
    UnreachableDistance,
    read_config,
)
from mubtest.sampling import RngStream
from mubtest.states import StateError, SystemLayout, load_state
from mubtest.testers import TesterConfig

_DEFAULT_SETTING = {
    "identity": "independent",
    "mixedness": "independent",
    "independence": "collective",
    "collection": "collective",
    "condindep": "collective",
}

_DEFAULT_LAYOUT = {
    "identity": "2",
    "mixedness": "2",
    "independence": "2,2",
    "condindep": "2,2",
}

_CONFIG_KEYS = (
    "closeness_C",
    "collective_C",
    "swap_C",
    "collection_L",
    "condindep_L_collective",
    "condindep_L_independent",
    "setting",
    "epsilon",
    "trials",
    "seed",
    "format",
    "workers",
)


def _shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--setting", choices=testers.SETTINGS, default=None)
    p.add_argument("--epsilon", default=None, help="distance parameter in (0, 1]; comma list for sweep")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--state-a", default=None, metavar="FILE", help="state JSON; switches to single-verdict mode")
    p.add_argument("--state-b", default=None, metavar="FILE")
    p.add_argument("--layout", default=None, help="party dimensions, e.g. 2,2")
    p.add_argument("--out", default=None, metavar="FILE")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--const-C", type=float, default=None, help="override the closeness/collective/swap constant for the chosen setting")
    p.add_argument("--const-L", type=float, default=None, help="override the collection/condindep repetition constant")
    p.add_argument("--config", default=None, metavar="FILE", help="key = value defaults file")
    p.add_argument("--workers", type=int, default=None)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mubtest", description=__doc__.split("\n")[1])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("identity", "mixedness", "independence", "collection", "condindep", "sweep"):
        p = sub.add_parser(name)
        _shared_flags(p)
        if name == "collection":
            p.add_argument("--property", choices=("identity", "independence", "both"), default="identity")
            p.add_argument("--n-states", type=int, default=8)
        if name == "condindep":
            p.add_argument("--n-labels", type=int, default=4)
        if name == "sweep":
            p.add_argument("--tester", choices=harness.TESTER_IDS, required=True)
            p.add_argument("--n-states", type=int, default=8)
            p.add_argument("--n-labels", type=int, default=4)
    cal = sub.add_parser("calibrate")
    _shared_flags(cal)
    cal.add_argument("--tester", choices=harness.TESTER_IDS, required=True)
    cal.add_argument("--max-error", type=float, default=1.0 / 3.0)
    sub.add_parser("selftest")
    return ap


def _pick(cli_value, file_cfg: dict, key: str, default, cast=str):
    """CLI flag > config file > default."""
    if cli_value is not None:
        return cli_value
    if key in file_cfg:
        return cast(file_cfg[key])
    return default


def _tester_config(args, file_cfg: dict, setting: str) -> TesterConfig:
    overrides = {}
    for name in (
        "closeness_C", "collective_C", "swap_C", "collection_L",
        "condindep_L_collective", "condindep_L_independent",
    ):
        if name in file_cfg:
            overrides[name] = float(file_cfg[name])
    if args.const_C is not None:
        field = {"independent": "closeness_C", "local": "closeness_C",
                 "collective": "collective_C", "swap": "swap_C"}[setting]
        overrides[field] = args.const_C
    if args.const_L is not None:
        tester = _tester_id(args)
        if tester == "condindep":
            overrides["condindep_L_collective" if setting == "collective" else "condindep_L_independent"] = args.const_L
        else:
            overrides["collection_L"] = args.const_L
    return dataclasses.replace(testers.DEFAULT_CONFIG, **overrides)


def _tester_id(args) -> str:
    if args.command == "collection":
        return {"identity": "collection-identity", "independence": "collection-independence", "both": "collection-both"}[args.property]
    if args.command in ("sweep", "calibrate"):
        return args.tester
    return args.command


def _parse_layout(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise BadSpec(f"cannot parse layout {text!r}; expected e.g. 2,2")
    return dims


def _parse_epsilons(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise BadSpec(f"cannot parse epsilon list {text!r}")


def _single_verdict(args, setting: str, eps: float, seed: int, cfg: TesterConfig) -> str:
    """Run one tester invocation on explicitly provided states."""
    state_a, layout_a = load_state(args.state_a)
    if args.layout is not None:
        layout_a = SystemLayout(_parse_layout(args.layout))
    src_a = testers.source(state_a, layout_a, name="a")
    stream = RngStream(seed)
    cmd = args.command
    if cmd == "identity":
        if args.state_b is None:
            raise BadSpec("identity needs --state-b alongside --state-a")
        state_b, layout_b = load_state(args.state_b)
        v = testers.identity_test(
            src_a, testers.source(state_b, layout_b, name="b"), eps, setting, cfg, stream=stream
        )
    elif cmd == "mixedness":
        v = testers.mixedness(src_a, eps, setting, cfg, stream=stream)
    elif cmd == "independence":
        if setting == "local":
            v = testers.local_independence(src_a, eps, cfg, stream=stream)
        else:
            v = testers.mpartite_independence(src_a, eps, setting, cfg, stream=stream)
    else:
        raise BadSpec(f"--state-a is not supported for {cmd!r}; it runs on planted fixtures")
    return v.to_json()


def _run(args) -> int:
    file_cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key in file_cfg:
        if key not in _CONFIG_KEYS:
            raise BadSpec(f"unknown config key {key!r}; known keys: {', '.join(_CONFIG_KEYS)}")

    if args.command == "selftest":
        report = harness.selftest()
        print(report.summary())
        return 0 if report.passed else 3

    tester = _tester_id(args)
    setting_default = _DEFAULT_SETTING.get(args.command, "collective")
    if args.command == "sweep":
        setting_default = _DEFAULT_SETTING.get(tester.split("-")[0], "collective")
    setting = _pick(args.setting, file_cfg, "setting", setting_default)
    if tester == "condindep" and args.setting is None and "setting" not in file_cfg:
        setting = "collective"
    eps_text = _pick(args.epsilon, file_cfg, "epsilon", "0.5")
    seed = int(_pick(args.seed, file_cfg, "seed", 2026, int))
    trials = int(_pick(args.trials, file_cfg, "trials", 100, int))
    fmt = _pick(args.format, file_cfg, "format", "csv")
    workers = int(_pick(args.workers, file_cfg, "workers", 1, int))
    cfg = _tester_config(args, file_cfg, setting)

    if args.command == "calibrate":
        result = harness.calibrate(
            tester,
            setting=setting,
            max_error=args.max_error,
            trials=trials if args.trials is not None or "trials" in file_cfg else 120,
            seed=seed,
            base_config=cfg,
            out=args.out,
        )
        import json

        print(json.dumps(result))
        return 0

    epsilons = _parse_epsilons(eps_text)
    if args.command != "sweep" and len(epsilons) != 1:
        raise BadSpec("use the sweep subcommand for multi-epsilon grids")

    if getattr(args, "state_a", None):
        text = _single_verdict(args, setting, epsilons[0], seed, cfg)
        if args.out:
            try:
                with open(args.out, "w") as fh:
                    fh.write(text + "\n")
            except OSError as exc:
                raise IoError(f"cannot write {args.out}: {exc}") from exc
        else:
            print(text)
        return 0

    layout_default = _DEFAULT_LAYOUT.get(args.command, "2,2")
    if args.command == "sweep":
        layout_default = _DEFAULT_LAYOUT.get(tester, "2" if tester == "collection-identity" else "2,2")
    if args.command == "collection":
        layout_default = "2" if args.property == "identity" else "2,2"
    layout = _parse_layout(args.layout if args.layout is not None else layout_default)

    spec = ExperimentSpec(
        tester=tester,
        layout=layout,
        epsilons=epsilons,
        trials=trials,
        setting=setting,
        seed=seed,
        config=cfg,
        n_states=getattr(args, "n_states", 8),
        n_labels=getattr(args, "n_labels", 4),
        out=args.out,
        fmt=fmt,
        workers=workers,
    )
    report = harness.run_experiment(spec)
    if args.out is None:
        sys.stdout.write(report.to_csv() if fmt == "csv" else report.to_json())
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except CalibrationFailed as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 3
    except (BadSpec, BadEpsilon, UnreachableDistance, StateError, IoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
