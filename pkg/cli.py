"""Batch front-end: simulate queries, run the attacks, check the worked comparisons.

    python cli.py simulate --config scenarios/demo_basic.json --out run.json
    python cli.py attack flaw --trials 10000 --out flaw.json
    python cli.py attack pipeline --transcript run.json --out recovery.json
    python cli.py attack unmask --z 210 --m 100 --out unmask.json
    python cli.py paper-examples
"""
import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass

from analytics import analytics_engine
from attacks import (LOCATE_FORMAT, RECOVERY_FORMAT, UNMASK_FORMAT, WORKED_L, WORKED_RHO, WORKED_Z, FlawSetting,
                     build_msb_collision, chain_decision, demonstrate_flaw, full_attack_pipeline, unmask_difference)
from config import TOOL_VERSION, Config, get_config
from errors import EXIT_INTERNAL, EXIT_OK, InternalAssertionError, SimulationError, ValidationError
from monitoring import monitoring
from numkit import SeededRng, bit, mod_reduce
from performance_monitor import performance_monitor
from protocol import ComparisonMode, check_transcript, load_scenario, run_full_query

GLYPHS = {"ok": ("✅", "OK"), "fail": ("❌", "FAIL"), "warn": ("⚠️", "WARN")}


@dataclass
class RunManifest:
    command: str
    config_path: str
    seed: int
    mode: str
    output_path: str
    tool_version: str
    profile: str
    duration_ms: float = None


def glyph(kind):
    plain = Config.NO_COLOR or bool(os.environ.get("NO_COLOR"))
    return GLYPHS[kind][1 if plain else 0]


def write_json(path, data):
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(data, sort_keys=True, indent=2) + "\n")


def read_json(path, field_name):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ValidationError(field_name, f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise ValidationError(field_name, f"invalid JSON at line {e.lineno}: {e.msg}")


class CommandRunner:
    def __init__(self, args):
        self.args = args
        self.settings = get_config(args.profile)
        monitoring.set_level(self.settings.LOG_LEVEL)
        self.command = args.command if args.command != "attack" else f"attack {args.attack}"
        self.run_id = performance_monitor.track_run_start(self.command.replace(" ", "_"))

    def finish(self, data, seed=None, mode=None, config_path=None):
        """Embed the manifest, then write the JSON (and optional PDF) outputs"""
        perf = performance_monitor.track_run_end(self.run_id, EXIT_OK)
        manifest = RunManifest(
            command=self.command,
            config_path=config_path,
            seed=seed,
            mode=mode,
            output_path=getattr(self.args, "out", None),
            tool_version=TOOL_VERSION,
            profile=self.settings.PROFILE,
            duration_ms=perf["duration_ms"] if perf and self.args.timing else None
        )
        data["manifest"] = asdict(manifest)
        if self.args.out:
            write_json(self.args.out, data)
            print(f"{glyph('ok')} Wrote {self.args.out}")
        if getattr(self.args, "pdf", None):
            from report_pdf import pdf_generator
            pdf_generator.generate_report(data, self.args.pdf)
            print(f"{glyph('ok')} Wrote {self.args.pdf}")
        return data


def cmd_simulate(args):
    runner = CommandRunner(args)
    scenario = load_scenario(args.config).with_overrides(seed=args.seed, mode=args.mode)
    transcript = run_full_query(scenario, runner.settings)
    data = transcript.to_dict()

    summary = analytics_engine.process_comparisons(
        transcript.comparisons, transcript.response.indices, transcript.sidecar["distances"], scenario.k_nn)
    data["summary"] = summary
    runner.finish(data, seed=scenario.seed, mode=scenario.mode, config_path=args.config)

    knn_ok = summary["knn_matches_truth"]
    print(f"{glyph('ok' if knn_ok else 'warn')} k-NN returned {transcript.response.indices}, "
          f"brute force {transcript.sidecar['knn']} ({'match' if knn_ok else 'MISMATCH'})")
    print(f"{glyph('ok' if not summary['wrong_pairs'] else 'warn')} Decisions correct: "
          f"{summary['correct_decisions']}/{summary['pairs']}")
    for a, b in summary["wrong_pairs"]:
        print(f"   wrong decision on pair ({a}, {b})")
    return EXIT_OK


def cmd_attack_flaw(args):
    runner = CommandRunner(args)
    m = args.m if args.m is not None else runner.settings.FLAW_DEFAULT_M
    k_sec = args.k_sec if args.k_sec is not None else runner.settings.FLAW_DEFAULT_K_SEC
    setting = FlawSetting(m=m, k_sec=k_sec)
    mode = args.mode or ComparisonMode.FAITHFUL.value
    report = demonstrate_flaw(setting, args.trials, SeededRng(args.seed), workers=args.workers, mode=mode,
                              settings=runner.settings)
    data = runner.finish(report.to_dict(), seed=args.seed, mode=mode)

    print(f"{glyph('ok')} l={setting.l} k_sec={setting.k_sec} trials={args.trials}")
    print(f"{glyph('warn' if report.agreement_rate < 1 else 'ok')} Agreement with truth: "
          f"{report.agreement_rate:.4f} (exact {data['exact_agreement_rate']:.4f})")
    print(f"   counterexamples recorded: {len(report.counterexamples)}")
    return EXIT_OK


def _load_transcript(path):
    return check_transcript(read_json(path, "transcript"))


def cmd_attack_recover(args, invert_history):
    runner = CommandRunner(args)
    transcript = _load_transcript(args.transcript)
    report = full_attack_pipeline(transcript, invert_history=invert_history,
                                  node_budget=runner.settings.FILTER_NODE_BUDGET)
    data = report.to_dict(RECOVERY_FORMAT if invert_history else LOCATE_FORMAT)
    runner.finish(data, seed=transcript["config"]["seed"], mode=report.mode)

    print(f"{glyph('ok')} Virtual location (t-scaled): {data['virtual_location_scaled']}")
    if invert_history:
        if report.virtual_only:
            print(f"{glyph('warn')} History unknown: only the virtual location is recovered")
        else:
            print(f"{glyph('ok')} User location: {data['user_location']}")
    print(f"   candidates: {len(report.candidates)} (unique: {report.unique})")
    for name, matched in sorted(report.matches.items()):
        if matched is not None:
            print(f"{glyph('ok' if matched else 'fail')} matches ground truth ({name}): {matched}")
    return EXIT_OK


def cmd_attack_unmask(args):
    runner = CommandRunner(args)
    if not args.z:
        raise ValidationError("z", "at least one --z value is required")
    if args.m is None:
        raise ValidationError("m", "--m is required for unmask")
    results = [{"z": z, "candidates": unmask_difference(z, args.m, signed=args.signed)} for z in args.z]
    for r in results:
        r["count"] = len(r["candidates"])
        print(f"{glyph('ok')} z={r['z']}: {r['count']} candidates {r['candidates']}")
    runner.finish({"format_version": UNMASK_FORMAT, "m": args.m, "signed": args.signed, "results": results})
    return EXIT_OK


def _expect(label, actual, expected):
    if actual != expected:
        raise InternalAssertionError(f"{label}: computed {actual}, expected {expected}")


def cmd_paper_examples(args):
    """Recompute both worked comparisons line by line"""
    expected = {WORKED_Z[0]: {"w": 34, "msb": 0}, WORKED_Z[1]: {"w": 38, "msb": 1}}
    collision = build_msb_collision(WORKED_L, WORKED_RHO, WORKED_Z[0])
    _expect("z partner", collision.z1, WORKED_Z[1])

    decisions = []
    for number, z in enumerate(WORKED_Z, start=1):
        w = z + WORKED_RHO
        w_bar, rho_bar = mod_reduce(w, WORKED_L), mod_reduce(WORKED_RHO, WORKED_L)
        _expect(f"example {number} w", w, expected[z]["w"])
        _expect(f"example {number} w_bar", w_bar, 2)
        _expect(f"example {number} rho_bar", rho_bar, 3)
        _expect(f"example {number} msb", bit(z, WORKED_L), expected[z]["msb"])
        decision = [chain_decision(w_bar, rho_bar, eps, WORKED_L) for eps in (-1, 1)]
        decisions.append(decision)
        print(f"{glyph('ok')} Example {number}: z = {z}, l = {WORKED_L}, rho = {WORKED_RHO}, w = z + rho = {w}, "
              f"w_bar = {w_bar} = ({w_bar:0{WORKED_L}b})_2, rho_bar = {rho_bar} = ({rho_bar:0{WORKED_L}b})_2, "
              f"MSB(z) = {bit(z, WORKED_L)}")
    _expect("decisions", decisions[0], decisions[1])
    print(f"{glyph('warn')} Same (w_bar, rho_bar) in both examples: decision "
          f"{'d_a >= d_b' if decisions[0][0] else 'd_a < d_b'} (eps=-1) / "
          f"{'d_a >= d_b' if decisions[0][1] else 'd_a < d_b'} (eps=+1) for both, though the MSBs differ")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", default=None, help="configuration profile")
    common.add_argument("--out", default=None, help="output JSON path")
    common.add_argument("--pdf", default=None, help="also render the output as PDF")
    common.add_argument("--timing", action="store_true", help="record wall-clock duration in the manifest")
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(prog="lbsaudit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="run one query end to end")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--mode", choices=[m.value for m in ComparisonMode], default=None)

    attack = sub.add_parser("attack", help="run an attack")
    attacks = attack.add_subparsers(dest="attack", required=True)

    flaw = attacks.add_parser("flaw", parents=[common], help="measure the comparison flaw")
    flaw.add_argument("--trials", type=int, default=10_000)
    flaw.add_argument("--m", type=int, default=None)
    flaw.add_argument("--k-sec", dest="k_sec", type=int, default=None)
    flaw.add_argument("--workers", type=int, default=None)
    flaw.add_argument("--mode", choices=["faithful", "oracle"], default=None)

    for name, text in (("locate", "recover the virtual location and distances"),
                       ("pipeline", "recover differences, location, distances and user location")):
        p = attacks.add_parser(name, parents=[common], help=text)
        p.add_argument("--transcript", "--config", dest="transcript", required=True,
                       help="transcript JSON written by simulate")

    unmask = attacks.add_parser("unmask", parents=[common], help="candidate differences of masked z values")
    unmask.add_argument("--z", type=int, action="append", default=[])
    unmask.add_argument("--m", type=int, default=None)
    unmask.add_argument("--signed", action="store_true")

    sub.add_parser("paper-examples", parents=[common], help="recompute the worked comparison examples")
    return parser


def cmd_attack(args):
    if args.attack == "flaw":
        if args.seed is None:
            args.seed = 0
        return cmd_attack_flaw(args)
    if args.attack == "unmask":
        return cmd_attack_unmask(args)
    return cmd_attack_recover(args, invert_history=args.attack == "pipeline")


def dispatch(args):
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "paper-examples":
        return cmd_paper_examples(args)
    return cmd_attack(args)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except SimulationError as e:
        stage = getattr(e, "stage", None) or getattr(e, "field", None) or args.command
        monitoring.track_error(stage, type(e).__name__, str(e))
        print(f"{glyph('fail')} {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        monitoring.track_error(args.command, type(e).__name__, str(e))
        print(f"{glyph('fail')} internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
