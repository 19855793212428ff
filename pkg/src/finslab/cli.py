"""Command line entry point: ``finslab check|decompose|geodesic|report-schema``."""
from __future__ import annotations

import argparse
import json
import sys

from . import scenario as scn

COMMANDS = {"check": scn.run_campaign, "decompose": scn.run_decompose,
            "geodesic": scn.run_geodesic}


def _parser():
    p = argparse.ArgumentParser(prog="finslab",
                                description="Sampled verification campaigns for "
                                            "pseudo-Finsler metrics and connections.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("check", "run the configured checks"),
                        ("decompose", "recover (Z, A) from the configured connection"),
                        ("geodesic", "integrate the configured geodesic")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("config", help="JSON config path, or 'demo:<name>' for a bundled one")
        c.add_argument("--seed", type=int, help="override the sampling seed")
        c.add_argument("--samples", type=int, help="override the sample count")
        c.add_argument("--tol-scale", type=float, default=1.0,
                       help="multiply every tolerance by this factor")
        c.add_argument("--out", help="write the report here instead of stdout")
        c.add_argument("--format", choices=["json", "csv"], help="report format")
    sub.add_parser("report-schema", help="print the report JSON schema")
    return p


def _read_config(ref):
    if ref.startswith("demo:"):
        return scn.parse_config(scn.demo_config(ref[5:]))
    return scn.load_config(ref)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _summary(rep):
    err = sys.stderr
    for w in rep.document["warnings"]:
        print(f"warning: {w}", file=err)
    for sc in rep.document["scenarios"]:
        for chk in sc["checks"]:
            line = f"[{chk['verdict']:>5}] {sc['name']}: {chk['id']}"
            if "error" in chk:
                line += f" ({chk['error']})"
            print(line, file=err)
    print(f"verdict: {rep.verdict}  hash: {rep.hash}", file=err)


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "report-schema":
        sys.stdout.write(json.dumps(scn.schema("report"), indent=2) + "\n")
        return scn.EXIT_PASS
    if args.tol_scale <= 0:
        print("error: --tol-scale must be positive", file=sys.stderr)
        return scn.EXIT_CONFIG
    try:
        cfg = _read_config(args.config)
        rep = COMMANDS[args.command](cfg, seed=args.seed, samples=args.samples,
                                     tol_scale=args.tol_scale)
    except scn.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for e in exc.errors:
            if e.get("suggestions"):
                print(f"  suggestions for {e['path']}: {', '.join(e['suggestions'])}",
                      file=sys.stderr)
        return scn.EXIT_CONFIG
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return scn.EXIT_CONFIG
    except Exception as exc:
        print(f"evaluation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return scn.EXIT_EVAL

    fmt = args.format or cfg.output.get("format", "json")
    out = args.out or cfg.output.get("path")
    if fmt == "json":
        _emit(rep.to_json(), out)
    elif args.command == "geodesic":
        _emit("".join(t.to_csv() for t in getattr(rep, "trajectories", [])), out)
    else:
        _emit(rep.to_csv(), out)
        gaps = rep.gaps_csv()
        if gaps and out:
            stem = out[:-4] if out.endswith(".csv") else out
            _emit(gaps, stem + ".gaps.csv")
    _summary(rep)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
