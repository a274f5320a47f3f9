"""Command-line front-end.

Every command writes one table.  The first line of a CSV file (or the
``config`` member of a JSON file) holds the fully resolved configuration, so
``fuzzybell rerun FILE`` regenerates the same bytes.  Angles are read in
degrees and written in radians.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any

import numpy as np

from . import __version__
from .analysis import (
    fringe_sweep,
    harmonic_content,
    success_probability_with_error,
    visibility_curve,
    visibility_vs_eta,
)
from .chsh import maximize_chsh
from .errors import ConfigError, FuzzyBellError
from .loss import WORKERS_ENV, LossChannel, McConfig, default_workers, outcome_labels
from .measure import MeasurementScheme
from .state import DEFAULT_TRUNCATION, SingletSpec, spdc_weights

COMMANDS = ("fringe", "chsh", "visibility", "success", "harmonics", "spdc-fringe")
CONFIG_PREFIX = "# config: "

_PAIRS = {"pp": (+1, +1), "pm": (+1, -1), "mp": (-1, +1), "mm": (-1, -1)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser, need_state: bool = True):
    state = p.add_mutually_exclusive_group(required=need_state)
    state.add_argument("--n", type=int, help="pair number of a singlet spin-n/2 state")
    state.add_argument("--gain", type=float, help="nonlinear gain g of the down-converted state")
    p.add_argument("--truncation", type=float, default=DEFAULT_TRUNCATION,
                   help="tail mass discarded from the pair-number distribution (default %(default)g)")
    p.add_argument("--scheme", choices=("dichotomic", "of", "td", "parity"), default="dichotomic")
    p.add_argument("--k", type=int, default=0, help="orthogonality-filter threshold")
    p.add_argument("--h", type=int, default=0, help="threshold-detector threshold")
    p.add_argument("--strict-thresholds", action="store_true",
                   help="require difference > k / total > h instead of >=")
    p.add_argument("--eta", type=float, default=1.0, help="channel transmittivity")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--shots", type=int, default=100_000, help="Monte Carlo shots per Fock cell")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help=f"Monte Carlo worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--output", "-o", default="-", help="output file, '-' for stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_grid(p):
    p.add_argument("--grid", type=int, default=181, help="uniform points over [0, 180) degrees")
    p.add_argument("--angles-deg", type=_float_list, default=None,
                   help="explicit comma-separated relative angles in degrees (overrides --grid)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fuzzybell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fringe", help="joint outcome probabilities against the relative angle")
    _add_common(p)
    _add_grid(p)

    p = sub.add_parser("spdc-fringe", help="fringe of the down-converted pair-number mixture")
    _add_common(p)
    _add_grid(p)

    p = sub.add_parser("chsh", help="maximize the CHSH parameter over analyser angles")
    _add_common(p)
    p.add_argument("--restarts", type=int, default=16)

    p = sub.add_parser("visibility", help="visibility and success probability against a threshold or eta")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--thresholds", type=_int_list, default=None, help="OF k or TD h values, e.g. 0,2,4")
    p.add_argument("--etas", type=_float_list, default=None, help="transmittivities to sweep instead")
    p.add_argument("--pair", choices=sorted(_PAIRS), default="pp", help="joint outcome whose fringe is used")

    p = sub.add_parser("success", help="single-side conclusive probability")
    _add_common(p)

    p = sub.add_parser("harmonics", help="Fourier magnitudes of a fringe")
    _add_common(p)
    p.add_argument("--grid", type=int, default=181, help="uniform points over [0, 180) degrees")
    p.add_argument("--pair", choices=sorted(_PAIRS), default="pp")

    p = sub.add_parser("rerun", help="regenerate an output file from its recorded configuration")
    p.add_argument("file")
    p.add_argument("--output", "-o", default="-")
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    """Validated, fully explicit configuration; this is what output headers record."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("output", "file")}
    if cfg.get("workers") is None:
        cfg["workers"] = default_workers()
    if cfg["command"] == "spdc-fringe" and cfg.get("gain") is None:
        raise ConfigError("spdc-fringe needs --gain")
    if cfg.get("n") is not None:
        SingletSpec(cfg["n"])
    if cfg.get("gain") is not None and not (math.isfinite(cfg["gain"]) and cfg["gain"] >= 0):
        raise ConfigError("--gain must be finite and >= 0")
    LossChannel(cfg["eta"])
    McConfig(cfg["shots"], cfg["seed"], cfg["workers"])
    _scheme(cfg)
    if "grid" in cfg and cfg["grid"] < 1:
        raise ConfigError("--grid must be positive")
    if cfg["command"] == "visibility":
        if (cfg["thresholds"] is None) == (cfg["etas"] is None):
            raise ConfigError("visibility needs exactly one of --thresholds or --etas")
        if cfg["thresholds"] is not None and cfg["scheme"] not in ("of", "td"):
            raise ConfigError("--thresholds needs --scheme of or td")
    cfg["version"] = __version__
    return cfg


def _scheme(cfg) -> MeasurementScheme:
    strict = cfg["strict_thresholds"]
    kind = cfg["scheme"]
    if kind == "of":
        return MeasurementScheme.orthogonality_filter(cfg["k"], strict)
    if kind == "td":
        return MeasurementScheme.threshold_detector(cfg["h"], strict)
    if kind == "parity":
        return MeasurementScheme.parity()
    return MeasurementScheme.dichotomic()


def _state(cfg):
    if cfg.get("gain") is not None:
        return spdc_weights(cfg["gain"], cfg["truncation"])
    return SingletSpec(cfg["n"])


def _mc(cfg):
    if cfg["method"] != "mc":
        return None
    return McConfig(cfg["shots"], cfg["seed"], cfg["workers"])


def _grid(cfg):
    if cfg.get("angles_deg"):
        return np.deg2rad(np.asarray(cfg["angles_deg"], dtype=float))
    return cfg["grid"]


def execute(cfg: dict[str, Any]) -> tuple[list[str], list[list[Any]]]:
    """Run a resolved configuration and return ``(columns, rows)``."""
    command = cfg["command"]
    state = _state(cfg)
    scheme = _scheme(cfg)
    channel = LossChannel(cfg["eta"])
    mc = _mc(cfg)

    if command in ("fringe", "spdc-fringe"):
        fr = fringe_sweep(state, scheme, channel, _grid(cfg), mc)
        labels = outcome_labels()
        columns = ["theta_rad"] + labels
        flat = fr.points.reshape(len(fr), 9)
        if fr.stderr is not None:
            columns += ["se_" + lab[2:] for lab in labels]
            flat = np.hstack([flat, fr.stderr.reshape(len(fr), 9)])
        rows = [[float(t)] + [float(v) for v in row] for t, row in zip(fr.theta_grid, flat)]
        return columns, rows

    if command == "chsh":
        res = maximize_chsh(state, scheme, channel, mc, restarts=cfg["restarts"], seed=cfg["seed"])
        st = res.settings
        columns = ["s_value", "a_rad", "a_prime_rad", "b_rad", "b_prime_rad",
                   "e_ab", "e_abp", "e_apb", "e_apbp", "pc_ab", "pc_abp", "pc_apb", "pc_apbp", "method"]
        row = [res.s_value, st.a, st.a_prime, st.b, st.b_prime,
               *res.correlations, *res.conclusive_probs, res.method]
        return columns, [row]

    if command == "visibility":
        pair = _PAIRS[cfg["pair"]]
        if cfg["etas"] is not None:
            curve = visibility_vs_eta(state, scheme, cfg["etas"], _grid(cfg), mc, pair)
        else:
            curve = visibility_curve(state, cfg["scheme"], cfg["thresholds"], channel, _grid(cfg), mc,
                                     pair, cfg["strict_thresholds"])
        columns = [curve.parameter, "visibility", "visibility_se", "success_probability", "success_se"]
        rows = [[v.item(), float(a), float(b), float(c), float(d)] for v, a, b, c, d in zip(
            curve.values, curve.visibility, curve.visibility_stderr,
            curve.success_probability, curve.success_stderr)]
        return columns, rows

    if command == "success":
        p, se = success_probability_with_error(state, scheme, channel, mc)
        return ["scheme", "success_probability", "success_se"], [[scheme.label(), p, se]]

    if command == "harmonics":
        fr = fringe_sweep(state, scheme, channel, cfg["grid"], mc)
        mags = harmonic_content(fr, _PAIRS[cfg["pair"]])
        return ["index", "magnitude"], [[j, float(m)] for j, m in enumerate(mags)]

    raise ConfigError(f"unknown command {command!r}")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(cfg: dict[str, Any], columns: list[str], rows: list[list[Any]]) -> str:
    if cfg["format"] == "json":
        doc = {"config": cfg, "columns": columns, "rows": rows}
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(CONFIG_PREFIX + json.dumps(cfg, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def read_config(path: str) -> dict[str, Any]:
    """Recover the configuration recorded in a CSV or JSON output file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        if text.startswith(CONFIG_PREFIX):
            cfg = json.loads(text.splitlines()[0][len(CONFIG_PREFIX):])
        else:
            cfg = json.loads(text)["config"]
    except (ValueError, KeyError, TypeError):
        raise ConfigError(f"{path} carries no readable configuration header") from None
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"{path}: unknown command in header")
    return cfg


def _write(text: str, output: str):
    if output == "-":
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "rerun":
        cfg = read_config(args.file)
        if cfg.get("version") != __version__:
            print(f"warning: file written by version {cfg.get('version')}, running {__version__}",
                  file=sys.stderr)
        cfg["version"] = __version__
    else:
        cfg = resolve_config(args)
    columns, rows = execute(cfg)
    _write(render(cfg, columns, rows), args.output)
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except FuzzyBellError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except MemoryError:
        print("E_SIZE_CAP: out of memory", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
