"""Command-line interface.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.
Log verbosity comes from ``DYNODE_LOG`` (quiet, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io, synthetic
from .editing import EditDirection, compare_interp, propagate_edit
from .ode_core import IntegrationError, SolverConfig
from .toy_decoder import InversionError, InvertConfig, ToyDecoder, invert
from .training import LossWeights, TrainConfig, TrainingError, fit
from .trajectory import LatentSequence, evaluate, format_report, interpolate, predict

log = logging.getLogger("dynode")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _write_json(doc, out: Optional[str]) -> None:
    text = json.dumps(doc, indent=1) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _decoder(args, dim: int) -> Optional[ToyDecoder]:
    if args.decoder == "none":
        return None
    return ToyDecoder(args.decoder, args.decoder_seed, dim)


def _load_model(args):
    m = io.load_model(args.model)
    return replace(m, solver=SolverConfig(rtol=args.rtol, atol=args.atol))


def _states_doc(times, states, meta) -> dict:
    states = np.asarray(states)
    return {
        "version": io.SEQUENCE_VERSION,
        "dim": int(states.shape[1]),
        "times": [float(t) for t in times],
        "codes": [[float(x) for x in row] for row in states],
        "heldout": [],
        "meta": meta,
    }


# -- subcommands -------------------------------------------------------------


def cmd_gen(args) -> None:
    params = {}
    for item in args.param:
        key, _, value = item.partition("=")
        if not _:
            raise ValueError(f"--param expects key=value, got {item!r}")
        params[key] = json.loads(value)
    intrinsic = args.dim if args.system == "linear_random" and args.intrinsic is None else (args.intrinsic or 2)
    spec = synthetic.SystemSpec(
        args.system, embed_dim=args.dim, intrinsic_dim=intrinsic, params=params,
        noise=args.noise, seed=args.seed, embed_seed=args.seed,
    )
    rng = np.random.default_rng(args.seed)
    if args.sampling == "regular":
        times = np.arange(args.frames) / (args.frames - 1)
    else:
        times = synthetic.irregular_times(args.frames, rng)
    mask = np.zeros(args.frames, dtype=bool)
    if args.heldout:
        held = np.asarray(args.heldout)
        if np.any((held <= 0) | (held >= args.frames)):
            raise ValueError(f"--heldout indices must lie in [1, {args.frames - 1}]")
        mask[held] = True
    elif args.heldout_frac:
        mask = synthetic.sample(spec, args.frames, "regular", args.heldout_frac, np.random.default_rng(args.seed)).heldout
    seq = synthetic.sample_at(spec, times, mask, rng)
    meta = {"generator": "synthetic", "system": spec.to_dict(), "sampling": args.sampling, "seed": args.seed}
    io.save_sequence(seq, args.out, meta)
    Path(args.out + ".system.json").write_text(json.dumps(spec.to_dict(), indent=1) + "\n")


def cmd_render(args) -> None:
    seq, _ = io.load_sequence_with_meta(args.input)
    dec = ToyDecoder(args.decoder, args.decoder_seed, seq.dim)
    images = np.stack([dec.decode(z) for z in seq.codes])
    extra = {
        "heldout": [int(i) for i in seq.heldout_indices],
        "decoder": {"kind": dec.kind, "seed": dec.seed, "dim": dec.dim},
    }
    io.save_images(images, args.out, seq.times, extra)
    if args.ppm_dir:
        Path(args.ppm_dir).mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(images):
            lo, hi = (-1.0, 1.0) if dec.kind == "mlp" else (float(images.min()), float(images.max()))
            io.write_ppm(img, Path(args.ppm_dir) / f"frame_{i:04d}.ppm", lo, hi)


def cmd_invert(args) -> None:
    images, side = io.load_images(args.input)
    if "times" not in side:
        raise ValueError("image sidecar lacks frame times")
    dim = args.dim or side.get("decoder", {}).get("dim")
    if not dim:
        raise ValueError("latent dim unknown; pass --dim")
    dec = ToyDecoder(args.decoder, args.decoder_seed, int(dim), shape=images.shape[1:])
    cfg = InvertConfig(steps=args.steps, lr=args.lr, seed=args.seed)
    codes = np.stack([invert(dec, x, replace(cfg, seed=args.seed + i)) for i, x in enumerate(images)])
    mask = np.zeros(len(codes), dtype=bool)
    mask[side.get("heldout", [])] = True
    seq = LatentSequence(np.asarray(side["times"]), codes, mask)
    io.save_sequence(seq, args.out, {"generator": "invert", "decoder": args.decoder, "seed": args.seed})


def cmd_fit(args) -> None:
    seq = io.load_sequence(args.input)
    cfg = TrainConfig(
        steps=args.steps, lr=args.lr, window_len=args.window, substeps=args.substeps,
        train_solver=args.train_solver, seed=args.seed, hidden=tuple(args.hidden),
        time_input=not args.autonomous, clip_norm=None if args.no_clip else args.clip,
        weights=LossWeights(args.w_latent, args.w_feature, args.w_image), anchor=args.anchor,
    )
    m = fit(seq, _decoder(args, seq.dim), cfg)
    io.save_model(m, args.out)
    if args.loss_csv:
        with open(args.loss_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "total", "latent", "feature", "image"])
            for i, row in enumerate(m.loss_history):
                w.writerow([i + 1, *(repr(float(x)) for x in row)])


def cmd_predict(args) -> None:
    m = _load_model(args)
    if args.times is not None:
        times = np.asarray(args.times)
    elif args.input:
        times = io.load_sequence(args.input).times
    else:
        raise ValueError("pass --times or --input")
    states = predict(m, times)
    _write_json(_states_doc(times, states, {"extrapolated": m.extrapolates(times)}), args.out)


def cmd_interpolate(args) -> None:
    m = _load_model(args)
    times, states = interpolate(m, args.k)
    _write_json(_states_doc(times, states, {"k": args.k}), args.out)


def cmd_edit(args) -> None:
    m = _load_model(args)
    if args.direction_file:
        direction = np.asarray(json.loads(Path(args.direction_file).read_text()), dtype=np.float64)
    elif args.direction:
        direction = np.asarray(args.direction)
    else:
        raise ValueError("pass --direction or --direction-file")
    e = EditDirection(direction, args.scale, args.label)
    if args.times is not None:
        times = np.asarray(args.times)
    else:
        times = interpolate(m, args.k)[0]
    states = propagate_edit(m, e, times)
    meta = {"edit": {"label": args.label, "scale": args.scale, "direction": [float(x) for x in e.direction]}}
    _write_json(_states_doc(times, states, meta), args.out)


def cmd_compare(args) -> None:
    m = _load_model(args)
    seq = io.load_sequence(args.input)
    report = compare_interp(m, seq, args.times)
    _write_json(report, args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "ode_err", "morph_err"])
            for row in zip(report["times"], report["ode_err"], report["morph_err"]):
                w.writerow([repr(x) for x in row])


def cmd_eval(args) -> None:
    m = _load_model(args)
    seq = io.load_sequence(args.input)
    report = evaluate(m, seq, _decoder(args, seq.dim))
    _write_json(report, args.out)
    if args.out:
        sys.stdout.write(json.dumps(report, indent=1) + "\n")
    sys.stdout.write(format_report(report) + "\n")


# -- parser ------------------------------------------------------------------


def _add_decoder(p, default="mlp", allow_none=True):
    choices = ["none", "linear", "mlp"] if allow_none else ["linear", "mlp"]
    p.add_argument("--decoder", choices=choices, default=default)
    p.add_argument("--decoder-seed", type=int, default=0)


def _add_solver(p):
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-9)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynode", description="Latent trajectory modelling with neural ODEs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic latent sequence")
    p.add_argument("--system", choices=synthetic.KINDS, default="spiral")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--intrinsic", type=int, default=None, help="intrinsic dim (linear_random only)")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--sampling", choices=["regular", "irregular"], default="regular")
    p.add_argument("--heldout", type=_ints, default=None, help="held-out frame indices, e.g. 4,8,12")
    p.add_argument("--heldout-frac", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--param", action="append", default=[], help="system parameter key=json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("render", help="decode a sequence to images")
    p.add_argument("--input", required=True)
    _add_decoder(p, allow_none=False)
    p.add_argument("--out", required=True)
    p.add_argument("--ppm-dir", default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("invert", help="invert rendered frames back to latents")
    p.add_argument("--input", required=True)
    _add_decoder(p, allow_none=False)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("fit", help="train the dynamics network")
    p.add_argument("--input", required=True)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--window", type=int, default=None, help="frames per step (default: all observed)")
    p.add_argument("--substeps", type=int, default=8)
    p.add_argument("--train-solver", choices=["rk4", "euler"], default="rk4")
    p.add_argument("--hidden", type=_ints, default=[64, 64, 64])
    p.add_argument("--autonomous", action="store_true")
    p.add_argument("--anchor", choices=["first", "random"], default="first")
    p.add_argument("--clip", type=float, default=10.0)
    p.add_argument("--no-clip", action="store_true")
    p.add_argument("--w-latent", type=float, default=1.0)
    p.add_argument("--w-feature", type=float, default=0.1)
    p.add_argument("--w-image", type=float, default=0.1)
    _add_decoder(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-csv", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="states at given times")
    p.add_argument("--model", required=True)
    p.add_argument("--times", type=_floats, default=None)
    p.add_argument("--input", default=None, help="take times from a sequence file")
    _add_solver(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("interpolate", help="k-division interpolation over the fitted span")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, required=True)
    _add_solver(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("edit", help="edit the first frame and propagate")
    p.add_argument("--model", required=True)
    p.add_argument("--direction", type=_floats, default=None)
    p.add_argument("--direction-file", default=None)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--label", default="")
    p.add_argument("--times", type=_floats, default=None)
    p.add_argument("--k", type=int, default=10)
    _add_solver(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("compare", help="ODE vs. morphing at held-out frames")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--times", type=_floats, default=None)
    _add_solver(p)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="observed/held-out reconstruction metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    _add_decoder(p)
    _add_solver(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("DYNODE_LOG", "info").lower()
    logging.basicConfig(level=level.get(name, logging.INFO), format="%(name)s: %(message)s", stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (IntegrationError, TrainingError, InversionError, FloatingPointError) as exc:
        print(f"dynode: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"dynode: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
