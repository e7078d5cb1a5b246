"""Command-line front end: model generation, file compression, benchmarks.

Compression writes a message blob plus a JSON manifest carrying everything
the receiver needs to rebuild the coder (coder id, particle count, coupling
spec, pad, dataset shape, model checksum).  ``bench`` reproduces the toy
experiments and exits nonzero if any round trip fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from . import harness
from .ans import AnsMessage, ans_init
from .harness import (ALL_CODERS, EXPERIMENTS, RunConfig, find_min_pad,
                      make_context, read_dataset, run_experiment, write_dataset)
from .models import (UniformPosterior, gen_hmm, gen_mixture, model_from_bytes,
                     sample_dataset)
from .plots import emit_plot


def _model_checksum(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def cmd_gen_model(args) -> int:
    if args.kind == "mixture":
        model = gen_mixture(args.seed, r=args.precision)
    else:
        model = gen_hmm(args.seed, r=args.precision)
    blob = model.to_bytes()
    with open(args.out, "wb") as fh:
        fh.write(blob)
    print(f"wrote {args.kind} model to {args.out} ({len(blob)} bytes)")
    if args.sample_n:
        if not args.data_out:
            print("--sample-n needs --data-out", file=sys.stderr)
            return 2
        dataset = sample_dataset(model, args.sample_n, args.seed)
        write_dataset(args.data_out, dataset, model.kind)
        print(f"wrote {args.sample_n} sampled symbols to {args.data_out}")
    return 0


def cmd_compress(args) -> int:
    with open(args.model, "rb") as fh:
        blob = fh.read()
    model = model_from_bytes(blob)
    dataset, kind = read_dataset(args.data)
    if kind != model.kind:
        print(f"dataset kind {kind} does not match model kind {model.kind}",
              file=sys.stderr)
        return 2
    posterior = UniformPosterior(model.k_z, model.r)
    ctx = make_context(args.coder, model, posterior, args.particles,
                       args.coupling, args.seed)
    symbols = [harness._as_symbol(s) for s in dataset]
    pad_seed = args.seed * 1009 + 11
    if args.pad is not None:
        pad = args.pad
    else:
        pad = find_min_pad(args.coder, ctx, symbols[:harness._PAD_SEARCH_PREFIX],
                           pad_seed)
    while True:
        msg = ans_init(pad_seed, pad)
        try:
            for sym in symbols:
                harness.encode_with(args.coder, msg, sym, ctx)
        except harness.AnsUnderflowError:
            if args.pad is not None:
                print("pad too small; rerun without --pad for auto sizing",
                      file=sys.stderr)
                return 1
            pad *= 2
            continue
        break

    with open(args.out, "wb") as fh:
        fh.write(msg.to_bytes())
    manifest = {
        "coder": args.coder,
        "particles": args.particles,
        "seed": args.seed,
        "coupling": args.coupling,
        "pad_words": pad,
        "pad_seed": pad_seed,
        "n": len(symbols),
        "kind": model.kind,
        "model_sha256": _model_checksum(blob),
    }
    with open(args.out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    bits = msg.bit_length
    dim = len(symbols) * (model.num_steps if model.kind == "hmm" else 1)
    print(f"encoded {len(symbols)} symbols: {bits} bits total "
          f"({bits / dim:.3f} bits/dim), pad {pad} words")
    return 0


def cmd_decompress(args) -> int:
    with open(args.model, "rb") as fh:
        blob = fh.read()
    model = model_from_bytes(blob)
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    if manifest["model_sha256"] != _model_checksum(blob):
        print("model checksum mismatch: decode would produce garbage",
              file=sys.stderr)
        return 1
    with open(args.msg, "rb") as fh:
        msg = AnsMessage.from_bytes(fh.read())
    posterior = UniformPosterior(model.k_z, model.r)
    ctx = make_context(manifest["coder"], model, posterior,
                       manifest["particles"], manifest["coupling"],
                       manifest["seed"])
    decoded = [harness.decode_with(manifest["coder"], msg, ctx)
               for _ in range(manifest["n"])]
    decoded.reverse()
    initial = ans_init(manifest["pad_seed"], manifest["pad_words"])
    if msg != initial:
        print("round-trip failure: initial message not restored", file=sys.stderr)
        return 1
    if model.kind == "mixture":
        dataset = np.array(decoded, dtype=np.int64)
    else:
        dataset = np.array([list(sym) for sym in decoded], dtype=np.int64)
    write_dataset(args.out, dataset, model.kind)
    print(f"decoded {len(decoded)} symbols to {args.out}")
    return 0


def cmd_bench(args) -> int:
    config = RunConfig(
        experiment=args.experiment,
        seed=args.seed,
        n=args.n,
        coders=tuple(args.coders.split(",")) if args.coders else None,
        n_sweep=tuple(int(v) for v in args.n_sweep.split(",")) if args.n_sweep else None,
        precision=args.precision,
        coupling_mode=args.coupling,
        redraws=args.redraws,
        jobs=args.jobs,
        out=args.out,
    )
    try:
        reports = run_experiment(config)
    except harness.RoundTripError as exc:
        print(f"round-trip failure: {exc}", file=sys.stderr)
        return 1
    for rep in reports:
        ideal = "-" if rep.ideal_bps is None else f"{rep.ideal_bps:8.4f}"
        print(f"{rep.coder:12s} N={rep.n_particles:<5d} net={rep.net_bps:8.4f} "
              f"total={rep.total_bps:8.4f} first={rep.total_first:10.1f} "
              f"ideal={ideal} entropy={rep.entropy:8.4f} pad={rep.pad_words}")
    if args.out:
        print(f"wrote {args.out}")
        if args.plot:
            emit_plot(args.out, args.plot, y_field=args.plot_y)
            print(f"wrote {args.plot}")
    return 0


def cmd_plot(args) -> int:
    emit_plot(args.csv, args.out, y_field=args.y, title=args.title)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitsback",
        description="Bits-back coders over streaming rANS: toy models and benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model", help="generate a seeded toy model (and data)")
    p.add_argument("--kind", choices=("mixture", "hmm"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", type=int, default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--sample-n", type=int, default=0,
                   help="also sample this many symbols")
    p.add_argument("--data-out", help="where to write the sampled dataset")
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("compress", help="encode a dataset file against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--coder", choices=ALL_CODERS, default="is")
    p.add_argument("--particles", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coupling", default="iid_shifts")
    p.add_argument("--pad", type=int, default=None,
                   help="pad words (default: minimal, found automatically)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="decode a message produced by compress")
    p.add_argument("--model", required=True)
    p.add_argument("--msg", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    p.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--coders", help="comma-separated coder ids")
    p.add_argument("--n-sweep", help="comma-separated particle counts")
    p.add_argument("--precision", type=int, default=16)
    p.add_argument("--coupling", default="iid_shifts")
    p.add_argument("--redraws", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--plot", help="SVG output path (requires --out)")
    p.add_argument("--plot-y", default="net_bps")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render a benchmark CSV to SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--y", default="net_bps")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
