"""Command-line interface: encode, decode, sweep, info, synth."""

import argparse
import sys

import numpy as np

from . import codec, metrics, signalio
from .codec import CodecConfig, MODE_ADAPTIVE, MODE_FIXED
from .errors import DataError, StreamError, UsageError
from .topology import CodingTree

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_STREAM = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--delta", type=int, default=0, help="max per-sample error (0 = lossless)")
    p.add_argument("--mode", choices=[MODE_FIXED, MODE_ADAPTIVE], default=MODE_ADAPTIVE)
    p.add_argument("--root", type=int, default=0, help="root channel of the coding tree")
    p.add_argument("--bits", type=int, default=None, help="override inferred bit depth")


def _build_parser():
    top = _Parser(prog="mbsc", description="Multi-channel biosignal codec")
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("encode", help="compress a signal file")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--sidecar", help="JSON sidecar for raw input")
    p.add_argument("--layout", help="sensor layout CSV (fixed mode)")
    p.add_argument("--tree", help="explicit parents, e.g. '-,0,1' (fixed mode)")
    p.add_argument("--emit-debug-tree", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("decode", help="decompress a stream")
    p.add_argument("input")
    p.add_argument("--out", required=True, help=".csv or .raw output")
    p.add_argument("--sidecar", help="sidecar path to write for raw output")

    p = sub.add_parser("sweep", help="rate-distortion sweep, CSV on stdout")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--sidecar")
    p.add_argument("--layout")
    p.add_argument("--tree")
    p.add_argument("--deltas", default="0..10", help="'0..10' or '0,5,10'")
    p.add_argument("--scale", type=float, default=None, help="microvolts per count")
    p.add_argument("--per-channel", action="store_true")

    p = sub.add_parser("info", help="print header fields of a stream")
    p.add_argument("input")

    p = sub.add_parser("synth", help="generate a synthetic test signal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--bits", type=int, default=16)
    p.add_argument("--coupling", choices=["chain", "star"], default="chain")
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    return top


def _load_signal(args):
    path = args.input
    if path.endswith(".csv"):
        return signalio.load_csv(path, bits=args.bits)
    if getattr(args, "sidecar", None) is None:
        raise UsageError("raw input requires --sidecar")
    sig = signalio.load_raw(path, args.sidecar)
    if args.bits is not None:
        sig = signalio.SignalMatrix(data=sig.data, bits=args.bits, rate=sig.rate)
    return sig


def _parse_tree(spec: str, m: int, root: int) -> CodingTree:
    fields = [f.strip() for f in spec.split(",")]
    if len(fields) != m:
        raise UsageError(f"--tree lists {len(fields)} parents, signal has {m} channels")
    try:
        parents = [-1 if f in ("-", "r", "") else int(f) for f in fields]
    except ValueError as exc:
        raise UsageError(f"bad --tree entry: {exc}") from exc
    if parents[root] != -1:
        raise UsageError(f"--tree must mark the root channel {root} with '-' or 'r'")
    try:
        return CodingTree.from_parents(parents, root)
    except ValueError as exc:
        raise UsageError(f"bad --tree: {exc}") from exc


def _parse_deltas(spec: str):
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(f) for f in spec.split(",")]


def _config(args) -> CodecConfig:
    return CodecConfig(delta=args.delta, mode=args.mode, root=args.root)


def _cmd_encode(args) -> int:
    sig = _load_signal(args)
    cfg = _config(args)
    tree = None
    layout = None
    if args.tree:
        tree = _parse_tree(args.tree, sig.m, args.root)
    elif args.layout:
        layout = signalio.load_layout(args.layout)
    if cfg.mode == MODE_FIXED and sig.m > 1 and tree is None and layout is None:
        raise UsageError("fixed mode requires --layout or --tree")
    res = codec.encode_stream(sig, cfg, tree=tree, layout=layout,
                              emit_debug_tree=args.emit_debug_tree)
    with open(args.out, "wb") as fh:
        fh.write(res.data)
    n_scalar = max(1, sig.m * sig.n_samples)
    print(f"{args.out}: {len(res.data)} bytes, "
          f"{8 * len(res.data) / n_scalar:.3f} bps", file=sys.stderr)
    return EXIT_OK


def _cmd_decode(args) -> int:
    blob = open(args.input, "rb").read()
    sig = codec.decode_stream(blob)
    if args.out.endswith(".csv"):
        signalio.store_csv(args.out, sig)
    else:
        signalio.store_raw(args.out, sig, sidecar_path=args.sidecar)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    sig = _load_signal(args)
    cfg = _config(args)
    tree = _parse_tree(args.tree, sig.m, args.root) if args.tree else None
    layout = signalio.load_layout(args.layout) if args.layout else None
    if cfg.mode == MODE_FIXED and sig.m > 1 and tree is None and layout is None:
        raise UsageError("fixed mode requires --layout or --tree")
    deltas = _parse_deltas(args.deltas)
    if args.per_channel:
        print("channel," + metrics.CSV_HEADER)
        for d in deltas:
            cfg_d = CodecConfig(delta=d, mode=cfg.mode, root=cfg.root)
            rep = metrics.evaluate_once(sig, cfg_d, tree=tree, layout=layout,
                                        scale=args.scale)
            print("all," + rep.csv_row())
            enc = codec.encode_stream(sig, cfg_d, tree=tree, layout=layout)
            recon = codec.decode_stream(enc.data)
            rows = metrics.per_channel_distortion(sig.data, recon.data, args.scale)
            for ch, (mae, mae_uv, snr, mstar) in enumerate(rows):
                r = metrics.EvalReport(delta=d, cr_bps=rep.cr_bps, mae=mae,
                                       mae_uv=mae_uv, snr_db=snr, mstarae=mstar,
                                       n_s=rep.n_s, enc_us=rep.enc_us,
                                       dec_us=rep.dec_us)
                print(f"{ch}," + r.csv_row())
    else:
        reports = metrics.rd_sweep(sig, cfg, deltas, tree=tree, layout=layout,
                                   scale=args.scale)
        sys.stdout.write(metrics.sweep_csv(reports))
    return EXIT_OK


def _cmd_info(args) -> int:
    with open(args.input, "rb") as fh:
        head = fh.read(4096)  # header only; payload is never touched
    hdr, _ = codec.parse_header(head)
    print(f"mode: {hdr.mode}")
    print(f"channels: {hdr.m}")
    print(f"bits: {hdr.bits}")
    print(f"delta: {hdr.delta}")
    print(f"samples: {hdr.n_samples}")
    print(f"root: {hdr.root}")
    print(f"max_order: {hdr.P}")
    print(f"lambda: {hdr.lam}")
    print(f"tau: {hdr.tau}")
    if hdr.parents is not None:
        print(f"tree_parents: {list(hdr.parents)}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    sig = signalio.synth_mvar(args.seed, args.channels, args.samples,
                              bits=args.bits, coupling=args.coupling,
                              noise_scale=args.noise_scale)
    if args.out.endswith(".csv"):
        signalio.store_csv(args.out, sig)
    else:
        signalio.store_raw(args.out, sig, sidecar_path=args.out + ".json")
    return EXIT_OK


_COMMANDS = {
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "sweep": _cmd_sweep,
    "info": _cmd_info,
    "synth": _cmd_synth,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StreamError as exc:
        print(f"stream error: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
