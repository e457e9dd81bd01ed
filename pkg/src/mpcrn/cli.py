"""Command-line tool: enhance, train, gradcheck, ablate, bench.

Exit codes: 0 ok, 2 input error (bad audio/config/arguments), 3 numerical
failure (gradient check failure, non-finite training loss). The seed comes
from --seed, falling back to the MPCRN_SEED environment variable, then 0.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import SynthMixSpec, synth_batch
from .dsp import SAMPLE_RATE, StftConfig
from .errors import InvalidInput, MpcrnError, NumericalError, ParseError
from .metrics import si_sdr
from .model import ModelConfig, count_macs, count_params
from .pipeline import enhance_waveform, load_model, save_model
from .stream import StreamEngine, benchmark_rtf
from .trainer import TrainConfig, train, write_loss_curve
from .verification import gradcheck_suite
from .wavio import float_to_pcm16, pcm16_to_float, read_wav, write_wav

RECON_MODES = ("polar", "r", "c", "e")


def resolve_seed(value):
    if value is not None:
        return value
    env = os.environ.get("MPCRN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidInput(f"MPCRN_SEED must be an integer, got {env!r}") from None
    return 0


def parse_kv_file(path) -> dict:
    """Flat key=value config with # comments; errors carry line numbers."""
    kv = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise InvalidInput(f"cannot read config {path}: {e}") from None
    for lineno, raw in enumerate(lines, 1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = stripped.split("=", 1)
        kv[key.strip()] = val.strip()
    return kv


def _kv_get(kv, key, cast, default):
    if key not in kv:
        return default
    try:
        return cast(kv[key])
    except ValueError:
        raise ParseError(f"config key {key!r}: cannot parse {kv[key]!r}") from None


def _int_tuple(text):
    return tuple(int(v) for v in text.split(","))


def _float_tuple(text):
    return tuple(float(v) for v in text.split(","))


def configs_from_kv(kv, seed):
    enc = _kv_get(kv, "enc_channels", _int_tuple, (16, 32, 64, 128, 256))
    psm = _kv_get(kv, "psm_hidden", _int_tuple, (128, 64, 32))
    if "dec_channels" in kv:
        model_cfg = ModelConfig(enc_channels=enc,
                                dec_channels=_kv_get(kv, "dec_channels", _int_tuple, ()),
                                psm_hidden=psm)
    else:
        model_cfg = ModelConfig.with_encoder(enc, psm)
    train_cfg = TrainConfig(
        lr=_kv_get(kv, "lr", float, 2e-4),
        rmsprop_alpha=_kv_get(kv, "rmsprop_alpha", float, 0.99),
        rmsprop_eps=_kv_get(kv, "rmsprop_eps", float, 1e-8),
        batch_size=_kv_get(kv, "batch_size", int, 16),
        epochs=_kv_get(kv, "epochs", int, 100),
        steps_per_epoch=_kv_get(kv, "steps_per_epoch", int, 8),
        plateau_patience=_kv_get(kv, "plateau_patience", int, 6),
        lr_decay=_kv_get(kv, "lr_decay", float, 0.5),
        chunk_seconds=_kv_get(kv, "chunk_seconds", float, 3.0),
        seed=_kv_get(kv, "seed", int, seed),
        val_count=_kv_get(kv, "val_count", int, 8),
    )
    mix_spec = SynthMixSpec(
        snr_db=_kv_get(kv, "snr_db", _float_tuple, (0.0, 5.0, 10.0, 15.0)),
        duration=_kv_get(kv, "duration", float, 3.0),
        seed=train_cfg.seed,
        noise_kind=kv.get("noise_kind", "white"),
    )
    recon = kv.get("recon", "polar")
    if recon not in RECON_MODES:
        raise ParseError(f"config key 'recon': unknown mode {recon!r}")
    return model_cfg, train_cfg, mix_spec, recon


def _load_model_arg(args):
    if args.identity_masks:
        return None, StftConfig()
    if args.checkpoint is None:
        raise InvalidInput("either --checkpoint or --identity-masks is required")
    if not Path(args.checkpoint).exists():
        raise InvalidInput(f"checkpoint not found: {args.checkpoint}")
    return load_model(args.checkpoint)


def cmd_enhance(args) -> int:
    model, stft_cfg = _load_model_arg(args)
    if args.input == "-":
        return _enhance_pipe(model, stft_cfg, args)
    noisy = read_wav(args.input)
    if args.mode == "offline":
        enhanced = enhance_waveform(model, noisy, stft_cfg, args.recon)
    else:
        engine = StreamEngine(model, stft_cfg, args.recon)
        streamed = engine.process(noisy)
        enhanced = np.zeros_like(noisy)
        enhanced[: streamed.size] = streamed
    if args.output == "-":
        sys.stdout.buffer.write(float_to_pcm16(enhanced).tobytes())
    else:
        write_wav(args.output, enhanced)
    report = {"input": args.input, "output": args.output, "mode": args.mode,
              "recon": args.recon, "samples": int(noisy.size)}
    if args.reference:
        clean = read_wav(args.reference)
        if clean.size != noisy.size:
            raise InvalidInput("reference length differs from input length")
        report["si_sdr_noisy_db"] = si_sdr(noisy, clean)
        report["si_sdr_enhanced_db"] = si_sdr(enhanced, clean)
        report["si_sdr_improvement_db"] = (report["si_sdr_enhanced_db"]
                                           - report["si_sdr_noisy_db"])
    print(json.dumps(report))
    return 0


def _enhance_pipe(model, stft_cfg, args) -> int:
    """Raw PCM16 stdin -> enhanced raw PCM16 stdout, hop by hop."""
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    engine = StreamEngine(model, stft_cfg, args.recon)
    prime_bytes = 2 * (stft_cfg.win_len - stft_cfg.hop)
    head = stdin.read(prime_bytes)
    if len(head) < prime_bytes:
        raise InvalidInput("stdin stream shorter than one analysis window")
    engine.prime(pcm16_to_float(np.frombuffer(head, dtype="<i2")))
    hop_bytes = 2 * stft_cfg.hop
    while True:
        chunk = stdin.read(hop_bytes)
        if len(chunk) < hop_bytes:
            break
        out = engine.process_frame(pcm16_to_float(np.frombuffer(chunk, dtype="<i2")))
        stdout.write(float_to_pcm16(out).tobytes())
        stdout.flush()
    return 0


def cmd_train(args) -> int:
    kv = parse_kv_file(args.config)
    seed = resolve_seed(args.seed)
    model_cfg, train_cfg, mix_spec, recon = configs_from_kv(kv, seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(epoch, step, val_loss, lr):
        print(f"epoch {epoch + 1}/{train_cfg.epochs} step {step} "
              f"val_loss {val_loss:.6f} lr {lr:g}", file=sys.stderr)

    result = train(model_cfg, train_cfg, mix_spec, recon=recon, progress=progress)
    ckpt = out_dir / "checkpoint.mpcrn"
    save_model(ckpt, result.model)
    write_loss_curve(out_dir / "loss_curve.csv", result.curve)
    summary = {
        "steps": len(result.curve),
        "recon": recon,
        "params": result.model.num_params(),
        "final_train_loss": result.curve[-1][1] if result.curve else None,
        "final_val_loss": result.val_losses[-1] if result.val_losses else None,
        "checkpoint": str(ckpt),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck_suite(seed=resolve_seed(args.seed))
    failed = 0
    for r in results:
        line = {"layer": r["layer"], "case": r["case"],
                "rel_err": r["rel_err"], "passed": r["passed"]}
        print(json.dumps(line))
        failed += not r["passed"]
    print(json.dumps({"cases": len(results), "failed": failed}))
    if failed:
        raise NumericalError(f"{failed} gradient check(s) above tolerance")
    return 0


def cmd_ablate(args) -> int:
    """Toy-scale comparison of the four reconstruction modes.

    The cartesian-product modes "c" and "e" are the same reconstruction, so
    they share one trained model and differ only in the evaluation formula.
    """
    seed = resolve_seed(args.seed)
    model_cfg = ModelConfig.with_encoder((4, 8, 8, 8, 8), (8, 8, 8))
    train_cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                            epochs=args.epochs, steps_per_epoch=args.steps_per_epoch,
                            seed=seed, val_count=args.val_count)
    mix_spec = SynthMixSpec(snr_db=(0.0,), seed=seed)
    eval_batch = synth_batch(replace(mix_spec, count=train_cfg.val_count),
                             stream=10**9 + 1)
    clean_refs = [c for _, c in eval_batch]
    noisy_refs = [n for n, _ in eval_batch]
    base = float(np.mean([si_sdr(n, c) for n, c in zip(noisy_refs, clean_refs)]))

    trained = {}
    for train_mode in ("polar", "r", "c"):
        print(f"training {train_mode} variant...", file=sys.stderr)
        trained[train_mode] = train(model_cfg, train_cfg, mix_spec,
                                    recon=train_mode).model

    results = {"noisy_si_sdr_db": base, "modes": {}}
    for mode in RECON_MODES:
        model = trained["c"] if mode == "e" else trained[mode]
        scores = [
            si_sdr(enhance_waveform(model, n, recon=mode), c)
            for n, c in zip(noisy_refs, clean_refs)
        ]
        mean = float(np.mean(scores))
        results["modes"][mode] = {
            "si_sdr_db": mean,
            "si_sdr_improvement_db": mean - base,
        }
    print(json.dumps(results))
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2) + "\n")
    return 0


def cmd_bench(args) -> int:
    cfg = ModelConfig()
    report = {
        "params": count_params(cfg),
        "gmacs_per_s": count_macs(cfg) / 1e9,
    }
    print(json.dumps(report))
    for mode in ("stream", "offline"):
        r = benchmark_rtf(cfg, duration=args.duration, runs=args.runs,
                          mode=mode, seed=resolve_seed(args.seed))
        print(json.dumps(r))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpcrn",
                                description="Speech enhancement engine")
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("enhance", help="enhance a WAV file or a raw PCM16 pipe")
    pe.add_argument("input", help="input WAV path, or '-' for raw PCM16 stdin")
    pe.add_argument("output", help="output WAV path, or '-' for raw PCM16 stdout")
    pe.add_argument("--checkpoint", help="model checkpoint path")
    pe.add_argument("--identity-masks", action="store_true",
                    help="bypass the network with pass-through masks (test hook)")
    pe.add_argument("--mode", choices=("offline", "stream"), default="offline")
    pe.add_argument("--recon", choices=RECON_MODES, default="polar")
    pe.add_argument("--reference", help="clean reference WAV for SI-SDR reporting")
    pe.add_argument("--seed", type=int)
    pe.set_defaults(func=cmd_enhance)

    pt = sub.add_parser("train", help="train a model from a key=value config")
    pt.add_argument("config", help="flat key=value config file")
    pt.add_argument("--out", default="train_out", help="output directory")
    pt.add_argument("--seed", type=int)
    pt.set_defaults(func=cmd_train)

    pg = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    pg.add_argument("--seed", type=int)
    pg.set_defaults(func=cmd_gradcheck)

    pa = sub.add_parser("ablate", help="toy-scale reconstruction-mode comparison")
    pa.add_argument("--epochs", type=int, default=5)
    pa.add_argument("--steps-per-epoch", type=int, default=24)
    pa.add_argument("--batch-size", type=int, default=4)
    pa.add_argument("--val-count", type=int, default=6)
    pa.add_argument("--lr", type=float, default=5e-3)
    pa.add_argument("--out", help="write the JSON report here as well")
    pa.add_argument("--seed", type=int)
    pa.set_defaults(func=cmd_ablate)

    pb = sub.add_parser("bench", help="params, GMACs, and real-time factor")
    pb.add_argument("--duration", type=float, default=3.0)
    pb.add_argument("--runs", type=int, default=5)
    pb.add_argument("--seed", type=int)
    pb.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except MpcrnError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
