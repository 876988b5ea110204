"""Command-line entry points: analyze, train, generate, serve, listen."""

from __future__ import annotations

import argparse
import asyncio
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import features, segmentation
from .corpus import load_wav, render_wav, scan_corpus
from .engine import Engine
from .errors import CorpusAgentError
from .model import load_model, save_model
from .mosaic import FeatureWeights
from .segmentation import SegmentationConfig
from .service import EngineHost, serve
from .synth import PlaybackParams


def _load_config_file(path: str) -> dict:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ImportError:
            try:
                import tomli as tomllib  # type: ignore[no-redef]
            except ImportError as exc:
                raise CorpusAgentError(
                    "TOML config requires Python 3.11+ (tomllib); use JSON instead"
                ) from exc
        return tomllib.loads(text)
    return json.loads(text)


def _segmentation_config(args, file_config: dict) -> SegmentationConfig:
    seg = dict(file_config.get("segmentation", {}))
    if getattr(args, "flux_multiplier", None) is not None:
        seg["flux_multiplier"] = args.flux_multiplier
    if getattr(args, "min_segment", None) is not None:
        seg["min_segment_seconds"] = args.min_segment
    if getattr(args, "max_segment", None) is not None:
        seg["max_segment_seconds"] = args.max_segment
    return SegmentationConfig(**seg)


def _add_segmentation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--flux-multiplier", type=float, default=None,
                        help="onset threshold multiplier over the local median flux")
    parser.add_argument("--min-segment", type=float, default=None, metavar="S",
                        help="minimum segment length in seconds")
    parser.add_argument("--max-segment", type=float, default=None, metavar="S",
                        help="maximum segment length in seconds (longer spans are split evenly)")


def cmd_analyze(args) -> int:
    file_config = _load_config_file(args.config) if args.config else {}
    seg_config = _segmentation_config(args, file_config)
    manifest = scan_corpus(args.corpus)

    if args.segments:
        boundaries = {}
        offset = 0
        for idx, entry in enumerate(manifest.entries):
            buf = load_wav(entry.path, expect_rate=features.SAMPLE_RATE, resample=args.resample)
            segs = segmentation.segment(buf, seg_config, source_index=idx, id_offset=offset)
            offset += len(segs)
            boundaries[entry.path] = [
                {"id": s.id, "start_seconds": s.start_seconds, "duration_seconds": s.duration_seconds}
                for s in segs
            ]
        json.dump(boundaries, sys.stdout, indent=1, sort_keys=True)
        print()
        return 0

    writer = csv.writer(sys.stdout if args.out is None else open(args.out, "w", newline=""))
    header = ["segment_id", "start_s", "dur_s"] + [f"v{i}" for i in range(features.VECTOR31_LEN)]
    header += ["valence", "arousal"]
    writer.writerow(header)
    offset = 0
    for idx, entry in enumerate(manifest.entries):
        buf = load_wav(entry.path, expect_rate=features.SAMPLE_RATE, resample=args.resample)
        segs = segmentation.segment(buf, seg_config, source_index=idx, id_offset=offset)
        offset += len(segs)
        for seg, rows in zip(segs, agent_mod._segment_feature_rows(buf, segs)):
            stats = features.stats_from_rows(rows)
            vec = features.segment_vector(stats)
            writer.writerow(
                [seg.id, f"{seg.start_seconds:.6f}", f"{seg.duration_seconds:.6f}"]
                + [repr(float(v)) for v in vec]
                + [repr(stats.valence), repr(stats.arousal)]
            )
    return 0


def cmd_train(args) -> int:
    file_config = _load_config_file(args.config) if args.config else {}
    config = agent_mod.TrainConfig(
        som_dims=tuple(args.som_dims) if args.som_dims else file_config.get("som_dims"),
        epochs=args.epochs if args.epochs is not None else file_config.get("epochs"),
        seed=args.seed,
        segmentation=_segmentation_config(args, file_config),
        resample=args.resample,
    )
    model = agent_mod.train_pipeline(args.corpus, config)
    save_model(model, args.out)
    print(f"numData: {model.num_segments}")
    print(f"SOM dims: {model.som.rows} x {model.som.cols}")
    print(f"nodes: {model.som.n_nodes}")
    print(f"model saved to {args.out}")
    return 0


def _playback_params(args) -> PlaybackParams:
    return PlaybackParams(
        tempo=args.tempo,
        p_forward=args.congruence,
        attack_ms=args.attack,
        release_ms=args.release,
        reverse=args.reverse,
        resample_ratio=args.resample_ratio,
        pitch_shift_cents=args.pitch_cents,
        one_shot=args.one_shot,
        tempo_lock=args.tempo_lock,
    )


def _add_playback_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tempo", type=float, default=120.0, help="node trigger rate in BPM")
    parser.add_argument("--congruence", type=float, default=0.5,
                        help="forward-transition probability of the oracle walk, 0..1")
    parser.add_argument("--attack", type=float, default=10.0, metavar="MS")
    parser.add_argument("--release", type=float, default=10.0, metavar="MS")
    parser.add_argument("--reverse", action="store_true")
    parser.add_argument("--resample", dest="resample_ratio", type=float, default=1.0,
                        metavar="RATIO", help="playback speed/pitch ratio")
    parser.add_argument("--pitch-cents", type=float, default=0.0,
                        help="independent pitch shift (1200 = one octave)")
    parser.add_argument("--one-shot", action="store_true",
                        help="a new trigger truncates the previous segment")
    parser.add_argument("--tempo-lock", action="store_true",
                        help="keep the trigger interval fixed under resampling")


def cmd_generate(args) -> int:
    model = load_model(args.model)
    engine = Engine(
        model,
        mode=args.mode,
        params=_playback_params(args),
        seed=args.seed,
    )
    audio = engine.run_seconds(args.duration)
    render_wav(audio, args.out)
    for line in engine.render_log:
        print(line, file=sys.stderr)
    if args.trace:
        trace = []
        for node_event, playback in zip(engine.node_trace, engine.playback_trace):
            record = node_event.as_dict()
            record["onset_seconds"] = playback.onset_seconds
            record["rendered_seconds"] = playback.rendered_seconds
            record["params"] = dataclasses.asdict(playback.params)
            trace.append(record)
        Path(args.trace).write_text(json.dumps(trace, indent=1, sort_keys=True) + "\n",
                                    encoding="utf-8")
    print(f"wrote {audio.duration_seconds:.2f} s to {args.out} ({len(engine.node_trace)} events)")
    return 0


def cmd_serve(args) -> int:
    host = EngineHost(clock=args.clock, seed=args.seed, mode=args.mode,
                      run_limit_seconds=args.duration)
    if args.model:
        host.engine = Engine(load_model(args.model), mode=args.mode, seed=args.seed,
                             running=False)

    async def run():
        server = await serve(host, port=args.port, bind=args.bind)
        print(f"listening on {args.bind}:{args.port} (clock: {args.clock})")
        async with server:
            await server.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    finally:
        host.stop_loop()
    return 0


def cmd_listen(args) -> int:
    model = load_model(args.model)
    live = load_wav(args.input, expect_rate=features.SAMPLE_RATE, resample=True)
    weights = FeatureWeights.preset(args.weights_preset) if args.weights_preset \
        else FeatureWeights.uniform()
    engine = Engine(
        model,
        mode="reactive",
        params=_playback_params(args),
        weights=weights,
        trigger_mode=args.trigger_mode,
        seed=args.seed,
        live_input=live,
    )
    duration = args.duration or live.duration_seconds
    audio = engine.run_seconds(duration)
    if args.out:
        render_wav(audio, args.out)
    for event in engine.node_trace:
        print(json.dumps(event.as_dict(), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corpus-agent",
        description="Corpus-based concatenative synthesis agent: train on a folder of "
                    "wav files, then improvise from it live or offline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-segment descriptor CSV (or boundary JSON)")
    p.add_argument("corpus", help="corpus folder")
    p.add_argument("--segments", action="store_true", help="dump segment boundaries as JSON")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.add_argument("--config", default=None, help="JSON/TOML config file")
    p.add_argument("--resample", action="store_true", help="resample non-44.1kHz files")
    _add_segmentation_flags(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("train", help="train a model from a corpus folder")
    p.add_argument("corpus", help="corpus folder")
    p.add_argument("--out", required=True, help="model output folder")
    p.add_argument("--som-dims", type=int, nargs=2, metavar=("R", "C"), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON/TOML config file")
    p.add_argument("--resample", action="store_true", help="resample non-44.1kHz files")
    _add_segmentation_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="offline render of the improvisation loop")
    p.add_argument("--model", required=True)
    p.add_argument("--duration", type=float, required=True, metavar="S")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("macat", "proactive"), default="macat")
    p.add_argument("--out", required=True, metavar="FILE.wav")
    p.add_argument("--trace", default=None, metavar="FILE.json",
                   help="write the node event trace as JSON")
    _add_playback_flags(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("serve", help="run the control protocol server")
    p.add_argument("--model", default=None)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--clock", choices=("device", "offline"), default="device")
    p.add_argument("--duration", type=float, default=None,
                   help="stop the engine loop after this many engine seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("macat", "proactive", "reactive"), default="macat")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("listen", help="reactive mosaicing over a wav input")
    p.add_argument("--input", required=True, metavar="FILE.wav")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=("reactive",), default="reactive")
    p.add_argument("--trigger-mode", default="cont",
                   choices=("beat", "loop", "cont", "bow", "fence"))
    p.add_argument("--weights-preset", default=None,
                   help="one-hot weight preset (centroid, periodicity, f0, duration)")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, metavar="FILE.wav")
    _add_playback_flags(p)
    p.set_defaults(fn=cmd_listen)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CorpusAgentError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
