"""Command-line front end.

Exit codes: 0 success, 1 a check diverged, 2 bad configuration or input.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def _model_build_audio(args):
    from .model import read_audio_model, serialize_audio_model
    from .ogg import MalformedOgg
    try:
        model = read_audio_model(args.ogg)
    except (OSError, MalformedOgg) as exc:
        raise UsageError(f"{args.ogg}: {exc}") from None
    if args.output:
        with open(args.output, "wb") as fh:
            fh.write(serialize_audio_model(model))
    print(f"body_bytes: {model.total_len}")
    return EXIT_OK


def _model_build_web(args):
    from .model import load_web_model
    if not os.path.isdir(args.directory):
        raise UsageError(f"{args.directory}: not a directory")
    model = load_web_model(args.directory)
    manifest = {"root_digest": model.root_digest, "assets": model.manifest()}
    text = json.dumps(manifest, indent=2)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _keygen(args):
    from cryptography.hazmat.primitives import serialization
    from cryptography.hazmat.primitives.asymmetric import ec
    os.makedirs(args.out_dir, exist_ok=True)
    key = ec.generate_private_key(ec.SECP256R1())
    files = {
        "psk.hex": (secrets.token_hex(32) + "\n").encode(),
        "server-key.pem": key.private_bytes(serialization.Encoding.PEM,
                                            serialization.PrivateFormat.PKCS8,
                                            serialization.NoEncryption()),
        "pinned.pem": key.public_key().public_bytes(
            serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo),
    }
    for name, data in files.items():
        path = os.path.join(args.out_dir, name)
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        print(path)
    return EXIT_OK


def _run(args):
    from .shim import native
    from .shim.config import ConfigError, load_config
    command = args.command[1:] if args.command[:1] == ["--"] else args.command
    if not command:
        raise UsageError("no command given after --")
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    if config.role != args.role:
        raise UsageError(f"config role is {config.role!r}, not {args.role!r}")
    try:
        return native.run(args.config, command)
    except native.BuildError as exc:
        raise UsageError(f"cannot build the preload library: {exc}") from None
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _parse_schedule(text):
    from .harness.schedules import BOUNDARY, ONE_BYTE, RANDOM, WHOLE, ChunkSchedule
    policy, _, seed = text.partition(":")
    if policy not in (WHOLE, ONE_BYTE, BOUNDARY, RANDOM):
        raise UsageError(f"unknown schedule {text!r}")
    try:
        return ChunkSchedule(policy, int(seed) if seed else 0)
    except ValueError:
        raise UsageError(f"bad seed in {text!r}") from None


def _harness_pair(args):
    from .harness.corpus import corpus, scenario
    from .harness.pair import run_pair
    schedule = _parse_schedule(args.schedule)
    if args.scenario == "all":
        scenarios = corpus()
    else:
        try:
            scenarios = [scenario(args.scenario)]
        except KeyError:
            raise UsageError(f"unknown scenario {args.scenario!r}") from None
    status = EXIT_OK
    for sc in scenarios:
        report = run_pair(sc, schedule, measure=args.latency)
        print(report.to_json() if args.json else report.to_text() + "\n")
        if not report.ok:
            status = EXIT_DIVERGED
    return status


def _bench(args):
    from .harness.bench import bench_all
    results = bench_all(repeat=args.repeat)
    if args.json:
        print(json.dumps(results, sort_keys=True))
        return EXIT_OK
    for name, modes in results.items():
        for mode, s in modes.items():
            print(f"{name} {mode}: calls={s['calls']} mean_us={s['mean']:.1f} "
                  f"p99_us={s['p99']:.1f}")
    return EXIT_OK


def _covert(args):
    from .shim import covert_socket
    try:
        if args.action == "send":
            ok = covert_socket.send(args.socket, sys.stdin.buffer.read())
            return EXIT_OK if ok else EXIT_DIVERGED
        limit = args.limit
        out = sys.stdout.buffer
        data = covert_socket.receive(args.socket, limit=limit, timeout=args.timeout)
        out.write(data)
        out.flush()
        return EXIT_OK
    except FileNotFoundError:
        raise UsageError(f"{args.socket}: no covert endpoint") from None
    except ConnectionRefusedError:
        raise UsageError(f"{args.socket}: nobody listening") from None


def build_parser():
    p = argparse.ArgumentParser(prog="balboa")
    sub = p.add_subparsers(dest="cmd", required=True)

    model = sub.add_parser("model", help="build traffic models")
    msub = model.add_subparsers(dest="kind", required=True)
    a = msub.add_parser("build-audio", help="index an Ogg file")
    a.add_argument("ogg")
    a.add_argument("-o", "--output", help="write the normalized model here")
    a.set_defaults(func=_model_build_audio)
    w = msub.add_parser("build-web", help="index an asset directory")
    w.add_argument("directory")
    w.add_argument("-o", "--output", help="write the manifest here")
    w.set_defaults(func=_model_build_web)

    k = sub.add_parser("keygen", help="pre-shared key and server signing key")
    k.add_argument("--out-dir", default=".")
    k.set_defaults(func=_keygen)

    r = sub.add_parser("run", help="run a program under the shim")
    r.add_argument("--role", choices=("client", "server"), required=True)
    r.add_argument("--config", required=True)
    r.add_argument("command", nargs=argparse.REMAINDER)
    r.set_defaults(func=_run)

    h = sub.add_parser("harness", help="desk-scale checks")
    hsub = h.add_subparsers(dest="what", required=True)
    hp = hsub.add_parser("pair", help="run scenarios end to end")
    hp.add_argument("--scenario", default="all")
    hp.add_argument("--schedule", default="whole",
                    help="whole, one-byte, boundary or random:SEED")
    hp.add_argument("--json", action="store_true")
    hp.add_argument("--latency", action="store_true")
    hp.set_defaults(func=_harness_pair)

    b = sub.add_parser("bench", help="per-interception latency")
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=_bench)

    c = sub.add_parser("covert", help="feed or drain a running shim's covert queue")
    c.add_argument("action", choices=("send", "recv"))
    c.add_argument("--socket", required=True)
    c.add_argument("--limit", type=int)
    c.add_argument("--timeout", type=float, default=5.0)
    c.set_defaults(func=_covert)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"balboa: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
