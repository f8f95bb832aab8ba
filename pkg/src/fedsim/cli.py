"""Command-line front door: partition, gen-data, run, centralized, inspect, client, compare.

Every config key can be overridden with a dotted flag, for example
``--federation.rounds 30 --partition.alpha 0.5``. Exit codes: 2 config,
3 data, 4 transport, 5 secure abort.
"""

from __future__ import annotations

import argparse
import logging
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .engine import centralized_train, run_federation, with_weight_bound
from .errors import ConfigError, DataError, FedsimError, TransportError
from .kernels import BACKEND
from .partition import jsd_matrix, load_partition, mean_off_diagonal, save_partition, write_jsd_csv
from .pipeline import build_partition, build_task, load_data, prepare
from .tasks import save_manifest
from .tasks.data import config_dict

log = logging.getLogger("fedsim")


def _setup_logging():
    level = os.environ.get("FEDSIM_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _split_overrides(extra):
    """``--a.b value`` / ``--a.b=value`` pairs from the unparsed argv tail."""
    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument {tok!r}", [(tok, "unrecognized argument")])
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {tok} needs a value", [(key, "missing value")])
            value = extra[i + 1]
            i += 2
        out.append((key, value))
    return out


def _resolve(args, extra, flag_overrides=()):
    if args.config:
        doc = cfgmod.load_text(_read(args.config))
    else:
        doc = {}
    if getattr(args, "root_seed", None) is not None:
        doc["root_seed"] = args.root_seed
    # without a file the root seed is 0, never the clock
    doc.setdefault("root_seed", 0)
    for key, value in list(flag_overrides) + _split_overrides(extra):
        if value is not None:
            cfgmod.apply_override(doc, key, value)
    return cfgmod.validate(doc)


def _read(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", [("<file>", str(exc))]) from None


def _jsd_path(out: Path) -> Path:
    name = out.name[:-5] if out.name.endswith(".json") else out.name
    return out.with_name(name + ".jsd.csv")


# subcommands


def cmd_partition(args, extra):
    cfg = _resolve(args, extra, [
        ("partition.strategy", args.strategy), ("partition.alpha", args.alpha),
        ("partition.beta", args.beta), ("partition.n_clients", args.n_clients),
        ("partition.n_clusters", args.n_clusters), ("partition.seed", args.seed),
        ("data.path", args.data), ("data.task", args.task),
    ])
    train, _ = load_data(cfg)
    task = build_task(cfg, train)
    result = build_partition(cfg, train, task)
    out = Path(args.out)
    save_partition(result, out)
    write_jsd_csv(jsd_matrix(result), _jsd_path(out))
    print(f"wrote {out} and {_jsd_path(out)} ({result.n_clients} clients, {result.n_examples} examples)")
    return 0


def cmd_gen_data(args, extra):
    cfg = _resolve(args, extra, [("data.task", args.task), (f"data.{args.task or 'tc'}.seed", args.seed)])
    if cfg.data.path:
        raise ConfigError("gen-data generates data; unset data.path", [("data.path", "must be unset")])
    train, test = load_data(cfg)
    save_manifest(args.out, train, test, generator={"task": cfg.data.task, **config_dict(cfg.generator_config())})
    print(f"wrote {args.out} ({len(train)} train, {len(test)} test)")
    return 0


def _header(cfg):
    return {"config": cfgmod.to_dict(cfg)}


def cmd_run(args, extra):
    cfg = _resolve(args, extra, [("log_path", args.log)])
    prep = prepare(cfg)
    rc = with_weight_bound(cfg.round_config(), prep.partition.assignments)
    timestamps = not args.no_timestamps
    if args.distributed:
        model, records = _run_distributed(args, cfg, prep, rc, timestamps)
    else:
        model, records = run_federation(prep.train, prep.partition, rc, prep.task, test=prep.test,
                                        log_path=cfg.log_path, timestamps=timestamps, header=_header(cfg))
    _summary(records)
    if args.save_model:
        from .core import save

        save(model, args.save_model)
    return 0


def _run_distributed(args, cfg, prep, rc, timestamps):
    from .transport.tcp import run_server

    procs = []
    with tempfile.TemporaryDirectory() as tmp:
        resolved = Path(tmp) / "resolved.yaml"
        resolved.write_text(cfgmod.serialize(cfg), encoding="utf-8")

        def spawn(address):
            if args.no_spawn:
                print(f"listening on {address[0]}:{address[1]}", flush=True)
                return
            target = f"{address[0]}:{address[1]}"
            for cid in range(prep.partition.n_clients):
                procs.append(subprocess.Popen([
                    sys.executable, "-m", "fedsim", "client", "--config", str(resolved),
                    "--connect", target, "--client-id", str(cid),
                ]))

        try:
            model, records = run_server(args.bind, rc, prep.task, prep.partition, test=prep.test,
                                        log_path=cfg.log_path, timestamps=timestamps,
                                        header=_header(cfg), on_ready=spawn)
        finally:
            codes = []
            for p in procs:
                try:
                    codes.append(p.wait(timeout=30))
                except subprocess.TimeoutExpired:
                    p.kill()
                    codes.append(p.wait())
    bad = [c for c in codes if c != 0]
    if bad:
        raise TransportError(f"{len(bad)} client process(es) exited with errors: {sorted(set(bad))}")
    return model, records


def cmd_client(args, extra):
    from .transport.tcp import run_client

    cfg = _resolve(args, extra)
    prep = prepare(cfg)
    rc = with_weight_bound(cfg.round_config(), prep.partition.assignments)
    if not 0 <= args.client_id < prep.partition.n_clients:
        raise ConfigError(f"client id {args.client_id} out of range", [("--client-id", "out of range")])
    return run_client(args.connect, args.client_id, prep.client_data(args.client_id), rc, prep.task)


def cmd_centralized(args, extra):
    cfg = _resolve(args, extra, [("log_path", args.log)])
    train_raw, test_raw = load_data(cfg)
    task = build_task(cfg, train_raw)
    train = task.featurize(train_raw)
    test = task.featurize(test_raw) if len(test_raw) else None
    _, records = centralized_train(train, cfg.round_config(), task, test=test, log_path=cfg.log_path,
                                   timestamps=not args.no_timestamps, header=_header(cfg))
    _summary(records)
    return 0


def _summary(records):
    if not records:
        print("no rounds run")
        return
    last = records[-1]
    metrics = " ".join(f"{k}={v:.4f}" for k, v in sorted(last.eval_metrics.items()))
    print(f"rounds={len(records)} final_train_loss={last.train_loss_mean:.6f} {metrics}".rstrip())


def cmd_inspect(args, extra):
    if extra:
        raise ConfigError(f"unrecognized arguments {extra}", [(extra[0], "unrecognized argument")])
    try:
        result = load_partition(args.partition)
    except FileNotFoundError as exc:
        raise DataError(f"no such partition file: {args.partition}") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(f"malformed partition file {args.partition}: {exc}") from None
    sizes = result.sizes()
    print(f"strategy: {result.spec.strategy.value}")
    print(f"clients: {result.n_clients}")
    print(f"examples: {result.n_examples}")
    print(f"sizes: {sizes}")
    print(f"size min/mean/max: {min(sizes)} / {np.mean(sizes):.2f} / {max(sizes)}")
    print("label histograms:")
    shown = result.n_clients if args.all else min(result.n_clients, 10)
    for cid in range(shown):
        print(f"  client {cid}: {result.label_matrix[cid].tolist()}")
    if shown < result.n_clients:
        print(f"  ... {result.n_clients - shown} more (use --all)")
    if result.n_clients > 1 and result.label_matrix.shape[1] > 1:
        m = jsd_matrix(result)
        off = m[~np.eye(len(m), dtype=bool)]
        print(f"jsd mean off-diagonal: {mean_off_diagonal(m):.6f}")
        print(f"jsd min/max off-diagonal: {off.min():.6f} / {off.max():.6f}")
    return 0


def cmd_compare(args, extra):
    from .analysis import ordering

    if extra:
        raise ConfigError(f"unrecognized arguments {extra}", [(extra[0], "unrecognized argument")])
    rows, holds = ordering(args.logs, by=args.by, metric=args.metric)
    for value, score, path in rows:
        print(f"{args.by}={value} {args.metric}={score:.6f} {path}")
    print(f"ordering holds: {'yes' if holds else 'no'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedsim", description="Federated learning simulator for text tasks.",
                                epilog="Any config key can be overridden as --section.key VALUE.")
    p.add_argument("--version", action="version", version=f"fedsim {_version()} (kernels: {BACKEND})")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter
    defaults = "config defaults (seeds left null resolve to root_seed):\n\n" + cfgmod.defaults_text()

    def common(sp):
        sp.add_argument("--config", help="YAML or JSON run config")
        sp.add_argument("--root-seed", type=int, default=None, help="overrides root_seed (default 0 without a config)")

    sp = sub.add_parser("partition", help="write a partition JSON and its JSD matrix CSV",
                        formatter_class=fmt, epilog=defaults)
    common(sp)
    sp.add_argument("--strategy", choices=["label_dirichlet", "quantity_dirichlet", "cluster_dirichlet", "natural"])
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--n-clients", type=int)
    sp.add_argument("--n-clusters", type=int)
    sp.add_argument("--seed", type=int, help="partition seed")
    sp.add_argument("--data", help="dataset manifest (default: generate from config)")
    sp.add_argument("--task", choices=["tc", "st"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("gen-data", help="write a synthetic dataset manifest", formatter_class=fmt, epilog=defaults)
    common(sp)
    sp.add_argument("--task", choices=["tc", "st"], default="tc")
    sp.add_argument("--seed", type=int, help="generator seed")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    for name, func, helptext in (("run", cmd_run, "run a federation"),
                                 ("centralized", cmd_centralized, "train on pooled data")):
        sp = sub.add_parser(name, help=helptext, formatter_class=fmt, epilog=defaults)
        common(sp)
        sp.add_argument("--log", help="JSONL log path (overrides log_path)")
        sp.add_argument("--no-timestamps", action="store_true", help="omit wall-clock fields from the log")
        sp.set_defaults(func=func)
        if name == "run":
            sp.add_argument("--distributed", action="store_true", help="use the TCP backend")
            sp.add_argument("--bind", default="127.0.0.1:0", help="server address for --distributed")
            sp.add_argument("--no-spawn", action="store_true",
                            help="do not start local client processes; wait for remote `fedsim client`s")
            sp.add_argument("--save-model", help="write the final parameter vector here")

    sp = sub.add_parser("inspect", help="print partition statistics")
    sp.add_argument("partition")
    sp.add_argument("--all", action="store_true", help="show every client's label histogram")
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("compare", help="final metric per log, checked for ordering by a config key")
    sp.add_argument("logs", nargs="+")
    sp.add_argument("--by", default="partition.alpha", help="config key to order runs by (descending)")
    sp.add_argument("--metric", default="accuracy")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("client", help="join a distributed run as one client")
    common(sp)
    sp.add_argument("--connect", required=True, help="server host:port")
    sp.add_argument("--client-id", type=int, required=True)
    sp.set_defaults(func=cmd_client)
    return p


def _version():
    from . import __version__

    return __version__


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return int(args.func(args, extra) or 0)
    except FedsimError as exc:
        print(f"fedsim: error: {exc}", file=sys.stderr)
        for key, why in getattr(exc, "errors", ()):
            print(f"  {key}: {why}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"fedsim: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
