"""Command-line driver for the scoring pipeline.

Typical chain::

    novelty-eval gen-data --n-per-class 100 --seed 1 --out train
    novelty-eval gen-data --n-per-class 50 --seed 2 --out test
    novelty-eval train-vae --data train --out vae.json
    novelty-eval encode --data train --vae vae.json --out z_train.csv
    novelty-eval encode --data test --vae vae.json --out z_test.csv
    novelty-eval fit-scorer --embeddings z_train.csv --kind kde --out kde.json
    novelty-eval score --scorer kde.json --embeddings z_test.csv --out novelty.csv
    novelty-eval detect --data test --detector stub:noise=0.01,drop=0.05 --out det.jsonl
    novelty-eval evaluate --annotations test/annotations.jsonl --detections det.jsonl \\
        --novelty novelty.csv --out report/

Options may also come from ``--config file.json``: top-level keys apply to every
command, a section named after the command applies to it alone. Explicit flags
win. ``NOVELTY_EVAL_SEED`` is the seed of last resort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _accel, benchmark, detect_eval, formats, genscore, interpret, scorers, store, synthgen, vae

log = logging.getLogger("novelty_eval")


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _csv_list(text):
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in _csv_list(text)]


def _parse_hyper(items) -> dict:
    out = {}
    if isinstance(items, dict):
        return dict(items)
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise CliError(f"--hyper expects key=value, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _out_file(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _read_novelty(path) -> dict[str, float]:
    rows = formats.read_rows(store.require(path))
    return {r["id"]: float(r["novelty"]) for r in rows}


# --- commands --------------------------------------------------------------------

def cmd_gen_data(a) -> int:
    ranges = dict(synthgen.DEFAULT_RANGES)
    for item in a.range or []:
        name, _, span = item.partition("=")
        lo, _, hi = span.partition(":")
        try:
            ranges[name] = (float(lo), float(hi))
        except ValueError:
            raise CliError(f"--range expects name=lo:hi, got {item!r}")
    spec = synthgen.DatasetSpec(
        n_per_class=a.n_per_class, size=a.size, seed=a.seed, factor_ranges=ranges,
        arrow_prob=a.arrow_prob, exclude_classes=tuple(_csv_list(a.exclude_class or [])),
    )
    crops, factors, annotations = synthgen.generate_dataset(spec)
    store.write_dataset(_out_dir(a.out), spec, crops, factors, annotations)
    print(f"wrote {len(crops)} crops to {a.out}")
    return 0


def cmd_train_vae(a) -> int:
    ds = store.load_dataset(a.data, exclude_classes=tuple(_csv_list(a.exclude_class or [])))
    if a.paper_scale:
        cfg = vae.TrainConfig.paper_scale(seed=a.seed)
    else:
        cfg = vae.TrainConfig(epochs=a.epochs, batch_size=a.batch_size, learning_rate=a.lr,
                              seed=a.seed, beta=a.beta, d=a.d, hidden_width=a.hidden)

    def progress(epoch, loss):
        if a.verbose and (epoch % 25 == 0 or epoch == cfg.epochs - 1):
            print(f"epoch {epoch:4d}  total {loss.total:.4f}  recon {loss.reconstruction:.4f}  kl {loss.kl:.4f}")

    params, history = vae.train(ds.crops, cfg, progress)
    formats.write_json(_out_file(a.out), params.to_dict())
    if a.history:
        formats.write_rows(_out_file(a.history), ["epoch", "reconstruction", "kl", "total"],
                           ([e, h.reconstruction, h.kl, h.total] for e, h in enumerate(history)))
    print(f"trained on {len(ds.crops)} crops; final loss {history[-1].total:.4f}")
    return 0


def _load_vae(path) -> vae.VaeParams:
    return vae.VaeParams.from_dict(formats.read_json(store.require(path)))


def cmd_encode(a) -> int:
    params = _load_vae(a.vae)
    ds = store.load_dataset(a.data)
    z = vae.embed_dataset(params, ds.crops)
    formats.write_latents(_out_file(a.out), ds.ids, z)
    print(f"encoded {z.shape[0]} crops into {z.shape[1]} dims")
    return 0


def cmd_fit_scorer(a) -> int:
    _, z = formats.read_latents(store.require(a.embeddings))
    hyper = _parse_hyper(a.hyper)
    if a.kind == "iforest":
        hyper.setdefault("seed", a.seed)
    model = scorers.fit(a.kind, z, hyper)
    formats.write_json(_out_file(a.out), model.to_dict())
    print(f"fitted {a.kind} on {z.shape[0]} points")
    return 0


def cmd_score(a) -> int:
    model = scorers.ScorerModel.from_dict(formats.read_json(store.require(a.scorer)))
    ids, z = formats.read_latents(store.require(a.embeddings))
    nov = scorers.novelty_scores(model, z, ids)
    formats.write_rows(_out_file(a.out), ["id", "raw", "novelty"],
                       ([i, float(r), float(n)] for i, r, n in zip(nov.ids, nov.raw, nov.novelty)))
    print(f"scored {len(ids)} objects with {model.kind}")
    return 0


def _stub_detections(data_dir, detector: str, seed: int):
    ds = store.load_dataset(data_dir, with_crops=False)
    try:
        stub = detect_eval.StubDetector.parse(detector, seed=seed)
    except ValueError as exc:
        raise CliError(str(exc))
    return stub(ds.annotations, ds.factor_map())


def cmd_detect(a) -> int:
    dets = _stub_detections(a.data, a.detector, a.seed)
    formats.write_jsonl(_out_file(a.out), detect_eval.detections_to_records(dets))
    print(f"wrote {len(dets)} detections")
    return 0


def cmd_evaluate(a) -> int:
    annotations = detect_eval.annotations_from_records(formats.read_jsonl(store.require(a.annotations)))
    if a.detections:
        detections = detect_eval.detections_from_records(formats.read_jsonl(store.require(a.detections)))
    elif a.detector:
        if not a.data:
            raise CliError("--detector needs --data to locate factors.csv")
        detections = _stub_detections(a.data, a.detector, a.seed)
    else:
        raise CliError("give --detections or --detector")
    novelty = _read_novelty(a.novelty)

    ann_ids = [x.object_id for x in sorted(annotations, key=lambda x: (x.image_id, x.object_id))]
    known = set(novelty)
    orphan = next((i for i in ann_ids if i not in known), None)
    if orphan is None:
        ann_set = set(ann_ids)
        orphan = next((i for i in novelty if i not in ann_set), None)
    if orphan is not None:
        raise CliError(f"id mismatch between novelty and annotations: orphan id {orphan!r}")

    matches = detect_eval.match_dataset(annotations, detections, a.iou_threshold)
    losses = detect_eval.dataset_losses(matches)
    acc = detect_eval.accuracy(m for m, _, _ in matches.values())
    n_fp = sum(len(m.fp) for m, _, _ in matches.values())
    edges = tuple(_float_list(a.edges)) if a.edges else None
    report = genscore.build_report(novelty, losses, acc, n_fp, edges)

    out = _out_dir(a.out)
    formats.write_json(out / "report.json", report.to_dict())
    ids = sorted(losses)
    nv = [novelty[i] for i in ids]
    ls = [losses[i] for i in ids]
    curve = genscore.loss_novelty_curve(nv, ls, a.windows)
    formats.write_rows(out / "curve.csv", ["window_mid_novelty", "mean_loss"], curve)
    bins = genscore.bin_by_novelty(nv, edges)
    formats.write_rows(out / "objects.csv", ["id", "novelty", "loss", "bin"],
                       ([i, n, l, b] for i, n, l, b in zip(ids, nv, ls, bins.labels)))
    if a.sample_per_bin:
        chosen = genscore.sample_balanced(bins, ids, a.sample_per_bin, a.seed)
        formats.write_rows(out / "balanced_sample.csv", ["id"], ([i] for i in chosen))
    print(f"G = {report.g_score:.4f}  accuracy = {report.accuracy:.4f}  1-MAE = {report.unweighted_complement:.4f}")
    return 0


def cmd_benchmark(a) -> int:
    spec = benchmark.ContaminationSpec(
        contamination_class=a.contamination_class, fractions=tuple(_float_list(a.fractions)),
        repeats=a.repeats, scorers=tuple(_csv_list(a.scorers)), seed=a.seed,
    )
    if a.vae:
        params = _load_vae(a.vae)
        tr = store.load_dataset(store.require(a.train_data))
        te = store.load_dataset(store.require(a.test_data))
        z = {"train": vae.embed_dataset(params, tr.crops), "test": vae.embed_dataset(params, te.crops)}
        labels = tr.labels(), te.labels()
    elif a.train_embeddings and a.test_embeddings:
        tr = store.load_dataset(store.require(a.train_data), with_crops=False)
        te = store.load_dataset(store.require(a.test_data), with_crops=False)
        z = {}
        for split, path, ds in (("train", a.train_embeddings, tr), ("test", a.test_embeddings, te)):
            ids, mat = formats.read_latents(store.require(path))
            pos = {i: r for r, i in enumerate(ids)}
            missing = [i for i in ds.ids if i not in pos]
            if missing:
                raise CliError(f"{path}: no embedding for id {missing[0]!r}")
            z[split] = mat[[pos[i] for i in ds.ids]]
        labels = tr.labels(), te.labels()
    else:
        raise CliError("give --vae, or both --train-embeddings and --test-embeddings")

    table = benchmark.run_contamination_benchmark(*labels, lambda s, idx: z[s][idx], spec, a.test_size)
    formats.write_rows(_out_file(a.out), table.header, table.csv_rows())
    rep_path = Path(a.out).with_name(Path(a.out).stem + "_repeats.csv")
    formats.write_rows(rep_path, ["scorer", "class", "fraction", "repeat", "auc"],
                       ([r.scorer, r.contamination_class, r.fraction, k, v]
                        for r in table.rows for k, v in enumerate(r.aucs)))
    print(table.pretty())
    return 0


def cmd_interpret(a) -> int:
    params = _load_vae(a.vae)
    _, z_tr = formats.read_latents(store.require(a.train_embeddings))
    ids, z_te = formats.read_latents(store.require(a.test_embeddings))
    rows = formats.read_rows(store.require(a.novelty))
    nov = {r["id"]: r["novelty"] for r in rows}
    missing = [i for i in ids if i not in nov]
    if missing:
        raise CliError(f"no novelty score for id {missing[0]!r}")
    values = [float(nov[i]) for i in ids]
    bins = genscore.bin_by_novelty(values)
    ranking = interpret.select_informative_dims(z_te, bins, a.top_k, a.mi_bins)
    out = _out_dir(a.out)
    interpret.write_ranking(out / "mi_ranking.csv", ranking)
    interpret.export_traversal_grid(params, ranking, z_tr, out, a.n_dims, a.steps, a.range_sigmas)
    interpret.export_parallel_coordinates(out / "parallel_coordinates.csv", ids, z_te, values, ranking, a.n_dims)
    print("top dims: " + ", ".join(f"z{d} ({ranking.mi[d]:.3f} nats)" for d in ranking.top))
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="novelty-eval", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--json", action="store_true", help="machine-readable errors on stderr")
    p.add_argument("--threads", type=int, default=None, help="cap on kernel fan-out")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=int, default=None)
        return sp

    sp = add("gen-data", cmd_gen_data, "render a synthetic crop dataset")
    sp.add_argument("--n-per-class", type=int, default=100)
    sp.add_argument("--size", type=int, default=16)
    sp.add_argument("--arrow-prob", type=float, default=0.25)
    sp.add_argument("--exclude-class", action="append")
    sp.add_argument("--range", action="append", help="factor range, e.g. bulb_radius=0.1:0.3")
    sp.add_argument("--out", required=True)

    sp = add("train-vae", cmd_train_vae, "train the beta-VAE on a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--history")
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--d", type=int, default=8)
    sp.add_argument("--beta", type=float, default=0.1)
    sp.add_argument("--hidden", type=int, default=128)
    sp.add_argument("--paper-scale", action="store_true", help="750 epochs, lr 1e-4, d=32")
    sp.add_argument("--exclude-class", action="append")

    sp = add("encode", cmd_encode, "write encoder means for a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--vae", required=True)
    sp.add_argument("--out", required=True)

    sp = add("fit-scorer", cmd_fit_scorer, "fit a novelty scorer on training embeddings")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--kind", choices=scorers.KINDS, default="kde")
    sp.add_argument("--hyper", action="append", help="key=value, e.g. k=20")
    sp.add_argument("--out", required=True)

    sp = add("score", cmd_score, "score test embeddings")
    sp.add_argument("--scorer", required=True)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--out", required=True)

    sp = add("detect", cmd_detect, "synthesize detections with the stub detector")
    sp.add_argument("--data", required=True)
    sp.add_argument("--detector", default="stub:noise=0.01")
    sp.add_argument("--out", required=True)

    sp = add("evaluate", cmd_evaluate, "compute G, accuracy and loss-vs-novelty")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--detections")
    sp.add_argument("--detector", help="stub:noise=...,drop=... instead of --detections")
    sp.add_argument("--data", help="dataset dir (for --detector)")
    sp.add_argument("--novelty", required=True)
    sp.add_argument("--iou-threshold", type=float, default=0.5)
    sp.add_argument("--windows", type=int, default=10)
    sp.add_argument("--edges", help="manual novelty thresholds lo,hi")
    sp.add_argument("--sample-per-bin", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("benchmark", cmd_benchmark, "contamination study over scorers")
    sp.add_argument("--train-data", required=True)
    sp.add_argument("--test-data", required=True)
    sp.add_argument("--vae")
    sp.add_argument("--train-embeddings")
    sp.add_argument("--test-embeddings")
    sp.add_argument("--contamination-class", default="green", choices=synthgen.COLORS)
    sp.add_argument("--fractions", default="0.1")
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--scorers", default=",".join(scorers.KINDS))
    sp.add_argument("--test-size", type=int, default=None)
    sp.add_argument("--out", required=True)

    sp = add("interpret", cmd_interpret, "rank latent dims by MI and export traversals")
    sp.add_argument("--vae", required=True)
    sp.add_argument("--train-embeddings", required=True)
    sp.add_argument("--test-embeddings", required=True)
    sp.add_argument("--novelty", required=True)
    sp.add_argument("--top-k", type=int, default=5)
    sp.add_argument("--n-dims", type=int, default=3)
    sp.add_argument("--steps", type=int, default=9)
    sp.add_argument("--range-sigmas", type=float, default=2.0)
    sp.add_argument("--mi-bins", type=int, default=10)
    sp.add_argument("--out", required=True)
    return p


def _config_defaults(argv) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return {}
    doc = formats.read_json(store.require(known.config))
    command = next((r for r in rest if not r.startswith("-")), None)
    flat = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    flat.update(doc.get(command, {}) if command else {})
    return {k.replace("-", "_"): v for k, v in flat.items()}


def _resolve_seed(a) -> int:
    if a.seed is not None:
        return int(a.seed)
    env = os.environ.get("NOVELTY_EVAL_SEED")
    return int(env) if env else 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    want_json = "--json" in argv
    try:
        defaults = _config_defaults(argv)
        parser = build_parser()
        if defaults:
            for action in parser._subparsers._group_actions:
                for sp in action.choices.values():
                    sp.set_defaults(**{k: v for k, v in defaults.items() if k not in {"func", "command"}})
            parser.set_defaults(**{k: v for k, v in defaults.items() if k in {"threads", "verbose"}})
        a = parser.parse_args(argv)
        a.seed = _resolve_seed(a)
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        _accel.set_threads(a.threads)
        return a.func(a)
    except (CliError, ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        code = exc.code if isinstance(exc, CliError) else 2
        msg = str(exc) if not isinstance(exc, KeyError) else f"unknown id {exc.args[0]!r}"
        if want_json:
            print(json.dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}), file=sys.stderr)
        else:
            print(f"error: {msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
