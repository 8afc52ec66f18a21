"""Command line entry point: ``glyphstemma <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .mapping import DistanceMatrix
from .pipeline import (
    InputError,
    NumericalError,
    build_tree,
    gold_distances,
    load_manifest,
    override,
    run_all,
    run_cluster,
    run_distances,
    run_embed,
    run_segment,
)
from .synth import generate_tradition, write_corpus
from .textmetrics import (
    NormalizationOptions,
    cer,
    combining_marks,
    diacritics_cer,
    distribution_matrix,
    levenshtein,
    normalize_text,
    rank_report,
    spearman,
)

log = logging.getLogger("glyphstemma")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _manifest_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "--manifest", dest="config", required=True, type=Path, help="corpus manifest (JSON)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")


def _imaging_args(p):
    g = p.add_argument_group("segmentation")
    g.add_argument("--kernel", type=int)
    g.add_argument("--min-area", type=int)
    g.add_argument("--max-area-fraction", type=float)
    g.add_argument("--min-side", type=int)
    g.add_argument("--padding", type=int)
    g.add_argument("--bin-height", type=int)
    g.add_argument("--ink-light", action="store_true", help="ink is lighter than the background")


def _embedding_args(p):
    g = p.add_argument_group("embedding")
    g.add_argument("--embedding", choices=["patch", "external"])
    g.add_argument("--external-path")
    g.add_argument("--patch-size", type=int)


def _cluster_args(p):
    g = p.add_argument_group("clustering")
    g.add_argument("--k", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--export-clusters", action="store_true", help="copy crops into cluster_<i>/ directories")


def _distance_args(p):
    g = p.add_argument_group("distances")
    g.add_argument("--discard-fraction", type=float)
    g.add_argument("--n-convention", choices=["retained", "all"])


def _norm_args(p):
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--keep-whitespace", action="store_true")
    p.add_argument("--keep-diacritics", action="store_true")


def _norm_opts(args) -> NormalizationOptions:
    return NormalizationOptions(not args.keep_case, not args.keep_whitespace, not args.keep_diacritics)


def _load(args):
    manifest = load_manifest(args.config)
    ns = vars(args)
    imaging = {
        "kernel": ns.get("kernel"),
        "min_area": ns.get("min_area"),
        "max_area_fraction": ns.get("max_area_fraction"),
        "min_side": ns.get("min_side"),
        "padding": ns.get("padding"),
        "bin_height": ns.get("bin_height"),
        "ink_is_dark": False if ns.get("ink_light") else None,
    }
    embedding = {
        "method": ns.get("embedding"),
        "external_path": ns.get("external_path"),
        "patch_size": ns.get("patch_size"),
    }
    manifest.params = override(
        manifest.params,
        k=ns.get("k"),
        seed=ns.get("seed"),
        max_iter=ns.get("max_iter"),
        tol=ns.get("tol"),
        discard_fraction=ns.get("discard_fraction"),
        n_convention=ns.get("n_convention"),
        imaging=imaging,
        embedding=embedding,
    )
    manifest.source = dict(manifest.source, parameters=manifest.params.to_dict())
    return manifest


def cmd_segment(args) -> int:
    results = run_segment(_load(args), args.out, args.jobs)
    failed = 0
    for ms, outcome in results.items():
        if isinstance(outcome, str):
            failed += 1
            print(f"{ms}: {outcome}", file=sys.stderr)
        else:
            print(f"{ms}: {outcome} glyphs")
    if failed:
        raise InputError(f"{failed} of {len(results)} manuscripts failed to segment")
    return EXIT_OK


def cmd_embed(args) -> int:
    for ms, n in run_embed(_load(args), args.out, args.jobs).items():
        print(f"{ms}: {n} vectors")
    return EXIT_OK


def cmd_cluster(args) -> int:
    for ms, info in run_cluster(_load(args), args.out, args.jobs, args.export_clusters).items():
        purity = "" if info["purity"] is None else f", purity {info['purity']:.4f}"
        print(f"{ms}: {info['glyphs']} glyphs in {info['k']} clusters{purity}")
    return EXIT_OK


def cmd_distances(args) -> int:
    dm = run_distances(_load(args), args.out, args.jobs)
    for a, b, d in dm.pairs():
        print(f"{a} -- {b}\t{d:.6f}")
    return EXIT_OK


def cmd_tree(args) -> int:
    out = build_tree(args.distances, args.method, args.output)
    print(out.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    summary = run_all(_load(args), args.out, args.jobs, args.export_clusters)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def cmd_eval_cer(args) -> int:
    if len(args.gold) != len(args.hyp):
        raise InputError("--gold and --hyp need the same number of files")
    opts = _norm_opts(args)
    lines = ["page,levenshtein,ref_length,cer"]
    scores = []
    for g, h in zip(args.gold, args.hyp):
        ref, hyp = _read(g), _read(h)
        try:
            if args.diacritics_only:
                r, hy = combining_marks(ref), combining_marks(hyp)
                value = diacritics_cer(ref, hyp)
            else:
                r, hy = normalize_text(ref, opts), normalize_text(hyp, opts)
                value = cer(ref, hyp, opts)
        except ValueError as exc:
            raise InputError(f"{g}: {exc}") from None
        scores.append(value)
        lines.append(f"{g.stem},{levenshtein(r, hy)},{len(r)},{value:.4f}")
    lines.append(f"mean,,,{float(np.mean(scores)):.4f}")
    text = "\n".join(lines) + "\n"
    if args.output:
        args.output.write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_eval_rank(args) -> int:
    try:
        test = DistanceMatrix.from_csv(args.test)
    except (OSError, ValueError, IndexError) as exc:
        raise InputError(f"cannot read {args.test}: {exc}") from None
    if args.gold_csv:
        gold = DistanceMatrix.from_csv(args.gold_csv)
    elif args.config:
        gold = gold_distances(load_manifest(args.config), _norm_opts(args))
    else:
        raise InputError("give --gold-csv or --config with gold transcripts")
    try:
        report = rank_report(gold, test)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = report.to_csv()
    if args.output:
        args.output.write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_synth(args) -> int:
    tradition = generate_tradition(args.copies, args.length, args.seed)
    mpath = write_corpus(args.out, tradition, render=not args.no_render)
    gold = DistanceMatrix.from_csv(args.out / "gold_levenshtein.csv")
    letters = distribution_matrix(tradition.witnesses)
    rho = spearman(letters.upper_triangle(), gold.upper_triangle())
    print(f"manifest: {mpath}")
    print(f"letter-distribution vs Levenshtein spearman: {rho:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glyphstemma", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--error-json", action="store_true", help="report failures as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="page images -> glyph crops + crops.json")
    _manifest_args(p)
    _imaging_args(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("embed", help="glyph crops -> embeddings.txt")
    _manifest_args(p)
    _embedding_args(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster", help="embeddings -> clusters.json")
    _manifest_args(p)
    _cluster_args(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("distances", help="clusters -> distances.csv + mapping files")
    _manifest_args(p)
    _distance_args(p)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("tree", help="distances.csv -> Newick")
    p.add_argument("--distances", type=Path, required=True)
    p.add_argument("--method", choices=["nj", "upgma"], default="nj")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("run", help="all stages end to end")
    _manifest_args(p)
    _imaging_args(p)
    _embedding_args(p)
    _cluster_args(p)
    _distance_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval-cer", help="per-page and mean CER of hypothesis files")
    p.add_argument("--gold", type=Path, nargs="+", required=True)
    p.add_argument("--hyp", type=Path, nargs="+", required=True)
    p.add_argument("--diacritics-only", action="store_true")
    p.add_argument("--output", type=Path)
    _norm_args(p)
    p.set_defaults(func=cmd_eval_cer)

    p = sub.add_parser("eval-rank", help="rank comparison of a distance matrix against gold")
    p.add_argument("--test", type=Path, required=True, help="distances.csv to evaluate")
    p.add_argument("--gold-csv", type=Path)
    p.add_argument("--config", "--manifest", dest="config", type=Path, help="manifest with gold transcripts")
    p.add_argument("--output", type=Path)
    _norm_args(p)
    p.set_defaults(func=cmd_eval_rank)

    p = sub.add_parser("synth", help="generate a synthetic tradition with rendered pages")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--copies", type=int, default=8)
    p.add_argument("--length", type=int, default=600)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--no-render", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        return _fail(args, "input", str(exc), EXIT_INPUT)
    except NumericalError as exc:
        return _fail(args, "numerical", str(exc), EXIT_NUMERIC)


def _fail(args, kind: str, message: str, code: int) -> int:
    if args.error_json:
        print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    else:
        print(f"error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
