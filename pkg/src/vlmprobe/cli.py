"""Command-line entry point: generate, run, score, slice, report.

Exit codes: 0 ok, 1 validation error, 2 runtime error, 3 partial (some
trials errored). Every command is idempotent for identical inputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import adapters, analysis, probeforge


def _cmd_generate(args) -> int:
    try:
        specs = probeforge.load_suite_specs(args.spec)
    except probeforge.SpecValidationError as e:
        print(f"spec error: {e}", file=sys.stderr)
        return 1
    if args.seed is not None:
        for spec in specs:
            spec.master_seed = args.seed
    if args.profile:
        from .patchgeom import get_profile

        try:
            profile = get_profile(args.profile)
        except Exception as e:
            print(f"profile error: {e}", file=sys.stderr)
            return 1
        for spec in specs:
            spec.profile = profile
    records = probeforge.generate(specs, args.out)
    print(f"wrote {len(records)} trials to {args.out}")
    return 0


def _make_backend(args):
    if args.backend == "oracle":
        return adapters.PerfectOracle()
    if args.backend == "template_ocr":
        return adapters.TemplateOcr()
    if args.backend == "http":
        if not args.endpoint_url:
            raise ValueError("--endpoint-url is required for the http backend")
        config = adapters.ModelEndpointConfig(
            base_url=args.endpoint_url,
            model_name=args.model,
            auth_token_env=args.auth_env,
            timeout=args.timeout,
            max_retries=args.max_retries,
            parallelism=args.parallelism,
            temperature=args.temperature,
            max_reply_tokens=args.max_tokens,
            rate_limit=args.rate_limit,
        )
        return adapters.HttpChatBackend(config, replay_path=args.replay)
    raise ValueError(f"unknown backend {args.backend!r}")


def _cmd_run(args) -> int:
    try:
        records = probeforge.read_manifest(args.manifest)
    except (OSError, json.JSONDecodeError, KeyError) as e:
        print(f"manifest error: {e}", file=sys.stderr)
        return 1
    image_root = args.images_root or os.path.dirname(os.path.abspath(args.manifest))
    try:
        backend = _make_backend(args)
    except ValueError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return 1
    n_ok, n_err = adapters.run_trials(
        records, image_root, backend, args.out, parallelism=args.parallelism, resume=args.resume
    )
    if hasattr(backend, "close"):
        backend.close()
    print(f"answered {n_ok} trials, {n_err} errors -> {args.out}")
    if n_ok == 0 and n_err > 0:
        return 2
    return 3 if n_err else 0


def _cmd_score(args) -> int:
    try:
        records = probeforge.read_manifest(args.manifest)
        results = adapters.read_results(args.results)
    except (OSError, json.JSONDecodeError, KeyError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 1
    scored, unmatched = analysis.score_results(records, results)
    analysis.write_scored(args.out, scored)
    answered = {r["trial_id"] for r in scored}
    missing = [r.trial_id for r in records if r.trial_id not in answered]
    for trial_id in unmatched:
        print(f"warning: result for unknown trial {trial_id}", file=sys.stderr)
    if missing:
        print(f"warning: {len(missing)} manifest trials without results", file=sys.stderr)
    print(f"scored {len(scored)} trials -> {args.out}")
    return 0


def _cmd_slice(args) -> int:
    try:
        records = analysis.read_annotations(args.annotations)
        rows = analysis.quantile_slice(records, mode=args.mode, key=args.key, q=args.quantiles)
    except analysis.AnalysisError as e:
        print(f"slice error: {e}", file=sys.stderr)
        return 1
    header, table = analysis.quantile_csv_rows(rows)
    analysis.write_csv(args.out, header, table)
    print(f"wrote {len(table)} quantile rows -> {args.out}")
    return 0


_CURVE_PARAMS = {"quality": "sampling_rate", "size": "scale", "distractor": "k"}


def _cmd_report(args) -> int:
    try:
        scored = analysis.read_scored(args.scored)
    except (OSError, json.JSONDecodeError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 1
    if not scored:
        print("no scored rows", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    by_kind: dict[str, list[dict]] = {}
    for row in scored:
        by_kind.setdefault(row["params"]["kind"], []).append(row)
    written = []
    for kind, rows in sorted(by_kind.items()):
        if kind in _CURVE_PARAMS:
            points = analysis.aggregate_curve(rows, _CURVE_PARAMS[kind], seed=args.seed)
            header, table = analysis.curve_csv_rows(points)
            path = os.path.join(args.out, f"curve_{kind}.csv")
            analysis.write_csv(path, header, table)
            with open(os.path.join(args.out, f"curve_{kind}.svg"), "w", encoding="utf-8") as fh:
                fh.write(analysis.svg_curve(points, f"{kind}: mean GPM vs {_CURVE_PARAMS[kind]}"))
            written.append(path)
        elif kind == "location":
            ks = sorted({r["params"]["k"] for r in rows})
            for k in ks:
                cells = analysis.aggregate_heatmap([r for r in rows if r["params"]["k"] == k])
                header, table = analysis.heatmap_csv_rows(cells)
                path = os.path.join(args.out, f"heatmap_k{k}.csv")
                analysis.write_csv(path, header, table)
                with open(os.path.join(args.out, f"heatmap_k{k}.svg"), "w", encoding="utf-8") as fh:
                    fh.write(analysis.svg_heatmap(cells, f"location: mean GPM, {k} distractors"))
                written.append(path)
        elif kind == "boundary_cut":
            report = analysis.boundary_cut_report(rows)
            summary_rows = []
            for axis, rep in sorted(report.items()):
                for tag, bins in (("full", rep["bins"]), ("window", rep["window"])):
                    path = os.path.join(args.out, f"boundary_{axis}_{tag}.csv")
                    analysis.write_csv(path, ["range_ratio", "mean_gpm", "n"], [list(b) for b in bins])
                    written.append(path)
                with open(os.path.join(args.out, f"boundary_{axis}.svg"), "w", encoding="utf-8") as fh:
                    fh.write(analysis.svg_boundary(rep, f"boundary cut sweep ({axis})"))
                summary_rows.append([axis, "cut", rep["cut_mean"], rep["cut_n"]])
                summary_rows.append([axis, "uncut", rep["uncut_mean"], rep["uncut_n"]])
            path = os.path.join(args.out, "boundary_summary.csv")
            analysis.write_csv(path, ["axis", "group", "mean_gpm", "n"], summary_rows)
            written.append(path)
    print(f"wrote {len(written)} tables -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlmprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build probe suites (images + manifest)")
    p.add_argument("--spec", required=True, help="suite spec JSON document")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--profile", default=None, help="override model profile for all suites")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="query a backend for every manifest trial")
    p.add_argument("--manifest", required=True)
    p.add_argument("--backend", choices=("oracle", "template_ocr", "http"), required=True)
    p.add_argument("--out", required=True, help="results JSONL path")
    p.add_argument("--images-root", default=None)
    p.add_argument("--endpoint-url", default=None)
    p.add_argument("--model", default="default")
    p.add_argument("--auth-env", default=None, help="env var holding the bearer token")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--rate-limit", type=float, default=None, help="requests per second")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=32)
    p.add_argument("--replay", default=None, help="JSONL wire replay log path")
    p.add_argument("--resume", action="store_true", help="skip trial ids already in --out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("score", help="join results to the manifest and score")
    p.add_argument("--manifest", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("slice", help="quantile-slice VQA annotations")
    p.add_argument("--annotations", required=True, help="annotation JSONL")
    p.add_argument("--mode", choices=("gqa", "textvqa"), required=True)
    p.add_argument("--key", choices=("relative_size", "distractor_count"), default="relative_size")
    p.add_argument("--quantiles", "-q", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("report", help="aggregate a scored run into CSV + SVG")
    p.add_argument("--scored", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except probeforge.ForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failures
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
