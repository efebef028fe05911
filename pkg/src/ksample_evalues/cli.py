"""Command-line interface: evaluate / project / growth / heatmap / simulate.

Every subcommand is driven by a run configuration (flags or a JSON config
file), honors --seed for bit-reproducible stochastic output, and emits JSON
reports that embed the full configuration for provenance.  CSV output uses
header rows, UTF-8 and '.' as the decimal separator.  The default output
directory is taken from $KSEV_OUTPUT_DIR (falling back to the working
directory).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

from . import evariables as ev
from . import growth as gr
from . import ripr
from . import sequential as sq
from .expfam import Alternative, family_from_config


def canonical_json(obj) -> str:
    """Stable serialization: reparsing and re-emitting is byte-identical."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _out_dir(args) -> Path:
    d = args.out_dir or os.environ.get("KSEV_OUTPUT_DIR") or "."
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _load_config(args) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    if getattr(args, "family", None):
        cfg["family"] = args.family
    if getattr(args, "fixed", None):
        cfg.setdefault("fixed_params", {}).update(json.loads(args.fixed))
    if getattr(args, "mu", None):
        cfg["mean_params"] = _parse_floats(args.mu)
    if getattr(args, "beta_means", False):
        cfg["beta_means"] = True
    errors = []
    if "family" not in cfg:
        errors.append("family: missing (flag --family or config key 'family')")
    if "mean_params" not in cfg or len(cfg.get("mean_params", [])) < 2:
        errors.append("mean_params: need at least two group means (--mu)")
    if errors:
        raise SystemExit("invalid configuration:\n  " + "\n  ".join(errors))
    return cfg


def _spec_alt(cfg):
    spec = family_from_config(cfg)
    means = cfg["mean_params"]
    if cfg.get("beta_means"):
        if spec.family_id != "beta_fixed_alpha":
            raise SystemExit("beta_means conversion only applies to the beta family")
        means = [spec.mean_from_beta_mean(m) for m in means]
    alt = Alternative.from_means(spec, means)
    return spec, alt


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _report(args, payload: dict, cfg: dict) -> None:
    payload = dict(payload)
    payload["config"] = cfg
    text = canonical_json(payload)
    if getattr(args, "out", None):
        path = _out_dir(args) / args.out
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def _load_mixture(path: str) -> ripr.MixtureNull:
    with open(path, "r", encoding="utf-8") as fh:
        return ripr.MixtureNull.from_json_dict(json.load(fh))


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    spec, alt = _spec_alt(cfg)
    kind = ev.EValueKind(args.kind)
    mixture = None
    if kind is ev.EValueKind.GRO_M:
        if not args.mixture:
            raise SystemExit(
                "kind gro_m needs --mixture <file.json>; produce one with "
                "'ksev project'"
            )
        mixture = _load_mixture(args.mixture)
    if args.stream:
        return _evaluate_stream(args, cfg, spec, alt, kind, mixture)
    blocks = []
    if args.block:
        blocks.append((0, _parse_floats(args.block)))
    if args.data:
        with open(args.data, "r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    blocks.append((ln, _parse_floats(line)))
                except ValueError as exc:
                    raise SystemExit(f"{args.data}:{ln}: unparseable block: {exc}")
    if not blocks:
        raise SystemExit("nothing to evaluate: give --block, --data or --stream")
    results = []
    total = 0.0
    for ln, blk in blocks:
        if len(blk) != alt.k:
            raise SystemExit(
                f"line {ln}: block has {len(blk)} values, expected k={alt.k}"
            )
        try:
            res = ev.log_evalue(spec, alt, blk, kind, mixture=mixture)
        except Exception as exc:
            raise SystemExit(f"line {ln}: {exc}")
        total += res.log_evalue
        row = {"block": blk, "kind": kind.value, "log_evalue": res.log_evalue,
               "evalue": res.evalue}
        if res.certificate is not None:
            row["certificate"] = res.certificate
        results.append(row)
    _report(args, {"results": results, "total_log_evalue": total}, cfg)
    return 0


def _evaluate_stream(args, cfg, spec, alt, kind, mixture) -> int:
    """Ingest 'group,value' lines into a sequential state and report it."""
    mult = (
        [int(m) for m in args.multiplicities.split(",")]
        if args.multiplicities
        else None
    )
    state = sq.StreamState(
        spec, alt, kind, alpha=args.alpha, multiplicities=mult, mixture=mixture
    )
    with open(args.stream, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("group"):
                continue
            try:
                group_txt, value_txt = line.split(",", 1)
                state.ingest(int(group_txt), float(value_txt))
            except Exception as exc:
                raise SystemExit(f"{args.stream}:{ln}: {exc}")
    payload = {
        "blocks_completed": state.blocks_completed,
        "log_evalue": state.log_evalue,
        "evalue": math.exp(state.log_evalue),
        "decision": state.decide().value,
        "pending": list(state.pending()),
        "kind": kind.value,
        "alpha": state.alpha,
    }
    caveat = state.validity_caveat()
    if caveat is not None:
        payload["validity_caveat"] = caveat
    _report(args, payload, cfg)
    return 0


def cmd_project(args) -> int:
    cfg = _load_config(args)
    spec, alt = _spec_alt(cfg)
    kw = {}
    if args.mu_lo is not None:
        kw["mu_lo"] = args.mu_lo
    if args.mu_hi is not None:
        kw["mu_hi"] = args.mu_hi
    if args.method == "li":
        mixture, trace = ripr.li_approximate(
            spec, alt, max_iters=args.max_iters, **kw
        )
    else:
        mixture = ripr.brute_force_two_component(spec, alt, **kw)
        trace = [
            {
                "iter": 1,
                "kl": ripr.kl_to_mixture(spec, alt, mixture).value,
                "sup_expectation": mixture.certificate.sup_expectation,
            }
        ]
    out = _out_dir(args)
    mix_path = out / (args.out or "mixture.json")
    payload = mixture.to_json_dict()
    payload["config"] = cfg
    mix_path.write_text(canonical_json(payload), encoding="utf-8")
    print(f"wrote {mix_path}", file=sys.stderr)
    if args.trace:
        trace_path = out / args.trace
        _write_csv(
            trace_path,
            ["iter", "kl", "sup_expectation"],
            [(t["iter"], t["kl"], t["sup_expectation"]) for t in trace],
        )
        print(f"wrote {trace_path}", file=sys.stderr)
    return 0


def cmd_growth(args) -> int:
    cfg = _load_config(args)
    spec, alt = _spec_alt(cfg)
    kinds = [ev.EValueKind(k) for k in args.kinds.split(",")]
    mixture = _load_mixture(args.mixture) if args.mixture else None
    report = gr.growth_report(
        spec,
        alt,
        kinds,
        method=args.method,
        mixture=mixture,
        mc_n=args.mc_n,
        seed=args.seed,
    )
    entries = {
        k.value: {"rate": e.rate, "stderr": e.stderr}
        for k, e in report.entries.items()
    }
    gaps = {}
    for i, a in enumerate(kinds):
        for b in kinds[i + 1 :]:
            gaps[f"{a.value}-{b.value}"] = report.gap(a, b)
    _report(args, {"growth": entries, "gaps": gaps, "method": args.method}, cfg)
    return 0


def cmd_heatmap(args) -> int:
    cfg: dict = {"family": args.family}
    if args.fixed:
        cfg["fixed_params"] = json.loads(args.fixed)
    spec = family_from_config(cfg)
    kinds = args.kinds.split(",")
    if len(kinds) != 2:
        raise SystemExit("--kinds must name exactly two statistics, e.g. groiid,cond")
    aliases = {"groiid": "gro_iid", "grom": "gro_m"}
    kinds = [aliases.get(k.strip(), k.strip()) for k in kinds]
    result = gr.heatmap(
        spec,
        tuple(kinds),
        n=args.n,
        std_lo=args.std_lo,
        std_hi=args.std_hi,
        method=args.method,
        mc_n=args.mc_n,
        seed=args.seed,
    )
    out = _out_dir(args)
    path = out / (args.out or f"heatmap_{args.family}.csv")
    _write_csv(path, ["mu1", "mu2", "gap", "gap_fourth_root"], result.rows())
    print(f"wrote {path} ({args.n * args.n} cells, {len(result.failures)} failures)",
          file=sys.stderr)
    if args.slices:
        offsets = [int(t) for t in args.slice_offsets.split(",")]
        for off in offsets:
            deltas, vals = result.slice(off)
            spath = out / (args.slices if len(offsets) == 1
                           else f"{off}_{args.slices}")
            _write_csv(spath, ["delta", "signed_fourth_root"],
                       list(zip(deltas, vals)))
            print(f"wrote {spath}", file=sys.stderr)
    if result.failures:
        for fail in result.failures:
            print(f"cell ({fail['mu1']:.4g}, {fail['mu2']:.4g}): {fail['error']}",
                  file=sys.stderr)
        if args.strict:
            return 1
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    spec, alt = _spec_alt(cfg)
    mixture = _load_mixture(args.mixture) if args.mixture else None
    summary = sq.simulate(
        spec,
        alt,
        args.kind,
        alpha=args.alpha,
        policy=args.policy,
        trials=args.trials,
        seed=args.seed,
        max_blocks=args.max_blocks,
        truth=args.truth,
        null_mu=args.null_mu,
        multiplicities=[int(m) for m in args.multiplicities.split(",")]
        if args.multiplicities
        else None,
        mixture=mixture,
    )
    payload = summary.to_json_dict()
    if args.trace:
        path = _out_dir(args) / args.trace
        _write_csv(
            path,
            ["trial", "stopped_at", "rejected", "final_log_evalue"],
            [
                (t, int(summary.stop_times[t]), int(summary.rejected[t]),
                 summary.final_log_evalues[t])
                for t in range(summary.trials)
            ],
        )
        print(f"wrote {path}", file=sys.stderr)
    _report(args, payload, cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ksev",
        description=(
            "Anytime-valid k-sample tests with e-values for one-parameter "
            "exponential families"
        ),
    )
    p.add_argument("--out-dir", default=None, help="output directory "
                   "(default: $KSEV_OUTPUT_DIR or '.')")
    sub = p.add_subparsers(dest="command", required=True)

    def add_model_flags(sp, with_kind=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--family", help="family id (bernoulli, gaussian_mean, "
                        "gaussian_variance, poisson, exponential, geometric, "
                        "beta_fixed_alpha)")
        sp.add_argument("--fixed", help="fixed parameters as JSON, e.g. "
                        "'{\"sigma2\": 2.0}'")
        sp.add_argument("--mu", help="comma-separated group means")
        sp.add_argument("--beta-means", action="store_true", dest="beta_means",
                        help="interpret --mu as beta-observation means E[U]")
        sp.add_argument("--seed", type=int, default=0)
        if with_kind:
            sp.add_argument("--kind", default="cond",
                            choices=[k.value for k in ev.EValueKind])

    sp = sub.add_parser("evaluate", help="e-value of blocks or a stream")
    add_model_flags(sp)
    sp.add_argument("--block", help="one block, comma-separated, one value per group")
    sp.add_argument("--data", help="CSV file, one block per line")
    sp.add_argument("--stream", help="CSV file of 'group,value' lines, ingested "
                    "sequentially into an anytime-valid e-process")
    sp.add_argument("--alpha", type=float, default=0.05,
                    help="significance level for --stream mode")
    sp.add_argument("--multiplicities",
                    help="comma-separated m_j per stream (--stream mode)")
    sp.add_argument("--mixture", help="certified mixture JSON (for kind gro_m)")
    sp.add_argument("--out", help="write the JSON report here")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("project", help="approximate the reverse information "
                        "projection and certify it")
    add_model_flags(sp, with_kind=False)
    sp.add_argument("--method", choices=["li", "brute2"], default="li")
    sp.add_argument("--max-iters", type=int, default=15)
    sp.add_argument("--mu-lo", type=float, default=None)
    sp.add_argument("--mu-hi", type=float, default=None)
    sp.add_argument("--out", help="mixture JSON filename (default mixture.json)")
    sp.add_argument("--trace", help="per-iteration CSV trace filename")
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("growth", help="growth rates and pairwise gaps")
    add_model_flags(sp, with_kind=False)
    sp.add_argument("--kinds", default="pseudo,gro_iid,cond")
    sp.add_argument("--method", choices=["quadrature", "mc"], default="quadrature")
    sp.add_argument("--mc-n", type=int, default=10**6)
    sp.add_argument("--mixture", help="certified mixture JSON (for gro_m)")
    sp.add_argument("--out", help="write the JSON report here")
    sp.set_defaults(func=cmd_growth)

    sp = sub.add_parser("heatmap", help="growth-gap grid over two-group "
                        "alternatives")
    sp.add_argument("--family", required=True)
    sp.add_argument("--fixed", help="fixed parameters as JSON")
    sp.add_argument("--kinds", required=True, help="two statistics, e.g. groiid,cond")
    sp.add_argument("--n", type=int, default=50)
    sp.add_argument("--std-lo", type=float, default=None,
                    help="grid start in the standard parameterization")
    sp.add_argument("--std-hi", type=float, default=None)
    sp.add_argument("--method", choices=["quadrature", "mc"], default="quadrature")
    sp.add_argument("--mc-n", type=int, default=10**5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="CSV filename")
    sp.add_argument("--slices", help="also write diagonal slices to this CSV")
    sp.add_argument("--slice-offsets", default="0", dest="slice_offsets",
                    help="anti-diagonal offsets to extract (comma-separated)")
    sp.add_argument("--strict", action="store_true",
                    help="nonzero exit if any cell fails")
    sp.set_defaults(func=cmd_heatmap)

    sp = sub.add_parser("simulate", help="seeded sequential-testing campaign")
    add_model_flags(sp)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--policy", default="threshold",
                    choices=["threshold", "fixed", "budget"])
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--max-blocks", type=int, default=200)
    sp.add_argument("--truth", choices=["null", "alt"], default="null")
    sp.add_argument("--null-mu", type=float, default=None)
    sp.add_argument("--multiplicities", help="comma-separated m_j per stream")
    sp.add_argument("--mixture", help="certified mixture JSON (for gro_m)")
    sp.add_argument("--trace", help="per-trial CSV filename")
    sp.add_argument("--out", help="write the JSON summary here")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
