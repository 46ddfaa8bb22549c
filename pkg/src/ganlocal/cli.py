"""Command-line entry points.

Subcommands: gen, cluster, attribute, edit, sweep, frechet, serve. The
project directory comes from --data or the GANLOCAL_DATA environment
variable. Exit codes: 2 for usage errors, 1 for runtime failures (with a
machine-readable JSON error on stderr when --json is set).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import editor, metrics, project
from .errors import GanLocalError


def _data_dir(args: argparse.Namespace) -> str:
    data = args.data or os.environ.get("GANLOCAL_DATA")
    if not data:
        raise GanLocalError("no project directory: pass --data or set GANLOCAL_DATA")
    return data


def _parse_values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = project.ProjectConfig(
        data_dir=_data_dir(args),
        generator_seed=args.seed,
        base_layer=args.base_layer,
        k=args.k,
        sample_count=args.count,
        cluster_seed=args.cluster_seed,
    )
    proj = project.Project(cfg)
    proj.root.mkdir(parents=True, exist_ok=True)
    project.save_config(cfg, proj.root / "project.json")
    proj.generate()
    print(f"rendered {cfg.sample_count} samples into {proj.root}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    proj = project.load_project(_data_dir(args))
    catalog = proj.cluster(k=args.k, seed=args.seed)
    sizes = catalog.base_membership.data.sum(axis=(0, 2, 3)).astype(int)
    print(f"catalog with {catalog.k} clusters at layer {catalog.base_layer_id}")
    print("cluster sizes:", ", ".join(str(int(s)) for s in sizes))
    return 0


def cmd_attribute(args: argparse.Namespace) -> int:
    proj = project.load_project(_data_dir(args))
    catalog = proj.attribute()
    print(f"attributed layers: {sorted(catalog.attributions)}")
    return 0


def _edit_params(args: argparse.Namespace) -> editor.EditParams:
    if args.mode == "sequential":
        eps = editor.DEFAULT_EPSILON if args.epsilon is None else args.epsilon
        return editor.EditParams(mode=args.mode, epsilon=eps, rho_ratio=args.rho_ratio)
    lam = 0.5 if args.lam is None else args.lam
    return editor.EditParams(mode=args.mode, lam=lam, rho_ratio=args.rho_ratio)


def cmd_edit(args: argparse.Namespace) -> int:
    proj = project.load_project(_data_dir(args))
    params = _edit_params(args)
    bundle = proj.edit_bundle(
        ("seed", args.target_seed), ("seed", args.ref_seed), args.part, params
    )
    out = proj.out_dir / (args.out or f"edit_{args.target_seed}_{args.ref_seed}")
    out.mkdir(parents=True, exist_ok=True)
    result = bundle["result"]
    metrics.save_image_png(result.target.image, out / "target.png")
    metrics.save_image_png(result.reference.image, out / "reference.png")
    metrics.save_image_png(result.edited.image, out / "edited.png")
    metrics.save_diff_png(bundle["diff"], out / "diff.png")
    (out / "locality.json").write_text(
        json.dumps(bundle["locality"].to_dict(), indent=2) + "\n"
    )
    (out / "queries.json").write_text(
        json.dumps(
            {str(l): q for l, q in sorted(bundle["q_summary"].items())}, indent=2
        )
        + "\n"
    )
    print(json.dumps(bundle["locality"].to_dict()))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    proj = project.load_project(_data_dir(args))
    if args.mode == "sequential":
        if not args.epsilons:
            raise GanLocalError("sequential sweep needs --epsilons")
        values = _parse_values(args.epsilons)
    else:
        if not args.lambdas:
            raise GanLocalError(f"{args.mode} sweep needs --lambdas")
        values = _parse_values(args.lambdas)
    rows, qdump = proj.sweep(
        args.mode, values, pairs=args.pairs, part=args.part, rho_ratio=args.rho_ratio
    )
    proj.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = proj.out_dir / f"sweep_{args.mode}.csv"
    project.write_sweep_csv(rows, csv_path)
    from .ndio import write_archive

    (proj.out_dir / f"sweep_{args.mode}_q.zip").write_bytes(write_archive(qdump))
    if args.plot:
        _plot_sweep(rows, proj.out_dir / f"sweep_{args.mode}.png")
    print(f"wrote {csv_path}")
    return 0


def _plot_sweep(rows: list[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_value: dict[float, list[tuple[float, float]]] = {}
    for r in rows:
        if r["in_mse"] is None or r["out_mse"] is None:
            continue
        by_value.setdefault(r["epsilon_or_lambda"], []).append((r["in_mse"], r["out_mse"]))
    xs, ys = [], []
    for v in sorted(by_value):
        pts = np.array(by_value[v])
        xs.append(pts[:, 1].mean())
        ys.append(pts[:, 0].mean())
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(xs, ys, "o-")
    ax.set_xlabel("Out-MSE")
    ax.set_ylabel("In-MSE")
    ax.set_title(rows[0]["mode"] if rows else "sweep")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _load_image_set(path: Path) -> np.ndarray:
    """Directory of PNGs or an array archive -> (n, 3, h, w) float array."""
    from PIL import Image

    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".png")
        if not files:
            raise GanLocalError(f"no PNG images under {path}")
        imgs = [
            np.asarray(Image.open(p).convert("RGB"), dtype=np.float32).transpose(2, 0, 1)
            / 255.0
            for p in files
        ]
        return np.stack(imgs)
    from .ndio import read_archive

    arrays = read_archive(path.read_bytes())
    return np.concatenate([arrays[k] for k in sorted(arrays)])


def cmd_frechet(args: argparse.Namespace) -> int:
    a = _load_image_set(Path(args.set_a))
    b = _load_image_set(Path(args.set_b))
    stats_a = metrics.gaussian_stats(metrics.pooled_features(a))
    stats_b = metrics.gaussian_stats(metrics.pooled_features(b))
    print(json.dumps({"frechet": metrics.frechet_distance(stats_a, stats_b)}))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    proj = project.load_project(_data_dir(args))
    app = create_app(proj)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganlocal")
    parser.add_argument("--data", help="project directory (default: $GANLOCAL_DATA)")
    parser.add_argument("--json", action="store_true", help="JSON errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render samples and export captures/styles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=project.DEFAULT_SAMPLE_COUNT)
    p.add_argument("--k", type=int, default=project.DEFAULT_K)
    p.add_argument("--base-layer", type=int, default=None)
    p.add_argument("--cluster-seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("cluster", help="spherical k-means at the base layer")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("attribute", help="attribution matrices for all layers")
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("edit", help="one local edit with locality report")
    p.add_argument("--target-seed", type=int, required=True)
    p.add_argument("--ref-seed", type=int, required=True)
    p.add_argument("--part", required=True)
    p.add_argument("--mode", choices=editor.MODES, default="sequential")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--rho-ratio", type=float, default=editor.DEFAULT_RHO_RATIO)
    p.add_argument("--out", default=None, help="output folder name under out/")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("sweep", help="epsilon or lambda grid over many pairs")
    p.add_argument("--mode", choices=editor.MODES, default="sequential")
    p.add_argument("--epsilons", default=None, help="comma-separated values")
    p.add_argument("--lambdas", default=None, help="comma-separated values")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--part", default="cluster-0-part")
    p.add_argument("--rho-ratio", type=float, default=editor.DEFAULT_RHO_RATIO)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("frechet", help="Fréchet distance between two image sets")
    p.add_argument("set_a")
    p.add_argument("set_b")
    p.set_defaults(func=cmd_frechet)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GanLocalError, OSError, KeyError, ValueError) as exc:
        if args.json:
            payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
            print(json.dumps(payload), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
