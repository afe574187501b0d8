"""End-to-end orchestration: phantom generation, saliency runs, evaluation.

Every run writes a manifest (the effective config) sufficient to
reproduce it bit-for-bit.  Stage failures re-raise with the stage name
prefixed so CLI errors say where the pipeline stopped.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import anatomy, evaluate, ingest, maps, optimizer, phantom, superpixel
from .config import PipelineConfig, config_text, sweep_values
from .errors import ContractError, TseError


@contextmanager
def _stage(name: str):
    try:
        yield
    except TseError as err:
        raise type(err)(f"stage {name}: {err}") from err


def _n_workers() -> int:
    env = os.environ.get("TSE_THREADS", "")
    limit = os.cpu_count() or 1
    if env:
        try:
            limit = max(1, min(limit, int(env)))
        except ValueError:
            raise ContractError(f"TSE_THREADS must be an integer, got {env!r}") from None
    return limit


def _parallel_map(fn, items):
    workers = min(_n_workers(), max(1, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class PipelineResult:
    spmap: superpixel.SuperpixelMap
    graph: superpixel.RegionGraph
    semantic: anatomy.AnatomyLabeling
    ncl: anatomy.LayerDecomposition
    nsa: anatomy.AnatomyLabeling
    flags: dict
    unary: maps.UnaryMaps
    weights: maps.LayerWeights
    pair_w: np.ndarray
    pinned: np.ndarray
    solve: optimizer.SolveResult
    saliency_values: np.ndarray
    saliency_pixels: np.ndarray


def energy_params(config: PipelineConfig) -> optimizer.EnergyParams:
    return optimizer.EnergyParams(
        alpha=config.alpha,
        beta=config.beta,
        gamma=config.gamma,
        sigma1_sq=config.sigma1_sq,
        sigma2_sq=config.sigma2_sq,
        eps_log=config.eps_log,
        step=config.step,
        max_iters=config.max_iters,
        tol=config.tol,
    )


def tumor_spec(config: PipelineConfig) -> phantom.EllipseSpec:
    return phantom.EllipseSpec(
        center=(config.tumor_center_x, config.tumor_center_y),
        axes=(config.tumor_radius_x, config.tumor_radius_y),
    )


def distractor_spec(config: PipelineConfig) -> phantom.DistractorSpec | None:
    if not config.distractor:
        return None
    return phantom.DistractorSpec(
        center=(config.distractor_center_x, config.distractor_center_y),
        axes=(config.distractor_radius_x, config.distractor_radius_y),
        intensity=config.distractor_intensity,
    )


def phantom_from_config(config: PipelineConfig, seed: int | None = None) -> phantom.PhantomCase:
    return phantom.generate_phantom(
        config.width,
        config.height,
        tumor_spec(config),
        noise_sigma=config.noise_sigma,
        seed=config.seed if seed is None else seed,
        prob_blur=config.prob_blur,
        distractor=distractor_spec(config),
    )


def run_on_arrays(
    image: ingest.Image,
    prob_map: np.ndarray,
    config: PipelineConfig = PipelineConfig(),
    spmap: superpixel.SuperpixelMap | None = None,
) -> PipelineResult:
    """Run the full saliency pipeline on in-memory inputs."""
    with _stage("superpixel"):
        if spmap is None:
            spmap = superpixel.segment(
                image,
                superpixel.SuperpixelParams(
                    kernel_size=config.kernel_size,
                    max_dist=config.max_dist,
                    intensity_weight=config.intensity_weight,
                ),
            )
        graph = superpixel.build_region_graph(image, spmap)
        sa_labels, sp_prime = superpixel.regionize(prob_map, spmap)
        semantic = anatomy.AnatomyLabeling(
            layer_of=sa_labels, prob=sp_prime, source=anatomy.SOURCE_SEMANTIC
        )

    with _stage("anatomy"):
        ncl = anatomy.decompose_nc_layers(
            graph,
            affinity_scale=config.sigma1_sq,
            merge_threshold=config.band_merge_affinity,
        )
        nsa = anatomy.refine_layers(semantic, ncl, graph, config.validity_fraction)
        thresholds = anatomy.FlagThresholds(
            dark_intensity=config.dark_intensity,
            dark_fraction=config.dark_fraction,
            smooth_intensity=config.smooth_intensity,
            smooth_fraction=config.smooth_fraction,
        )
        flags = {}
        for layer in (1, 2, 3, 4):
            members = nsa.members(layer)
            if members.size:
                flags[layer] = anatomy.classify_layer_flag(members, graph, thresholds)
            else:
                flags[layer] = anatomy.LayerFlag.NORMAL

    with _stage("maps"):
        fg = maps.foreground_map(
            graph, nsa, flags, config.eps_foreground,
            config.z_low_sigmas, config.z_high_sigmas,
        )
        ac = maps.adaptive_center(fg, graph)
        center = maps.center_map(ac, graph, config.sigma3_sq)
        nc = maps.boundary_connectivity(graph, config.sigma1_sq)
        weights = maps.layer_weights(nsa, graph, config.validity_fraction)
        if config.background_variant == "bg_nc2":
            background = maps.background_map_nc_only(nc)
        elif config.background_variant == "bg_full":
            background = maps.background_map(nc, weights, center, flags, nsa)
        else:
            raise ContractError(
                f"unknown background_variant {config.background_variant!r}"
            )
        unary = maps.UnaryMaps(
            foreground=fg,
            center=center,
            background=background,
            adaptive_center=ac,
            boundary_nc=nc,
        )

    with _stage("optimizer"):
        params = energy_params(config)
        pair_w = optimizer.pairwise_weights(
            graph, params, adjacency_only=config.pairwise_adjacent_only
        )
        pinned = optimizer.build_constraint(nsa)
        solved = optimizer.solve(unary, pair_w, pinned, params)
        pixels = maps.render_saliency(solved.s, spmap.region_of)

    return PipelineResult(
        spmap=spmap,
        graph=graph,
        semantic=semantic,
        ncl=ncl,
        nsa=nsa,
        flags=flags,
        unary=unary,
        weights=weights,
        pair_w=pair_w,
        pinned=pinned,
        solve=solved,
        saliency_values=solved.s,
        saliency_pixels=pixels,
    )


def _require_path(config: PipelineConfig, key: str) -> Path:
    value = getattr(config, key)
    if not value:
        raise ContractError(f"config key '{key}' is required but unset")
    path = Path(value)
    if not path.exists():
        raise ContractError(f"config key '{key}' points to a missing file: {path}")
    return path


def run_saliency(config: PipelineConfig, out_dir) -> PipelineResult:
    """Load inputs named in the config, run the pipeline, write artifacts."""
    with _stage("ingest"):
        image = ingest.load_image(_require_path(config, "image"))
        prob_map = ingest.load_prob_map(_require_path(config, "prob_map"))
        spmap = None
        if config.superpixels:
            spmap = superpixel.load_superpixel_map(_require_path(config, "superpixels"))

    result = run_on_arrays(image, prob_map, config, spmap)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(config_text(config), encoding="utf-8")
    superpixel.save_superpixel_map(out / "superpixels.fpl", result.spmap)
    ingest.write_region_vector(out / "nsa.fpl", result.nsa.layer_of.astype(np.float64))
    ingest.write_fplanes(out / "sp_prime.fpl", result.nsa.prob[:, None, :])
    region_of = result.spmap.region_of
    for name, vec in (
        ("foreground", result.unary.foreground),
        ("center", result.unary.center),
        ("background", result.unary.background),
        ("boundary_nc", result.unary.boundary_nc),
        ("saliency", result.saliency_values),
    ):
        ingest.write_region_vector(out / f"{name}.fpl", vec)
        ingest.save_image(out / f"{name}.pgm", maps.render_region_values(vec, region_of))
    return result


def run_eval(config: PipelineConfig, saliency_dir, gt_dir, out_dir) -> dict:
    """Score every saliency map against its ground truth and write CSVs."""
    sal_dir, gts = Path(saliency_dir), Path(gt_dir)
    sal_names = {p.stem for p in sal_dir.glob("*.pgm")}
    gt_names = {p.stem for p in gts.glob("*.pgm")}
    if not sal_names and not gt_names:
        raise ContractError(
            f"no .pgm files found in {sal_dir} or {gts}; nothing to evaluate"
        )
    if sal_names != gt_names:
        only_sal = sorted(sal_names - gt_names)
        only_gt = sorted(gt_names - sal_names)
        raise ContractError(
            "saliency and ground-truth files do not match: "
            f"only in saliency dir: {only_sal}; only in gt dir: {only_gt}"
        )

    names = sorted(sal_names)

    def score(name: str) -> evaluate.ImageEval:
        sm = ingest.load_image(sal_dir / f"{name}.pgm").pixels
        gt = ingest.load_mask(gts / f"{name}.pgm")
        return evaluate.evaluate_pair(sm, gt, config.theta_sq)

    evals = _parallel_map(score, names)
    rows = list(zip(names, evals))
    curve = evaluate.mean_curve([ev.pr for ev in evals])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluate.write_summary_csv(out / "summary.csv", rows)
    evaluate.write_pr_curve_csv(out / "pr_curve.csv", curve)
    return {
        "rows": rows,
        "curve": curve,
        "mean_f": float(np.mean([ev.f_measure for ev in evals])),
        "mean_mae": float(np.mean([ev.mae for ev in evals])),
    }


def write_phantom_dataset(config: PipelineConfig, out_dir) -> list:
    """Generate ``count`` phantom cases under images/, probs/, gts/."""
    out = Path(out_dir)
    for sub in ("images", "probs", "gts"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(config.count):
        case = phantom_from_config(config, seed=config.seed + i)
        name = f"case_{i:03d}"
        ingest.save_image(out / "images" / f"{name}.pgm", case.image)
        ingest.save_prob_map(out / "probs" / f"{name}.fpl", case.prob_map)
        ingest.save_mask(out / "gts" / f"{name}.pgm", case.ground_truth)
        names.append(name)
    (out / "manifest.txt").write_text(config_text(config), encoding="utf-8")
    return names


BG_VARIANTS = ("bg_nc2", "bg_full")


def run_ablation(config: PipelineConfig, out_dir) -> dict:
    """Run both background variants on the same phantoms; write a
    side-by-side comparison CSV."""
    from dataclasses import replace

    cases = [
        phantom_from_config(config, seed=config.seed + i) for i in range(config.count)
    ]

    def evaluate_variant(variant: str) -> list:
        cfg = replace(config, background_variant=variant)

        def one(case):
            result = run_on_arrays(case.image, case.prob_map, cfg)
            return evaluate.evaluate_pair(
                result.saliency_pixels, case.ground_truth, config.theta_sq
            )

        return _parallel_map(one, cases)

    by_variant = {variant: evaluate_variant(variant) for variant in BG_VARIANTS}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["image,metric," + ",".join(BG_VARIANTS)]
    for i in range(len(cases)):
        name = f"case_{i:03d}"
        for metric in ("f_measure", "mae"):
            cells = [f"{getattr(by_variant[v][i], metric):.6f}" for v in BG_VARIANTS]
            lines.append(f"{name},{metric}," + ",".join(cells))
    summary = {}
    for metric in ("f_measure", "mae"):
        cells = []
        for v in BG_VARIANTS:
            mean = float(np.mean([getattr(ev, metric) for ev in by_variant[v]]))
            summary[f"{metric}_{v}"] = mean
            cells.append(f"{mean:.6f}")
        lines.append(f"mean,{metric}," + ",".join(cells))
    (out / "ablation.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    (out / "manifest.txt").write_text(config_text(config), encoding="utf-8")
    return summary


def run_sweep(config: PipelineConfig, out_dir) -> list:
    """Grid search over the declared alpha/beta/gamma lists on phantom
    cases; segmentation and maps are shared across combinations."""
    from dataclasses import replace

    alphas = sweep_values(config.sweep_alpha, "sweep_alpha")
    betas = sweep_values(config.sweep_beta, "sweep_beta")
    gammas = sweep_values(config.sweep_gamma, "sweep_gamma")

    cases = [
        phantom_from_config(config, seed=config.seed + i) for i in range(config.count)
    ]
    prepared = _parallel_map(
        lambda case: run_on_arrays(case.image, case.prob_map, config), cases
    )

    records = []
    for a in alphas:
        for b in betas:
            for g in gammas:
                cfg = replace(config, alpha=a, beta=b, gamma=g)
                params = energy_params(cfg)
                fs, maes = [], []
                for case, prep in zip(cases, prepared):
                    solved = optimizer.solve(prep.unary, prep.pair_w, prep.pinned, params)
                    pixels = maps.render_saliency(solved.s, prep.spmap.region_of)
                    ev = evaluate.evaluate_pair(pixels, case.ground_truth, cfg.theta_sq)
                    fs.append(ev.f_measure)
                    maes.append(ev.mae)
                records.append((a, b, g, float(np.mean(fs)), float(np.mean(maes))))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["alpha,beta,gamma,f_measure,mae"]
    for a, b, g, f, m in records:
        lines.append(f"{a:g},{b:g},{g:g},{f:.6f},{m:.6f}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    (out / "manifest.txt").write_text(config_text(config), encoding="utf-8")
    return records
