"""PSNR, noise-map statistics, the loss-subset ablation and static reports."""

from __future__ import annotations

import html
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage, stats

from .core import STORAGE_PEAK, ImagePatch, NoiseMap, TrainSchedule, UnpairedCorpus, jsonable
from .pipeline import extract_noise_maps
from .synthesis import NoiseSpec, add_noise, with_seed
from .training import ABLATION_MASKS, train

log = logging.getLogger(__name__)

PSNR_INF = math.inf
HIST_BINS = 64


def _values(x):
    return x.values if isinstance(x, (ImagePatch, NoiseMap)) else np.asarray(x, dtype=np.float64)


def psnr(a, b, peak: float = STORAGE_PEAK) -> float:
    """10*log10(peak^2 / MSE); ``math.inf`` when the inputs are identical."""
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak ** 2 / mse)


def mean_psnr(xs, ys, peak: float = STORAGE_PEAK) -> float:
    return float(np.mean([psnr(x, y, peak) for x, y in zip(xs, ys)]))


def gradient_magnitude(patch) -> np.ndarray:
    v = _values(patch).mean(axis=2)
    return np.hypot(ndimage.sobel(v, axis=0, mode="reflect"),
                    ndimage.sobel(v, axis=1, mode="reflect"))


def edge_correlation(noise, source) -> float:
    """|Pearson r| between a noise map (channel-averaged) and its source's edge strength.

    Returns 0 when either side is constant.
    """
    n = _values(noise).mean(axis=2).ravel()
    e = gradient_magnitude(source).ravel()
    if n.std() == 0 or e.std() == 0:
        return 0.0
    return float(abs(np.corrcoef(n, e)[0, 1]))


@dataclass(frozen=True)
class NoiseStats:
    mean: float
    std: float
    min: float
    max: float
    histogram: tuple[float, ...]
    bin_edges: tuple[float, ...]
    edge_correlation: float | None
    skewness: float
    excess_kurtosis: float

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("histogram")
        d.pop("bin_edges")
        return d


def noise_stats(maps: Sequence[NoiseMap], sources: Sequence[ImagePatch] | None = None,
                scale: float = 1.0) -> NoiseStats:
    """Pooled statistics over every pixel of ``maps`` (values divided by ``scale``).

    The edge-correlation score is the mean |Pearson r| of each map with the
    gradient magnitude of its source; ``None`` when no sources are given.
    """
    if not maps:
        raise ValueError("noise_stats needs at least one map")
    pooled = np.concatenate([_values(m).ravel() for m in maps]) / scale
    counts, edges = np.histogram(pooled, bins=HIST_BINS)
    corr = None
    if sources is not None:
        if len(sources) != len(maps):
            raise ValueError("sources must align with maps")
        corr = float(np.mean([edge_correlation(m, s) for m, s in zip(maps, sources)]))
    std = float(pooled.std())
    skew = float(stats.skew(pooled)) if std > 0 else 0.0
    kurt = float(stats.kurtosis(pooled)) if std > 0 else 0.0
    return NoiseStats(
        mean=float(pooled.mean()), std=std, min=float(pooled.min()), max=float(pooled.max()),
        histogram=tuple((counts / counts.sum()).tolist()), bin_edges=tuple(edges.tolist()),
        edge_correlation=corr, skewness=skew, excess_kurtosis=kurt,
    )


def normality_check(s: NoiseStats) -> dict:
    """Coarse, reported-only sanity check on an extracted Gaussian noise histogram."""
    return {"skewness": s.skewness, "excess_kurtosis": s.excess_kurtosis,
            "passes": abs(s.skewness) < 0.5 and abs(s.excess_kurtosis) < 1.0}


# ---------------------------------------------------------------------------
# held-out evaluation

@dataclass(frozen=True)
class HeldOut:
    """Noisy probe patches with their ground truth (never seen in training)."""

    noisy: tuple[ImagePatch, ...]
    clean: tuple[ImagePatch, ...]
    truth: tuple[NoiseMap, ...]


def make_held_out(clean: Sequence[ImagePatch], spec: NoiseSpec, seed: int) -> HeldOut:
    seeds = np.random.SeedSequence(seed).generate_state(len(clean))
    noisy, truth = zip(*(add_noise(p, with_seed(spec, int(s))) for p, s in zip(clean, seeds)))
    return HeldOut(tuple(noisy), tuple(clean), tuple(truth))


def evaluate_generator(G, held: HeldOut, mean_subtract: bool = False) -> dict:
    """Summary of how ``G`` behaves on held-out data, in [0, 1] working units."""
    maps = extract_noise_maps(G, held.noisy, mean_subtract)
    clean_resp = extract_noise_maps(G, held.clean, mean_subtract)
    s = noise_stats(maps, held.clean, scale=STORAGE_PEAK)
    estimates = [ImagePatch(n.values - m.values) for n, m in zip(held.noisy, maps)]
    gain = mean_psnr(estimates, held.clean) - mean_psnr(held.noisy, held.clean)
    return {
        "clean_response_mean_abs": float(np.mean([np.abs(m.values).mean() for m in clean_resp])
                                         / STORAGE_PEAK),
        "edge_correlation": s.edge_correlation,
        "extracted_mean": s.mean,
        "extracted_std": s.std,
        "psnr_gain_db": float(gain),
        "normality": normality_check(s),
    }


@dataclass
class VariantResult:
    name: str
    summary: dict
    history: list[dict] = field(default_factory=list)
    generator: object = None


def run_ablation(corpus: UnpairedCorpus, schedule: TrainSchedule, held: HeldOut,
                 gen_config=None, disc_config=None, seed: int = 0,
                 variants: Sequence[str] = ("net1", "net2", "net3"), out_dir=None,
                 mean_subtract: bool = False, betas=(0.5, 0.999)) -> dict[str, VariantResult]:
    """Train each variant with the same seed and data order, differing only in
    which self-consistency weights are held at zero."""
    results = {}
    for name in variants:
        mask = ABLATION_MASKS[name]
        vdir = Path(out_dir) / name if out_dir is not None else None
        res = train(corpus, schedule, gen_config, disc_config, seed=seed, out_dir=vdir,
                    loss_mask=mask, mean_subtract=mean_subtract, betas=betas)
        summary = evaluate_generator(res.generator, held, mean_subtract)
        summary["loss_mask"] = list(mask)
        summary["steps"] = len(res.history)
        results[name] = VariantResult(name, summary, res.history, res.generator)
        log.info("%s: %s", name, summary)
    return results


# ---------------------------------------------------------------------------
# reports

SUMMARY_FIELDS = ("clean_response_mean_abs", "edge_correlation", "extracted_std", "psnr_gain_db")


def _round(v):
    if isinstance(v, float):
        return None if math.isnan(v) else round(v, 6)
    return v


def summary_table(stats: dict[str, dict]) -> dict:
    table = {}
    for name in sorted(stats):
        table[name] = {k: _round(stats[name].get(k)) for k in SUMMARY_FIELDS}
    return table


def _render_grid(path: Path, triples):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = len(triples)
    fig, axes = plt.subplots(rows, 3, figsize=(6, 2 * rows), squeeze=False)
    for r, (noisy, noise, est) in enumerate(triples):
        for c, (img, title, rng) in enumerate((
                (noisy, "noisy", (0, 255)),
                (noise, "extracted noise", None),
                (est, "clean estimate", (0, 255)))):
            v = _values(img)
            v = v[:, :, 0] if v.shape[2] == 1 else np.clip(v / 255.0, 0, 1)
            kw = {"cmap": "gray"}
            if rng is not None and v.ndim == 2:
                kw.update(vmin=rng[0], vmax=rng[1])
            axes[r, c].imshow(v, **kw)
            axes[r, c].set_axis_off()
            if r == 0:
                axes[r, c].set_title(title, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _render_curves(path: Path, logs: dict[str, list[dict]]):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    keys = ("l_gan_d", "l_gan_g", "l_clean", "l_pn", "l_rec")
    fig, axes = plt.subplots(1, len(keys), figsize=(3 * len(keys), 2.6))
    for ax, key in zip(axes, keys):
        for name in sorted(logs):
            rows = logs[name]
            ax.plot([r["step"] for r in rows], [r[key] for r in rows], label=name, lw=0.8)
        ax.set_title(key, fontsize=9)
        ax.set_yscale("symlog", linthresh=1e-4)
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _render_table_png(path: Path, table: dict):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = list(table)
    cells = [[f"{table[n][k]:.4f}" if table[n][k] is not None else "-" for k in SUMMARY_FIELDS]
             for n in names]
    fig, ax = plt.subplots(figsize=(8, 0.5 + 0.35 * len(names)))
    ax.set_axis_off()
    ax.table(cellText=cells, rowLabels=names, colLabels=list(SUMMARY_FIELDS), loc="center")
    fig.savefig(path, dpi=100, bbox_inches="tight")
    plt.close(fig)


def report(logs: dict[str, list[dict]], stats: dict[str, dict], out_dir,
           grids: dict[str, list] | None = None) -> Path:
    """Write loss curves, per-variant image grids and a summary table.

    Files: ``loss_curves.png``, ``grid_<name>.png``, ``summary.json``,
    ``summary.html`` and ``summary.png``. ``summary.json`` and ``summary.html``
    are byte-stable for identical inputs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grids = grids or {}
    have_logs = any(rows for rows in logs.values())

    table = summary_table(stats)
    (out_dir / "summary.json").write_text(json.dumps(jsonable(table), indent=2, sort_keys=True)
                                          + "\n")
    parts = ["<!DOCTYPE html>", "<html><head><meta charset='utf-8'><title>SCGAN report</title>"
             "</head><body>", "<h1>Noise-model report</h1>"]
    if have_logs:
        _render_curves(out_dir / "loss_curves.png", {k: v for k, v in logs.items() if v})
        parts.append("<h2>Training losses</h2><img src='loss_curves.png'>")
    else:
        parts.append("<h2>Training losses</h2><p class='no-data'>no data</p>")
    if table:
        _render_table_png(out_dir / "summary.png", table)
        parts.append("<h2>Summary</h2><table border='1'><tr><th>variant</th>"
                     + "".join(f"<th>{k}</th>" for k in SUMMARY_FIELDS) + "</tr>")
        for name, row in table.items():
            cells = "".join(f"<td>{'-' if row[k] is None else f'{row[k]:.6f}'}</td>"
                            for k in SUMMARY_FIELDS)
            parts.append(f"<tr><td>{html.escape(name)}</td>{cells}</tr>")
        parts.append("</table>")
    else:
        parts.append("<h2>Summary</h2><p class='no-data'>no data</p>")
    for name in sorted(grids):
        _render_grid(out_dir / f"grid_{name}.png", grids[name])
        parts.append(f"<h3>{html.escape(name)}</h3><img src='grid_{html.escape(name)}.png'>")
    parts.append("</body></html>")
    (out_dir / "summary.html").write_text("\n".join(parts) + "\n")
    return out_dir


def grid_triples(G, noisy: Sequence[ImagePatch], count: int = 4, mean_subtract: bool = False):
    picked = list(noisy[:count])
    maps = extract_noise_maps(G, picked, mean_subtract)
    return [(n, m, ImagePatch(n.values - m.values)) for n, m in zip(picked, maps)]
