"""Figure rendering for metric reports.

The CSV is the contract; the PNG curves are a convenience emitted alongside
it so degradation trends can be eyeballed without extra tooling.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_metrics_figure(rows: list[dict], path) -> None:
    """PSNR and SSIM versus retained-Gaussian percentage, one line per
    object, with the across-object mean emphasized."""
    objects = sorted({r["object"] for r in rows})
    levels = sorted({int(r["level"]) for r in rows}, reverse=True)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for metric, ax in zip(("psnr", "ssim"), axes):
        means = []
        for level in levels:
            values = [float(r[metric]) for r in rows if int(r["level"]) == level]
            means.append(sum(values) / len(values))
        for obj in objects:
            series = {int(r["level"]): float(r[metric]) for r in rows if r["object"] == obj}
            ax.plot(levels, [series[l] for l in levels], color="0.75", linewidth=0.8)
        ax.plot(levels, means, color="C0", marker="o", linewidth=2.0, label="mean")
        ax.set_xlabel("retained Gaussians (%)")
        ax.set_ylabel(metric.upper() + (" (dB)" if metric == "psnr" else ""))
        ax.invert_xaxis()
        ax.legend(loc="lower left", frameon=False)
    fig.tight_layout()
    # fixed metadata keeps re-runs byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": "splatlod"})
    plt.close(fig)
