"""Figure rendering for run reports.

Only the report path imports this module, and matplotlib is loaded inside
the functions, so the numerical core never needs it.  A figure description is a
plain dict:

    {"kind": "lines", "xlabel": ..., "ylabel": ..., "logx": bool,
     "hline": value or None,
     "series": [{"label": ..., "x": [...], "y": [...], "yerr": [...]}]}

or ``{"kind": "matrix", "matrix": [[...]], "labels": [...], "title": ...}``.
"""

from __future__ import annotations

GOLDEN = (5 ** 0.5 - 1) / 2
WIDTH = 5.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def render(figure: dict, path) -> str:
    """Draw ``figure`` to ``path`` (PNG, no timestamp metadata) and return the path."""
    plt = _pyplot()
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(WIDTH, WIDTH * GOLDEN))
        if figure["kind"] == "lines":
            for s in figure["series"]:
                if s.get("yerr") is not None:
                    ax.errorbar(s["x"], s["y"], yerr=s["yerr"], marker="o", capsize=2,
                                label=s.get("label"))
                else:
                    ax.plot(s["x"], s["y"], marker="o", label=s.get("label"))
            if figure.get("hline") is not None:
                ax.axhline(figure["hline"], color="k", lw=0.8, ls="--", label="target")
            if figure.get("logx"):
                ax.set_xscale("log")
            ax.set_xlabel(figure.get("xlabel", ""))
            ax.set_ylabel(figure.get("ylabel", ""))
            if any(s.get("label") for s in figure["series"]) or figure.get("hline") is not None:
                ax.legend(frameon=False)
        elif figure["kind"] == "matrix":
            im = ax.imshow(figure["matrix"], cmap="viridis")
            labels = figure.get("labels", [])
            ax.set_xticks(range(len(labels)), labels)
            ax.set_yticks(range(len(labels)), labels)
            fig.colorbar(im, ax=ax)
        else:
            raise ValueError(f"unknown figure kind {figure['kind']!r}")
        if figure.get("title"):
            ax.set_title(figure["title"])
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return str(path)
