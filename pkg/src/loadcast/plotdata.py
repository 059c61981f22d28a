"""Response-plot data: a prediction TSV plus a gnuplot script that draws it."""

from __future__ import annotations

from pathlib import Path

from .simulate import Prediction, write_prediction

SPLIT_STYLE = {
    "train": ("#9400d3", "training"),
    "val": ("#1f5fbf", "validation"),
    "test": ("#d62728", "testing"),
    "sim": ("#555555", "simulation"),
}

_SCRIPT = """\
# targets (dashed blue) vs network response (solid green)
set terminal pngcairo size 1200,600
set output '{png}'
set datafile separator "\\t"
set key top left
set xlabel '{xlabel}'
set ylabel '{ylabel}'
set title '{title}'
{shading}
plot '{tsv}' using ($0+1):2 skip 1 with lines dt 2 lc rgb '#1f5fbf' title 'targets', \\
     '{tsv}' using ($0+1):3 skip 1 with lines lc rgb '#2ca02c' title 'response'{points}
"""


def _spans(labels: list[str]) -> list[tuple[str, int, int]]:
    spans = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            spans.append((labels[start], start + 1, i))
            start = i
    return spans


def gnuplot_script(prediction: Prediction, tsv_name: str, png_name: str, title: str = "",
                   xlabel: str = "time step", ylabel: str = "requests (normalized)") -> str:
    """Script plotting targets and outputs with one shaded band per split block.

    The x axis counts predicted steps from 1, so step 1 is the first row of the
    TSV (whose INDEX column keeps the original series position).
    """
    shading = []
    points = []
    for n, (label, lo, hi) in enumerate(_spans(prediction.labels), start=1):
        color, name = SPLIT_STYLE[label]
        shading.append(
            f"set object {n} rect from {lo - 0.5},graph 0 to {hi + 0.5},graph 1 "
            f"fc rgb '{color}' fs transparent solid 0.08 noborder behind"
        )
    for label in dict.fromkeys(prediction.labels):
        color, name = SPLIT_STYLE[label]
        points.append(
            f", \\\n     '{tsv_name}' using ($0+1):(strcol(4) eq '{label}' ? $2 : 1/0) skip 1 "
            f"with points pt 2 lc rgb '{color}' title '{name}'"
        )
    return _SCRIPT.format(png=png_name, xlabel=xlabel, ylabel=ylabel, title=title or tsv_name,
                          shading="\n".join(shading), tsv=tsv_name, points="".join(points))


def emit_plot_data(prediction: Prediction, out, title: str = "") -> tuple[Path, Path]:
    """Write ``<out>.tsv`` and ``<out>.gp``; returns both paths.

    ``out`` may carry a ``.tsv`` suffix, which is stripped before adding the
    two extensions.
    """
    if len(prediction) == 0:
        raise ValueError("nothing to plot: prediction is empty")
    out = Path(out)
    stem = out.with_suffix("") if out.suffix in (".tsv", ".gp") else out
    tsv = stem.with_name(stem.name + ".tsv")
    gp = stem.with_name(stem.name + ".gp")
    tsv.parent.mkdir(parents=True, exist_ok=True)
    write_prediction(prediction, tsv)
    gp.write_text(gnuplot_script(prediction, tsv.name, stem.name + ".png", title))
    return tsv, gp
