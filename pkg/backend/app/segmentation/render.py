"""Timeline strips and hold-time listings."""

from __future__ import annotations

from typing import List, Sequence, Tuple

import pandas as pd

from .storage import PathLike, atomic_write
from .timeline import CLASS_NAMES, SkillClass, Timeline

STRIP_WIDTH = 72


def hold_times(timeline: Timeline) -> pd.DataFrame:
    """Skill segments with their hold duration in seconds; ``NONE`` is left out."""

    rows = [
        {
            "video_id": timeline.video_id,
            "class": seg.label.name,
            "start_frame": seg.start,
            "end_frame": seg.end,
            "frames": seg.duration_frames,
            "seconds": round(seg.duration_seconds(timeline.fps), 2),
        }
        for seg in timeline.segments
        if seg.label != SkillClass.NONE
    ]
    columns = ["video_id", "class", "start_frame", "end_frame", "frames", "seconds"]
    return pd.DataFrame(rows, columns=columns)


def _strip(timeline: Timeline, width: int) -> str:
    cells: List[str] = []
    for seg in timeline.segments:
        size = max(1, round(seg.duration_frames / timeline.n_frames * width))
        glyph = "." if seg.label == SkillClass.NONE else seg.label.name[0]
        cells.append(glyph * size)
    return "|" + "|".join(cells) + "|"


def text_strip(timelines: Sequence[Tuple[str, Timeline]], width: int = STRIP_WIDTH) -> str:
    """Plain-text strips, one per named timeline, each followed by its segment listing."""

    pad = max((len(name) for name, _ in timelines), default=0)
    lines: List[str] = []
    for name, timeline in timelines:
        lines.append(f"{name.ljust(pad)} {_strip(timeline, width)}")
        for seg in timeline.segments:
            lines.append(
                f"{'':{pad}}   {seg.label.name:<5} {seg.start:>6}-{seg.end:<6} "
                f"{seg.duration_seconds(timeline.fps):7.2f} s"
            )
    return "\n".join(lines) + "\n"


def render_svg(timelines: Sequence[Tuple[str, Timeline]], path: PathLike) -> None:
    """Side-by-side strips, one row per timeline, labeled with class and hold seconds."""

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.patches as mpatches
    import matplotlib.pyplot as plt

    color_map = plt.get_cmap("tab10")
    fig, ax = plt.subplots(figsize=(15, 1.0 + 0.8 * len(timelines)))
    for row, (_, timeline) in enumerate(timelines):
        y = len(timelines) - 1 - row
        for seg in timeline.segments:
            start = seg.start / timeline.fps
            length = seg.duration_frames / timeline.fps
            ax.broken_barh([(start, length)], (y + 0.1, 0.8), facecolors=color_map(int(seg.label)))
            if seg.label != SkillClass.NONE:
                ax.text(
                    start + length / 2,
                    y + 0.5,
                    f"{seg.label.name}\n{length:.2f} s",
                    ha="center",
                    va="center",
                    fontsize=7,
                )
    ax.set_yticks([len(timelines) - 0.5 - row for row in range(len(timelines))])
    ax.set_yticklabels([name for name, _ in timelines])
    ax.set_xlabel("time (s)")
    ax.set_xlim(0, max((t.n_frames / t.fps for _, t in timelines), default=1.0))
    handles = [mpatches.Patch(color=color_map(i), label=name) for i, name in enumerate(CLASS_NAMES)]
    ax.legend(handles=handles, loc="upper center", bbox_to_anchor=(0.5, -0.35), ncol=len(CLASS_NAMES), fontsize=7)
    with atomic_write(path, "wb") as handle:
        fig.savefig(handle, format="svg", bbox_inches="tight")
    plt.close(fig)
