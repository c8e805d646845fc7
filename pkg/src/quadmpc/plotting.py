"""SVG line charts of a run: per-axis position error and the four inputs."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from quadmpc.export import write_atomic  # noqa: E402
from quadmpc.sim import position_errors  # noqa: E402

# fixed ids and no timestamp so identical runs give identical files
_RC = {"svg.hashsalt": "quadmpc", "svg.fonttype": "path"}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return write_atomic(path, buf.getvalue())


def plot_errors(trace, path, title: str = ""):
    t = trace[:, 0]
    err = position_errors(trace)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
        for i, (ax, name) in enumerate(zip(axes, "xyz")):
            ax.plot(t, err[:, i], lw=1.2)
            ax.axhline(0.0, color="0.6", lw=0.8)
            ax.set_ylabel(f"e_{name} [m]")
            ax.grid(alpha=0.3)
        axes[-1].set_xlabel("t [s]")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_inputs(trace, path, title: str = ""):
    t = trace[:, 0]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        for i in range(4):
            ax.step(t, trace[:, 16 + i], where="post", lw=1.0, label=f"u{i + 1}")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("input")
        ax.set_ylim(-0.2, max(5.2, float(np.max(trace[:, 16:20], initial=0.0)) + 0.2))
        ax.legend(ncol=4, loc="upper right", fontsize="small")
        ax.grid(alpha=0.3)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)
