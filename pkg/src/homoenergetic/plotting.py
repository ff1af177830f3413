"""Figures for the CLI report path. Everything renders to files with the Agg backend."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "lines.linewidth": 1.4,
}
# no timestamps or version strings, so reruns produce identical files
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_moments(t, M, path, title="second moments"):
    labels = ["M11", "M22", "M33", "M12", "M13", "M23"]
    idx = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for lab, (i, j) in zip(labels, idx):
            ax.plot(t, M[:, i, j], label=lab)
        ax.set_xlabel("t")
        ax.set_ylabel("M")
        ax.set_title(title)
        ax.legend(ncol=3, fontsize=8)
        return _save(fig, path)


def plot_diagnostics(t, energy, cumulant, path, energy_se=None):
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.5))
        ax1.semilogy(t, energy, color="C0")
        if energy_se is not None and np.all(np.isfinite(energy_se)):
            ax1.fill_between(t, energy - 2 * energy_se, energy + 2 * energy_se, color="C0", alpha=0.25)
        ax1.set_ylabel("energy (Tr M)")
        ax2.plot(t, cumulant, color="C3")
        ax2.axhline(0.0, color="k", lw=0.8)
        ax2.set_ylabel("fourth cumulant")
        ax2.set_xlabel("t")
        return _save(fig, path)


def plot_profile(samples, path, bins=80):
    x = np.asarray(samples)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0))
        lim = np.percentile(np.abs(x[:, :2]), 99.5)
        axes[0].hist2d(x[:, 0], x[:, 1], bins=bins, range=[[-lim, lim], [-lim, lim]], cmap="viridis")
        axes[0].set_xlabel("xi1")
        axes[0].set_ylabel("xi2")
        axes[0].set_aspect("equal")
        sd = x.std(axis=0)
        for k in range(3):
            axes[1].hist(x[:, k] / sd[k], bins=bins, density=True, histtype="step", label=f"xi{k + 1}")
        g = np.linspace(-5, 5, 201)
        axes[1].plot(g, np.exp(-g * g / 2) / np.sqrt(2 * np.pi), "k--", lw=0.8, label="Gaussian")
        axes[1].set_yscale("log")
        axes[1].set_xlabel("standardized component")
        axes[1].legend(fontsize=8)
        return _save(fig, path)


def plot_sweep(x, analytic, measured, measured_se, path, xlabel="K/b", ylabel="beta"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, analytic, "k-", label="eigenvalue")
        ax.errorbar(x, measured, yerr=2 * np.asarray(measured_se), fmt="o", color="C1", label="particles")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        return _save(fig, path)


def plot_kernel(x, values, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, values)
        ax.set_xlabel("cos theta")
        ax.set_ylabel("angular part")
        return _save(fig, path)
