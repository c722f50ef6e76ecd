"""Render the plots from the CLI outputs written by reproduce.sh.

Usage: python3 scripts/plots.py OUT_DIR
"""

import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

ROOT = Path(__file__).resolve().parent.parent


def horizons(run_dir):
    with open(run_dir / "summary.json") as f:
        return pd.DataFrame(json.load(f)["horizons"])


def save(fig, out, name):
    fig.tight_layout()
    fig.savefig(out / name, dpi=150)
    plt.close(fig)


def sensitivities(out, figs):
    df = pd.read_csv(out / "sensitivities" / "sensitivities.csv").sort_values("bus")
    fig, ax = plt.subplots(figsize=(10, 3.5))
    ax.bar(df["bus"], df["s_active"], label="active")
    ax.bar(df["bus"], df["s_reactive"], alpha=0.6, label="reactive")
    ax.set_xlabel("bus")
    ax.set_ylabel("voltage sensitivity")
    ax.legend()
    save(fig, figs, "sensitivities.png")


def satisfaction(figs):
    with open(ROOT / "scenarios" / "twenty_station.toml", "rb") as f:
        sc = tomllib.load(f)
    a, w = sc["satisfaction"]["alpha"], sc["satisfaction"]["omega"]
    e = sc["storage"]["capacity"]
    phi = np.linspace(0, e, 200)
    g = w * phi - a * phi**2 / 2
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(phi, g)
    ax.set_xlabel("aggregate demand (MWh)")
    ax.set_ylabel("satisfaction")
    save(fig, figs, "satisfaction.png")


def schedule(out, figs):
    prices = pd.read_csv(ROOT / "data" / "pjm_day_ahead.csv").iloc[:, -1].to_numpy()
    fig, ax = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for mode in ["sdp", "greedy"]:
        h = horizons(out / mode)
        ax[0].plot(h["horizon"], h["mean_price"], marker="o", label=f"{mode} retail price")
        ax[1].plot(h["horizon"], h["mean_storage"], marker="o", label=f"{mode} storage")
    ax[0].plot(np.arange(1, len(prices) + 1), prices, "k--", label="wholesale")
    ax[0].set_ylabel("$/MWh")
    ax[1].set_ylabel("MWh")
    ax[1].set_xlabel("hour")
    ax[0].legend()
    ax[1].legend()
    save(fig, figs, "schedule.png")


def compare(out, figs):
    df = pd.read_csv(out / "compare" / "compare.csv")
    df = df[df["seed"] != "mean"]
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(df["seed"].astype(int), df["gain_pct"].astype(float))
    ax.set_xlabel("seed")
    ax.set_ylabel("profit gain over greedy (%)")
    save(fig, figs, "profit_gain.png")


def storage_cost(out, figs):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for eta in ["0", "1", "2", "4"]:
        h = horizons(out / "storage_cost" / eta)
        ax.plot(h["horizon"], h["mean_procurement"], marker=".", label=f"storage cost {eta}")
    h = horizons(out / "no_renewables")
    ax.plot(h["horizon"], h["mean_procurement"], "k--", label="no renewables")
    ax.set_xlabel("hour")
    ax.set_ylabel("procurement (MWh)")
    ax.legend()
    save(fig, figs, "procurement.png")


def w_min(out, figs):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for w in sorted((out / "w_min").iterdir(), key=lambda p: float(p.name)):
        h = horizons(w)
        ax.plot(h["horizon"], h["mean_price"], marker=".", label=f"W_min {w.name}")
    ax.set_xlabel("hour")
    ax.set_ylabel("mean retail price ($/MWh)")
    ax.legend()
    save(fig, figs, "price_vs_w_min.png")


def pareto(out, figs):
    front = pd.read_csv(out / "pareto" / "front.csv")
    knees = front[front["is_knee"]]
    fig = plt.figure(figsize=(6, 5))
    ax = fig.add_subplot(projection="3d")
    ax.scatter(front["W"], front["G"], front["F"], s=12, label="front")
    ax.scatter(knees["W"], knees["G"], knees["F"], s=40, c="red", label="knees")
    ax.set_xlabel("profit")
    ax.set_ylabel("satisfaction")
    ax.set_zlabel("impact")
    ax.legend()
    save(fig, figs, "front.png")

    demand = pd.read_csv(out / "pareto" / "front_demand.csv")
    sens = pd.read_csv(out / "sensitivities" / "sensitivities.csv").set_index("bus")["s_active"]
    with open(ROOT / "scenarios" / "twenty_station.toml", "rb") as f:
        buses = tomllib.load(f)["station_map"]["buses"]
    s = np.array([sens[b] for b in buses])
    hi, lo = int(s.argmax()), int(s.argmin())
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for l2, grp in demand.groupby("lambda2"):
        if l2 not in (0.3, 0.4, 0.5):
            continue
        grp = grp.sort_values("lambda3")
        ax.plot(grp["lambda3"], grp[f"d_{hi + 1}"], marker="o", label=f"station {hi + 1}, λ2={l2}")
        ax.plot(grp["lambda3"], grp[f"d_{lo + 1}"], marker="s", ls="--", label=f"station {lo + 1}, λ2={l2}")
    ax.set_xlabel("impact weight λ3")
    ax.set_ylabel("daily demand (MWh)")
    ax.legend(fontsize=7)
    save(fig, figs, "demand_shift.png")


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "out")
    figs = out / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    sensitivities(out, figs)
    satisfaction(figs)
    schedule(out, figs)
    compare(out, figs)
    storage_cost(out, figs)
    w_min(out, figs)
    pareto(out, figs)
    print(f"figures in {figs}")


if __name__ == "__main__":
    main()
