"""Deterministic synthetic datasets bundled with the package.

``small``: 40 business days, 6 assets in two sectors, one macro indicator and
two news entities.  ``supply_chain``: a hub supplier feeding a four-asset
sector cluster plus an unrelated sector, for root-cause tracing checks.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .artifacts import atomic_write_text

DATA_DIR = Path(__file__).parent / "data"
FIXTURES = ("small", "supply_chain")

_SMALL_CONFIG = """\
# 40-day, 6-asset synthetic fixture
prices: prices.csv
sentiment: sentiment.csv
macro: macro.csv
knowledge: knowledge.csv
embeddings: embeddings.txt
comention: comention.csv
window: 30
vol_window: 10
corr_window: 20
horizon: 5
top_k: 4
K: 10
trials: 20
seed: 0
"""

_SUPPLY_CONFIG = """\
# hub supplier feeding a sector cluster
prices: prices.csv
sentiment: sentiment.csv
knowledge: knowledge.csv
window: 30
vol_window: 10
corr_window: 20
horizon: 5
top_k: 2
K: 8
trials: 20
seed: 0
# trials sample their shock date from every day with forward returns
eval_dates: [2022-02-14, 2022-02-15, 2022-02-16, 2022-02-17, 2022-02-18,
             2022-02-21, 2022-02-22, 2022-02-23, 2022-02-24, 2022-02-25]
shock:
  multiplier: 3.0
  sentiment_delta: -0.5
  targets: [HUB]
"""


def fixture_path(name: str) -> Path:
    """Directory of a bundled fixture; its ``config.yaml`` uses relative paths."""
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    return DATA_DIR / name


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _prices(dates, returns: dict[str, np.ndarray], rng) -> list[tuple]:
    rows = []
    for t, ret in returns.items():
        close = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(ret[1:])]))
        vol = 1_000_000 * (1.0 + 0.25 * np.abs(rng.standard_normal(len(dates))))
        for d, c, v in zip(dates, close, vol):
            rows.append((d, t, f"{c:.4f}", int(v)))
    return sorted(rows)


def _sentiment(dates, returns: dict[str, np.ndarray], rng, p_missing: float = 0.2) -> list[tuple]:
    rows = []
    for t, ret in returns.items():
        for i, d in enumerate(dates):
            if rng.random() < p_missing:
                continue
            for _ in range(int(rng.integers(1, 3))):
                pol = float(np.tanh(25.0 * ret[i] + 0.3 * rng.standard_normal()))
                rows.append((d, t, f"{pol:.4f}"))
    return sorted(rows)


def small_dataset(seed: int = 7) -> dict[str, str]:
    """File name -> text for the 40-day, 6-asset fixture."""
    rng = np.random.default_rng(seed)
    dates = [d.date().isoformat() for d in pd.bdate_range("2022-01-03", periods=40)]
    n = len(dates)
    market = 0.008 * rng.standard_normal(n)
    sectors = {"tech": 0.010 * rng.standard_normal(n), "energy": 0.010 * rng.standard_normal(n)}
    members = {"AAA": "tech", "BBB": "tech", "CCC": "tech", "DDD": "energy", "EEE": "energy", "FFF": "energy"}
    returns = {t: market + sectors[s] + 0.006 * rng.standard_normal(n) + 0.0005 for t, s in members.items()}
    rate = 1.5 + np.cumsum(0.01 * rng.standard_normal(n))

    files = {
        "prices.csv": _csv(["date", "ticker", "close", "volume"], _prices(dates, returns, rng)),
        "sentiment.csv": _csv(["date", "ticker", "polarity"], _sentiment(dates, returns, rng)),
        "macro.csv": _csv(["date", "indicator_id", "value"],
                          [(d, "RATE", f"{v:.4f}") for d, v in zip(dates, rate)]),
    }
    knowledge = [("AAA", "BBB", "supplier", 0.8), ("BBB", "CCC", "partner", 0.6),
                 ("DDD", "EEE", "supplier", 0.7), ("EEE", "FFF", "partner", 0.5),
                 ("CCC", "DDD", "customer", 0.4), ("RATE", "DDD", "exposure", 0.3)]
    files["knowledge.csv"] = _csv(["src", "dst", "relation", "weight"], knowledge)

    base = {"tech": rng.standard_normal(8), "energy": rng.standard_normal(8), "macro": rng.standard_normal(8)}
    ents = {**members, "RATE": "macro", "NEWS_CHIPS": "tech", "NEWS_OIL": "energy"}
    lines = []
    for e, s in ents.items():
        vec = base[s] + 0.5 * rng.standard_normal(8)
        lines.append(" ".join([e] + [f"{x:.5f}" for x in vec]))
    files["embeddings.txt"] = "\n".join(lines) + "\n"

    pool = [("AAA", "NEWS_CHIPS"), ("BBB", "NEWS_CHIPS"), ("CCC", "NEWS_CHIPS"), ("DDD", "NEWS_OIL"),
            ("EEE", "NEWS_OIL"), ("FFF", "NEWS_OIL"), ("AAA", "CCC"), ("DDD", "FFF"), ("RATE", "NEWS_OIL")]
    rows = []
    for d in dates:
        for j in sorted(rng.choice(len(pool), size=3, replace=False)):
            rows.append((d, *pool[int(j)]))
    files["comention.csv"] = _csv(["date", "entity_a", "entity_b"], rows)
    files["config.yaml"] = _SMALL_CONFIG
    return files


def supply_chain_dataset(seed: int = 11) -> dict[str, str]:
    """File name -> text for the hub-and-cluster fixture."""
    rng = np.random.default_rng(seed)
    dates = [d.date().isoformat() for d in pd.bdate_range("2022-01-03", periods=45)]
    n = len(dates)
    hub = 0.012 * rng.standard_normal(n)
    cluster = 0.010 * rng.standard_normal(n)
    other = 0.010 * rng.standard_normal(n)
    returns = {"HUB": hub + 0.0004}
    for t in ("CL1", "CL2", "CL3", "CL4"):
        returns[t] = cluster + 0.007 * rng.standard_normal(n) + 0.0006
    for t in ("OT1", "OT2", "OT3"):
        returns[t] = other + 0.007 * rng.standard_normal(n) + 0.0003

    files = {
        "prices.csv": _csv(["date", "ticker", "close", "volume"], _prices(dates, returns, rng)),
        "sentiment.csv": _csv(["date", "ticker", "polarity"], _sentiment(dates, returns, rng)),
    }
    # uneven dependency on the hub
    knowledge = [("HUB", t, "supplier", w) for t, w in (("CL1", 0.9), ("CL2", 0.6), ("CL3", 0.45), ("CL4", 0.3))]
    knowledge += [("OT1", "OT2", "partner", 0.6), ("OT2", "OT3", "partner", 0.6)]
    files["knowledge.csv"] = _csv(["src", "dst", "relation", "weight"], knowledge)
    files["config.yaml"] = _SUPPLY_CONFIG
    return files


GENERATORS = {"small": small_dataset, "supply_chain": supply_chain_dataset}


def write_fixture(name: str, outdir: Path | str) -> Path:
    """Regenerate a fixture into ``outdir`` and return the config path."""
    if name not in GENERATORS:
        raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    outdir = Path(outdir)
    for fname, text in GENERATORS[name]().items():
        atomic_write_text(outdir / fname, text)
    return outdir / "config.yaml"


if __name__ == "__main__":  # pragma: no cover
    for name in FIXTURES:
        print(write_fixture(name, DATA_DIR / name))
