"""Bundled benchmark data.

The Taillard benchmark instances are distributed as generator seeds plus a
documented linear congruential generator; the package bundles the
regenerated files (data/taillard/) and can rebuild them from the seed
table below.  taillard_bounds.json carries the widely reported best-known
makespans of the 15x15 set, usable as a reference bound for gap reports.
"""

from __future__ import annotations

import importlib.resources
import json
from pathlib import Path

from .instance import Instance, parse_taillard, serialize_taillard, taillard_instance

# name -> (jobs, machines, time_seed, machine_seed)
TAILLARD_SEEDS = {
    "ta01": (15, 15, 840612802, 398197754),
    "ta02": (15, 15, 1314640371, 386720536),
    "ta03": (15, 15, 1227221349, 316176388),
    "ta04": (15, 15, 342269428, 1806358582),
    "ta05": (15, 15, 1603221416, 1501949241),
    "ta06": (15, 15, 1357584978, 1734077082),
    "ta07": (15, 15, 44531661, 1374316395),
    "ta08": (15, 15, 302545136, 2092186050),
    "ta09": (15, 15, 1153780144, 1393392374),
    "ta10": (15, 15, 73896786, 1544979948),
    "ta11": (20, 15, 533484900, 317419073),
    "ta12": (20, 15, 923840632, 179721932),
    "ta13": (20, 15, 934279219, 1662825250),
    "ta14": (20, 15, 581914867, 356183363),
    "ta15": (20, 15, 366150656, 1723456711),
    "ta16": (20, 15, 307975008, 1235195728),
    "ta17": (20, 15, 870840907, 2120247189),
    "ta18": (20, 15, 1345217434, 1118794551),
    "ta19": (20, 15, 1360348994, 1129677312),
    "ta20": (20, 15, 1010087374, 1583439476),
}


def _data_dir():
    return importlib.resources.files("ginshop.data")


def taillard_names(geometry: str | None = None) -> list[str]:
    names = sorted(TAILLARD_SEEDS)
    if geometry is None:
        return names
    j, m = geometry.split("x")
    return [n for n in names if TAILLARD_SEEDS[n][:2] == (int(j), int(m))]


def load_taillard(name: str) -> Instance:
    """Bundled Taillard instance by name (e.g. "ta01"); falls back to
    regenerating from the seed table if the data file is absent."""
    if name not in TAILLARD_SEEDS:
        raise KeyError(f"unknown Taillard instance {name!r}")
    res = _data_dir() / "taillard" / f"{name}.txt"
    if res.is_file():
        return parse_taillard(res.read_text(encoding="utf-8"))
    J, M, ts, ms = TAILLARD_SEEDS[name]
    return taillard_instance(J, M, ts, ms)


def load_taillard_bounds() -> dict[str, int]:
    res = _data_dir() / "taillard_bounds.json"
    return json.loads(res.read_text(encoding="utf-8"))


def regenerate_data_files(out_dir: Path) -> list[Path]:
    """Rebuild the bundled Taillard files from the seed table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (J, M, ts, ms) in sorted(TAILLARD_SEEDS.items()):
        inst = taillard_instance(J, M, ts, ms)
        path = out_dir / f"{name}.txt"
        path.write_text(serialize_taillard(inst), encoding="utf-8")
        written.append(path)
    return written
