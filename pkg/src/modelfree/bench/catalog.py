"""Built-in scenarios, one TOML file each."""
from __future__ import annotations

from dataclasses import dataclass

from .config import SCENARIO_DIR, read_table

# display order
LABELS = (
    "fig1-nominal",
    "fig2-aged",
    "fig3-fault",
    "fig4-large-spectrum",
    "fig5-6-mimo",
    "fig7-cubic",
    "fig8-9-antiwindup",
    "fig11-ballbeam-bezier",
    "fig12-ballbeam-sine",
    "fig14-tanks",
    "fig15-spring",
    "fig16-nmp-nominal",
    "fig17-18-nmp-const-perturb",
    "fig19-nmp-speed-perturb",
)


@dataclass(frozen=True)
class CatalogEntry:
    label: str
    figure: str
    description: str
    variants: tuple[str, ...]


def catalog() -> list[CatalogEntry]:
    entries = []
    extra = sorted(p.stem for p in SCENARIO_DIR.glob("*.toml") if p.stem not in LABELS)
    for label in LABELS + tuple(extra):
        table = read_table(label)
        entries.append(
            CatalogEntry(label, table.get("figure", ""), table.get("description", ""), tuple(table.get("variants", {})))
        )
    return entries
