"""Shared helper: build the KdV catalog once and cache it next to the demos."""

from pathlib import Path

from polymanifold import build_catalog, load_catalog, save_catalog

CACHE = Path(__file__).with_name("demo_data")


def kdv_catalog():
    if (CACHE / "catalog.json").exists():
        return load_catalog(CACHE)
    print("simulating 15 KdV runs (about a minute) ...")
    catalog = build_catalog()
    save_catalog(catalog, CACHE)
    return catalog
