"""Shared fixtures: the reference corridor and cached contour pairs per preset."""
from __future__ import annotations

import functools

import numpy as np
import pytest

from kobol_dnt import BarrierGeometry, NumericsConfig, get_preset
from kobol_dnt.laplace_gwr import GwrConfig, nodes
from kobol_dnt.pricer import build_contour_pair
from kobol_dnt.wiener_hopf import compute_factors

PRESET_NAMES = ("AA", "AB", "MA", "MB")
REF_SPOTS = (0.96, 0.98, 1.0, 1.02, 1.04)
REF_LO, REF_HI, REF_T, REF_R = 0.95, 1.05, 0.25, 0.004


@functools.lru_cache(maxsize=None)
def ref_geometry() -> BarrierGeometry:
    return BarrierGeometry.from_prices(REF_LO, REF_HI)


@functools.lru_cache(maxsize=None)
def ref_pair(name: str):
    return build_contour_pair(get_preset(name), ref_geometry(), NumericsConfig())


def ref_nodes(T: float = REF_T, r: float = REF_R) -> np.ndarray:
    return r + nodes(GwrConfig(T=T))


@functools.lru_cache(maxsize=None)
def ref_factors(name: str, k: int):
    """Factors at the k-th (1-based) inversion node of the reference problem."""
    return compute_factors(get_preset(name), float(ref_nodes()[k - 1]), ref_pair(name))


@pytest.fixture(scope="session")
def geometry():
    return ref_geometry()


# Acceptance bookkeeping: criterion number -> (title, [(part, passed, detail)]).
ACCEPTANCE: dict[int, tuple[str, list]] = {}


def record(criterion: int, title: str, part: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(criterion, (title, []))[1].append((part, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, parts = ACCEPTANCE[k]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name} {'ok' if good else 'FAILED'} ({d})" for name, good, d in parts)
        tr.write_line(f"criterion {k} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
