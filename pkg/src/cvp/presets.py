"""Default grids per kernel and construction of measures from grid specs."""

from __future__ import annotations

import copy

import numpy as np

from .errors import ConfigError
from .kernels import KernelSpec
from .measure import DiscreteMeasure, apply_density, build_line_grid, build_periodic_grid

# translation-invariant kernels default to periodic grids, which have no
# boundary band; the others need a truncated domain
_DEFAULT_GRIDS = {
    "gauss1d": {"domain": {"periodic": 32.0}, "n": 256},
    "exp1d": {"domain": {"periodic": 64.0}, "n": 512},
    "hyperplane2d": {"domain": {"periodic": 32.0}, "n": 256},
    "nontrivial_weight2d": {"domain": [-10.0, 10.0], "n": 321, "rule": "trapezoid"},
    "inhomogeneous1d": {"domain": [-8.0, 8.0], "n": 257, "rule": "trapezoid"},
}


def default_grid_spec(k: KernelSpec) -> dict:
    return copy.deepcopy(_DEFAULT_GRIDS[k.name])


def normalize_grid_spec(spec) -> dict:
    """Validate a grid spec and fill the quadrature rule."""
    if not isinstance(spec, dict):
        raise ConfigError("grid must be an object")
    unknown = set(spec) - {"domain", "n", "rule"}
    if unknown:
        raise ConfigError(f"unknown grid field(s): {sorted(unknown)}")
    if "domain" not in spec or "n" not in spec:
        raise ConfigError("grid needs 'domain' and 'n'")
    n = spec["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise ConfigError(f"grid n must be an integer >= 2, got {n!r}")
    dom = spec["domain"]
    if isinstance(dom, dict):
        if set(dom) != {"periodic"}:
            raise ConfigError("periodic domain must be {'periodic': T}")
        T = dom["periodic"]
        if isinstance(T, bool) or not isinstance(T, (int, float)) or not T > 0:
            raise ConfigError(f"period must be a positive number, got {T!r}")
        if "rule" in spec and spec["rule"] not in (None, "periodic"):
            raise ConfigError("periodic grids have no quadrature rule choice")
        return {"domain": {"periodic": float(T)}, "n": n}
    if (not isinstance(dom, (list, tuple)) or len(dom) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in dom)):
        raise ConfigError(f"domain must be [a, b] or {{'periodic': T}}, got {dom!r}")
    a, b = float(dom[0]), float(dom[1])
    if not a < b:
        raise ConfigError(f"empty domain [{a}, {b}]")
    rule = spec.get("rule", "trapezoid")
    if rule not in ("trapezoid", "midpoint"):
        raise ConfigError(f"unknown quadrature rule {rule!r}")
    return {"domain": [a, b], "n": n, "rule": rule}


def measure_from_spec(k: KernelSpec, spec) -> DiscreteMeasure:
    """Grid for ``k``: the kernel's ambient dimension and minimising density."""
    spec = normalize_grid_spec(spec)
    dom = spec["domain"]
    if isinstance(dom, dict):
        if not k.translation_invariant:
            raise ConfigError(f"{k.name} is not translation invariant; use a truncated domain")
        m = build_periodic_grid(dom["periodic"], spec["n"], k.ambient_dim)
    else:
        m = build_line_grid(dom, spec["n"], spec["rule"], k.ambient_dim)
    dens = k.density(m.line)
    if dens is not None:
        m = apply_density(m, dens, "minimizer")
    return m


def default_measure(k: KernelSpec) -> DiscreteMeasure:
    return measure_from_spec(k, default_grid_spec(k))


def gaussian_field(m: DiscreteMeasure, center: float | None = None, width: float = 1.0) -> np.ndarray:
    """``exp(-(x - center)^2 / (2 width^2))`` on the nodes, wrapped if periodic.

    ``center`` defaults to the middle of the domain.
    """
    if center is None:
        center = 0.5 * (m.domain[0] + m.domain[1])
    x = m.line - center
    if m.periodic:
        T = m.period
        x = np.mod(x + 0.5 * T, T) - 0.5 * T
    return np.exp(-0.5 * (x / width) ** 2)
