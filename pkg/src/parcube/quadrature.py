"""Fully symmetric degree-7 cubature rules with embedded null rules.

One rule table per dimensionality serves every region: generators are
abscissa offsets in [-1, 1]^d relative to the region center, and the five
weight rows are (0) the degree-7 integration rule normalized to the unit
measure, then (1..4) null rules formed as lower-degree embedded rules
minus rule 0.  A null rule applied to any polynomial it annihilates gives
exactly zero, so its magnitude on a region is a direct error indicator.

Generator magnitudes are the classical choice lambda2^2 = 9/70 and
lambda3^2 = lambda4^2 = 9/10, lambda5^2 = 9/19; the weights are solved
from the degree-7 moment equations at build time, which keeps one code
path valid for every supported dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Integrand,
    NonFiniteEvaluationError,
    Region,
    check_dimension,
    region_volume,
)
from .engine import tree_sum

LAMBDA2 = np.sqrt(9.0 / 70.0)
LAMBDA3 = np.sqrt(9.0 / 10.0)
LAMBDA4 = np.sqrt(9.0 / 10.0)
LAMBDA5 = np.sqrt(9.0 / 19.0)


def f_eval_count(d: int) -> int:
    """Points in the fully symmetric degree-7 set: 2^d + 2d^2 + 2d + 1."""
    d = check_dimension(d)
    return 2**d + 2 * d * d + 2 * d + 1


@dataclass(frozen=True)
class RuleTable:
    """Immutable per-dimension rule data, shared read-only by all workers.

    weights[0] integrates the constant 1 to exactly the unit measure;
    weights[1..4] are null rules whose annihilation degrees are recorded
    in `null_degrees`.  `axial_indices[j]` holds the generator rows at
    (+l2, -l2, +l3, -l3) on axis j, used by split-axis analysis together
    with the two `split_weights` coefficients.
    """

    d: int
    f_eval: int
    generators: np.ndarray
    weights: np.ndarray
    split_weights: np.ndarray
    axial_indices: np.ndarray
    null_degrees: tuple
    null_scales: tuple

    def __post_init__(self):
        for name in ("generators", "weights", "split_weights"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        ai = np.ascontiguousarray(self.axial_indices, dtype=np.int64)
        ai.setflags(write=False)
        object.__setattr__(self, "axial_indices", ai)


@dataclass(frozen=True)
class RuleEstimates:
    """The five rule values for one region, already scaled by its volume."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != (5,):
            raise ValueError("expected exactly five rule values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _generators(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Point set in canonical order; also returns per-point orbit ids.

    Order: center; (+-l2 e_j) per axis; (+-l3 e_j) per axis; the four sign
    combinations of (l4 e_j + l4 e_k) for j < k; the 2^d corners at l5.
    """
    rows = [np.zeros(d)]
    orbit = [0]
    for lam, orb in ((LAMBDA2, 1), (LAMBDA3, 2)):
        for j in range(d):
            for s in (+1.0, -1.0):
                g = np.zeros(d)
                g[j] = s * lam
                rows.append(g)
                orbit.append(orb)
    for j in range(d):
        for k in range(j + 1, d):
            for sj, sk in ((+1, +1), (-1, +1), (+1, -1), (-1, -1)):
                g = np.zeros(d)
                g[j] = sj * LAMBDA4
                g[k] = sk * LAMBDA4
                rows.append(g)
                orbit.append(3)
    for bits in range(2**d):
        g = np.where([(bits >> j) & 1 for j in range(d)], -LAMBDA5, LAMBDA5)
        rows.append(g.astype(float))
        orbit.append(4)
    return np.array(rows), np.array(orbit)


def _orbit_sizes(d: int) -> np.ndarray:
    return np.array([1, 2 * d, 2 * d, 2 * d * (d - 1), 2**d], dtype=float)


def _moment_rows(d: int) -> dict[str, np.ndarray]:
    """Rule value of each orbit (unit weight per point) on the even monomials
    that pin degree-7 exactness, for the unit-normalized measure on [-1,1]^d."""
    l2, l3, l4, l5 = LAMBDA2, LAMBDA3, LAMBDA4, LAMBDA5
    rows = {
        "1": _orbit_sizes(d),
        "x2": np.array([0, 2 * l2**2, 2 * l3**2, 4 * (d - 1) * l4**2, 2**d * l5**2]),
        "x4": np.array([0, 2 * l2**4, 2 * l3**4, 4 * (d - 1) * l4**4, 2**d * l5**4]),
        "x6": np.array([0, 2 * l2**6, 2 * l3**6, 4 * (d - 1) * l4**6, 2**d * l5**6]),
    }
    if d >= 2:
        rows["x2y2"] = np.array([0, 0, 0, 4 * l4**4, 2**d * l5**4])
    return rows


def _solve_orbit_weights(d: int, use_orbits, targets) -> np.ndarray:
    """Solve for per-point orbit weights over the selected orbits.

    `targets` maps monomial keys to unit-measure moments; the system must
    be square over the active orbits.
    """
    rows = _moment_rows(d)
    active = list(use_orbits)
    a = np.array([rows[k][active] for k in targets])
    b = np.array([targets[k] for k in targets])
    w = np.linalg.solve(a, b)
    full = np.zeros(5)
    full[active] = w
    return full


def _integration_weights(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Degree-7 and embedded degree-5 orbit weights.

    Moments of the unit-normalized measure: E[x^2] = 1/3, E[x^4] = 1/5,
    E[x^6] = 1/7, E[x^2 y^2] = 1/9.  The degree-5 rule omits the corner
    orbit, the classical embedded pairing on this point set.
    """
    if d >= 2:
        w7 = _solve_orbit_weights(
            d, (0, 1, 2, 3, 4), {"1": 1.0, "x2": 1 / 3, "x4": 1 / 5, "x6": 1 / 7, "x2y2": 1 / 9}
        )
        w5 = _solve_orbit_weights(
            d, (0, 1, 2, 3), {"1": 1.0, "x2": 1 / 3, "x4": 1 / 5, "x2y2": 1 / 9}
        )
    else:
        w7 = _solve_orbit_weights(
            d, (0, 1, 2, 4), {"1": 1.0, "x2": 1 / 3, "x4": 1 / 5, "x6": 1 / 7}
        )
        w5 = _solve_orbit_weights(d, (0, 1, 2), {"1": 1.0, "x2": 1 / 3, "x4": 1 / 5})
    return w7, w5


# Down-scaling applied to the two degree-3 safeguard nulls.  They exist to
# flag regions far from the asymptotic regime; at full scale their slower
# h^4 decay would dominate the max forever and stall convergence.
SAFEGUARD_SCALE = 1e-3


def _null_rules(d: int, orbits: np.ndarray, w7: np.ndarray, w5: np.ndarray):
    """Four per-point null rules and their annihilation degrees.

    Rule 1 is the classical degree-5 difference (embedded degree-5 rule
    minus rule 0).  Rule 2 is the corner-parity rule, which annihilates
    every monomial without an odd power on all d axes (degree d - 1),
    scaled to rule 1's norm.  Rules 3 and 4 are symmetric degree-3 nulls,
    orthogonalized against rule 1 and down-scaled as safeguards.  For
    d = 1 the parity rule degenerates and a degree-1 null takes its place.

    Returns (null_vectors, degrees, scales); scales record each stored
    vector's multiplier relative to the common norm of rule 1, so error
    analysis can recover natural magnitudes.
    """
    n_points = orbits.size
    n1 = (w5 - w7)[orbits]
    n1_norm = float(np.linalg.norm(n1))

    # corner parity: weight +-1 on the 2^d corner points by sign product
    parity = np.zeros(n_points)
    corner_rows = np.nonzero(orbits == 4)[0]
    for r, bits in zip(corner_rows, range(2**d)):
        parity[r] = -1.0 if bin(bits).count("1") % 2 else 1.0
    parity *= n1_norm / np.linalg.norm(parity)

    # symmetric degree-3 null space: orbit vectors killing the moments of
    # 1 and x^2 (odd and mixed-odd monomials vanish by symmetry)
    rows = _moment_rows(d)
    active = [0, 1, 2, 3, 4] if d >= 2 else [0, 1, 2, 4]
    m = np.stack([rows["1"][active], rows["x2"][active]])
    _, _, vt = np.linalg.svd(m)
    basis = vt[2:]  # orbit-space null vectors of the two constraints
    v0 = (w5 - w7)[active]
    v0 = v0 / np.linalg.norm(v0)
    extras = []
    for vec in basis:
        vec = vec - np.dot(vec, v0) * v0
        for prev in extras:
            vec = vec - np.dot(vec, prev) * prev
        norm = np.linalg.norm(vec)
        if norm > 1e-10:
            extras.append(vec / norm)
    full = np.zeros((len(extras), 5))
    full[:, active] = extras
    per_point = [full[i][orbits] for i in range(len(extras))]

    def scaled(v):
        return v * (SAFEGUARD_SCALE * n1_norm / np.linalg.norm(v))

    if d >= 2:
        n3, n4 = scaled(per_point[0]), scaled(per_point[1])
        return [n1, parity, n3, n4], (5, d - 1, 3, 3), (1.0, 1.0, SAFEGUARD_SCALE, SAFEGUARD_SCALE)

    # d = 1: the corner pair cannot carry a parity rule of useful degree.
    # Take the degree-3 symmetric null plus a degree-1 symmetric null (kills
    # the mean; x vanishes by symmetry) and an odd corner rule (kills
    # constants and all even monomials).
    n2 = scaled(per_point[0])
    m1 = rows["1"][active][None, :]
    _, _, vt1 = np.linalg.svd(m1)
    deg1 = None
    for vec in vt1[1:]:
        vec = vec - np.dot(vec, v0) * v0
        for prev in extras:
            vec = vec - np.dot(vec, prev) * prev
        norm = np.linalg.norm(vec)
        if norm > 1e-10:
            deg1 = vec / norm
            break
    full1 = np.zeros(5)
    full1[active] = deg1
    n3 = scaled(full1[orbits])
    odd = np.zeros(n_points)
    odd[corner_rows[0]] = 1.0
    odd[corner_rows[1]] = -1.0
    n4 = odd * (SAFEGUARD_SCALE * n1_norm / np.linalg.norm(odd))
    scales = (1.0, SAFEGUARD_SCALE, SAFEGUARD_SCALE, SAFEGUARD_SCALE)
    return [n1, n2, n3, n4], (5, 3, 1, 0), scales


def build_rule(d: int) -> RuleTable:
    """Construct the rule table for dimension d (deterministic in d)."""
    d = check_dimension(d)
    generators, orbits = _generators(d)
    f_eval = f_eval_count(d)
    assert generators.shape == (f_eval, d)

    w7, w5 = _integration_weights(d)
    nulls, null_degrees, null_scales = _null_rules(d, orbits, w7, w5)
    weights = np.empty((5, f_eval))
    weights[0] = w7[orbits]
    for row, null in enumerate(nulls, start=1):
        weights[row] = null

    # rows of the +-l2 / +-l3 points per axis, fixed by the canonical order
    axial = np.empty((d, 4), dtype=np.int64)
    for j in range(d):
        axial[j] = (1 + 2 * j, 2 + 2 * j, 1 + 2 * d + 2 * j, 2 + 2 * d + 2 * j)

    split_weights = np.array([1.0, (LAMBDA2**2) / (LAMBDA3**2)])
    return RuleTable(
        d=d,
        f_eval=f_eval,
        generators=generators,
        weights=weights,
        split_weights=split_weights,
        axial_indices=axial,
        null_degrees=null_degrees,
        null_scales=null_scales,
    )


def eval_point(rule: RuleTable, region: Region, f_id: int) -> np.ndarray:
    """Generator row `f_id` mapped affinely into the region."""
    if not 0 <= f_id < rule.f_eval:
        raise IndexError(f"point index {f_id} out of range [0, {rule.f_eval})")
    return region.left + region.length * (rule.generators[f_id] + 1.0) / 2.0


def region_points(rule: RuleTable, lefts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """All evaluation points for a batch of regions, shape (n, f_eval, d)."""
    offsets = (rule.generators + 1.0) / 2.0
    return lefts[:, None, :] + lengths[:, None, :] * offsets[None, :, :]


def apply_rules(f: Integrand, region: Region, rule: RuleTable):
    """Evaluate the five rules on one region.

    Returns (RuleEstimates, stored_evals): values[k] is the volume-scaled
    weighted sum for rule k, accumulated over ascending point index with a
    pairwise tree; stored_evals keeps every f(x_i) for split-axis analysis.
    """
    if rule.d != f.d:
        raise ValueError(f"rule dimension {rule.d} != integrand dimension {f.d}")
    points = region_points(rule, region.left[None, :], region.length[None, :])[0]
    fx = np.asarray(f.eval_many(points), dtype=np.float64)
    bad = ~np.isfinite(fx)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteEvaluationError(points[i], float(fx[i]))
    volume = region_volume(region)
    values = volume * tree_sum(rule.weights * fx[None, :], axis=-1)
    return RuleEstimates(values), fx


def dump_rule(rule: RuleTable, path) -> None:
    """Write the rule table as a readable text file for inspection.

    Columns: point index, d generator coordinates, then the five weights.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# d={rule.d} f_eval={rule.f_eval} null_degrees={rule.null_degrees}\n")
        fh.write(
            f"# split_weights={rule.split_weights[0]:.17g},{rule.split_weights[1]:.17g}\n"
        )
        header = ["idx"] + [f"g{j}" for j in range(rule.d)] + [f"w{k}" for k in range(5)]
        fh.write("\t".join(header) + "\n")
        for i in range(rule.f_eval):
            cells = [str(i)]
            cells += [f"{v:.17g}" for v in rule.generators[i]]
            cells += [f"{rule.weights[k, i]:.17g}" for k in range(5)]
            fh.write("\t".join(cells) + "\n")
