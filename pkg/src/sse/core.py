"""Training, prediction, flattening, moments and error estimation.

The surrogate is a binary tree of subdomains in quantile space.  Each level
fits sparse local expansions of the current residual wherever enough points
are available, subtracts the fit, and splits along the direction with the
largest first-order variance share.  The flattened form collapses the summed
tree into one expansion per terminal domain, which makes prediction O(depth)
and the usual statistics analytic.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .input_model import InputModel, input_model_from_spec
from .parallel import ordered_map
from .poly_basis import Box, basis_columns, graded_lex_key, reprojection_vector, unit_box
from .regression import DEFAULT_Q_GRID, Expansion, adaptive_fit

MODEL_FORMAT = "sse-model"
MODEL_VERSION = 1


def default_n_min(dimension):
    """Default minimum local design size: min(5 M, 50)."""
    return min(5 * int(dimension), 50)


@dataclass(frozen=True)
class SseConfig:
    """Training hyperparameters.

    ``n_min`` of None resolves to ``min(5 M, 50)`` when training starts.
    Only binary equal-mass splits are supported.
    """

    max_degree: int = 5
    q_grid: tuple = DEFAULT_Q_GRID
    rank: int = 2
    n_min: int | None = None
    n_children: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q_grid", tuple(float(q) for q in self.q_grid))
        if self.n_children != 2:
            raise ValueError("only binary splits are supported")
        if self.max_degree < 0:
            raise ValueError("max_degree must be >= 0")
        if not self.q_grid or any(not 0.0 < q <= 1.0 for q in self.q_grid):
            raise ValueError("q_grid values must lie in (0, 1]")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.n_min is not None and self.n_min < 2:
            raise ValueError("n_min must be >= 2")


@dataclass(eq=False)
class Subdomain:
    """Tree node: a box with its probability mass and optional residual expansion.

    ``loo_inherited`` carries the error estimate of the last expanded ancestor;
    unexpanded terminal domains report it as their own.
    """

    level: int
    index: int
    box: Box
    mass: float
    loo_inherited: float = 0.0
    expansion: Expansion | None = None
    split_dim: int | None = None
    split_value: float | None = None
    children: tuple | None = None

    @property
    def is_leaf(self):
        return self.children is None

    @property
    def loo(self):
        return self.expansion.loo if self.expansion is not None else self.loo_inherited


def _collect_leaves(root):
    leaves = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.children is None:
            leaves.append(node)
        else:
            stack.extend(reversed(node.children))
    return tuple(leaves)


@dataclass(eq=False)
class SseModel:
    """Trained surrogate; treat as immutable."""

    input_model: InputModel
    config: SseConfig
    root: Subdomain
    leaves: tuple
    n_min: int
    n_train: int
    var_y: float
    scale_y: float
    depth: int
    n_expansions: int
    level_residual_ss: tuple
    has_duplicate_rows: bool
    _flattened: "FlattenedSse | None" = field(default=None, repr=False)

    @property
    def dimension(self):
        return self.input_model.dimension

    def flattened(self):
        """Flattened form, computed once and cached."""
        if self._flattened is None:
            self._flattened = flatten(self)
        return self._flattened

    def predict(self, x, flattened=False):
        return predict(self, x, flattened=flattened)


def choose_split_direction(expansion, box):
    """Direction with the largest first-order variance share of the expansion.

    The share of dimension i is the squared-coefficient mass of indices that
    vary in i alone over the mass of all non-constant indices.  Exact ties and
    the all-constant case fall back to the widest box edge, then the lowest
    dimension index.
    """
    m = box.ndim
    single = np.zeros(m)
    total = 0.0
    for alpha, a in zip(expansion.indices, expansion.coefficients):
        nonzero = [d for d, k in enumerate(alpha) if k > 0]
        if not nonzero:
            continue
        total += a * a
        if len(nonzero) == 1:
            single[nonzero[0]] += a * a

    edges = [hi - lo for lo, hi in zip(box.lower, box.upper)]
    if total > 0.0:
        shares = single / total
        top = float(np.max(shares))
        if top > 0.0:
            tied = [d for d in range(m) if shares[d] == top]
            return min(tied, key=lambda d: (-edges[d], d))
    return min(range(m), key=lambda d: (-edges[d], d))


def train(input_model, x, y, config=None):
    """Fit the multi-level surrogate from a fixed experimental design.

    The design is mapped to quantile space, the root covers the whole cube,
    and levels proceed breadth first: every subdomain holding at least
    ``n_min`` points gets a sparse adaptive fit of the current residual, the
    fit is subtracted from its points, and expanded subdomains split at the
    midpoint of the chosen direction (equal probability mass).  Children are
    materialized only when one of them could reach ``n_min`` points, and depth
    is capped at ``floor(log2(N / n_min))``, so the number of fitted
    expansions never exceeds ``2 N / n_min - 1``.  Deterministic for fixed
    inputs, including under threaded fitting.
    """
    cfg = config if config is not None else SseConfig()
    m = input_model.dimension
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if m == 1 else x.reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    if x.shape != (n, m):
        raise ValueError(f"design shape {x.shape} does not match {(n, m)}")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite response values")

    n_min = cfg.n_min if cfg.n_min is not None else default_n_min(m)
    n_min = max(int(n_min), 2)
    if n < n_min:
        raise ValueError("insufficient data")

    u = np.atleast_2d(input_model.to_quantile(x))
    has_duplicates = np.unique(x, axis=0).shape[0] < n
    var_y = float(np.var(y))
    scale_y = float(np.max(np.abs(y)))
    depth_cap = int(math.floor(math.log2(n / n_min)))

    residual = y.astype(float, copy=True)
    root = Subdomain(level=0, index=0, box=unit_box(m), mass=1.0, loo_inherited=0.0)
    frontier = [(root, np.arange(n))]
    level = 0
    level_residual_ss = []
    n_expansions = 0

    while True:
        jobs = [(node, idx) for node, idx in frontier if idx.size >= n_min]

        def _fit(job):
            _, idx = job
            return adaptive_fit(
                u[idx], residual[idx], job[0].box, cfg.max_degree, cfg.q_grid, cfg.rank
            )

        for (node, idx), expansion in zip(jobs, ordered_map(_fit, jobs)):
            node.expansion = expansion
            n_expansions += 1
            if expansion.indices:
                residual[idx] -= expansion.evaluate(u[idx])
        level_residual_ss.append(float(residual @ residual))

        if level >= depth_cap:
            break
        next_frontier = []
        for node, idx in frontier:
            if node.expansion is None:
                continue
            d = choose_split_direction(node.expansion, node.box)
            lo, hi = node.box.interval(d)
            mid = 0.5 * (lo + hi)
            mask = u[idx, d] < mid
            n_low = int(np.count_nonzero(mask))
            if max(n_low, idx.size - n_low) < n_min:
                continue
            half = 0.5 * node.mass
            low = Subdomain(
                level=node.level + 1,
                index=2 * node.index,
                box=node.box.replace_interval(d, lo, mid),
                mass=half,
                loo_inherited=node.loo,
            )
            high = Subdomain(
                level=node.level + 1,
                index=2 * node.index + 1,
                box=node.box.replace_interval(d, mid, hi),
                mass=half,
                loo_inherited=node.loo,
            )
            node.split_dim = d
            node.split_value = mid
            node.children = (low, high)
            next_frontier.append((low, idx[mask]))
            next_frontier.append((high, idx[~mask]))
        if not next_frontier:
            break
        frontier = next_frontier
        level += 1

    leaves = _collect_leaves(root)
    return SseModel(
        input_model=input_model,
        config=cfg,
        root=root,
        leaves=leaves,
        n_min=n_min,
        n_train=n,
        var_y=var_y,
        scale_y=scale_y,
        depth=max(leaf.level for leaf in leaves),
        n_expansions=n_expansions,
        level_residual_ss=tuple(level_residual_ss),
        has_duplicate_rows=bool(has_duplicates),
    )


def _route_ids(root, u, visit):
    """Walk points down the tree; ``visit(node, ids)`` is called on every node.

    Points on a split plane go to the child whose half-open interval starts
    there; the topmost box is closed, so u = 1 stays routable.
    """
    stack = [(root, np.arange(u.shape[0]))]
    while stack:
        node, ids = stack.pop()
        visit(node, ids)
        if node.children is not None:
            mask = u[ids, node.split_dim] < node.split_value
            low_ids = ids[mask]
            high_ids = ids[~mask]
            if low_ids.size:
                stack.append((node.children[0], low_ids))
            if high_ids.size:
                stack.append((node.children[1], high_ids))


def predict(model, x, flattened=False):
    """Surrogate prediction at physical points.

    Recursive mode sums the residual expansions along each root-to-leaf path;
    flattened mode evaluates the single terminal-domain expansion.
    """
    if flattened:
        return model.flattened().predict(x)
    arr, single = model.input_model._coerce(x)
    u = np.atleast_2d(model.input_model.to_quantile(arr))
    out = np.zeros(u.shape[0])

    def visit(node, ids):
        if node.expansion is not None and node.expansion.indices:
            out[ids] += node.expansion.evaluate(u[ids])

    _route_ids(model.root, u, visit)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class FlattenedDomain:
    """One terminal domain of the flattened surrogate."""

    box: Box
    mass: float
    indices: tuple
    coefficients: np.ndarray

    def constant_term(self):
        for alpha, c in zip(self.indices, self.coefficients):
            if not any(alpha):
                return float(c)
        return 0.0

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.indices:
            return np.zeros(pts.shape[0])
        return basis_columns(self.indices, self.box, pts) @ self.coefficients


@dataclass(eq=False)
class FlattenedSse:
    """Per-terminal-domain single expansions plus the routing tree."""

    input_model: InputModel
    domains: tuple
    _root: Subdomain
    _leaf_ids: dict

    def locate(self, u):
        """Terminal-domain id for each quantile-space point."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.empty(u.shape[0], dtype=int)

        def visit(node, ids):
            if node.children is None:
                out[ids] = self._leaf_ids[id(node)]

        _route_ids(self._root, u, visit)
        return out

    def predict_quantile(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.zeros(u.shape[0])
        where = self.locate(u)
        for dom_id in np.unique(where):
            ids = np.nonzero(where == dom_id)[0]
            out[ids] = self.domains[dom_id].evaluate(u[ids])
        return out

    def predict(self, x):
        arr, single = self.input_model._coerce(x)
        u = np.atleast_2d(self.input_model.to_quantile(arr))
        out = self.predict_quantile(u)
        return float(out[0]) if single else out


def flatten(model):
    """Project the summed tree onto each terminal domain.

    Every ancestor expansion is re-expressed in the terminal domain's
    orthonormal basis through exact per-dimension Gauss-Legendre re-projection
    (a degree-k polynomial restricted to a sub-interval stays degree k), so
    the flattened prediction reproduces the recursive one up to roundoff.
    """
    cache = {}

    def transfer(src, dst, degree):
        key = (src, dst, degree)
        found = cache.get(key)
        if found is None:
            found = reprojection_vector(src, dst, degree)
            cache[key] = found
        return found

    domains = []
    leaf_ids = {}
    stack = [(model.root, [])]
    while stack:
        node, path = stack.pop()
        path = path + [node]
        if node.children is not None:
            stack.append((node.children[1], path))
            stack.append((node.children[0], path))
            continue
        acc = {}
        for ancestor in path:
            expansion = ancestor.expansion
            if expansion is None or not expansion.indices:
                continue
            for alpha, a in zip(expansion.indices, expansion.coefficients):
                nonzero = [d for d, k in enumerate(alpha) if k > 0]
                if not nonzero:
                    zero = alpha
                    acc[zero] = acc.get(zero, 0.0) + a
                    continue
                vectors = [
                    transfer(ancestor.box.interval(d), node.box.interval(d), alpha[d])
                    for d in nonzero
                ]
                for combo in itertools.product(*(range(alpha[d] + 1) for d in nonzero)):
                    w = a
                    for vec, degree in zip(vectors, combo):
                        w *= vec[degree]
                    if w == 0.0:
                        continue
                    beta = [0] * len(alpha)
                    for d, degree in zip(nonzero, combo):
                        beta[d] = degree
                    beta = tuple(beta)
                    acc[beta] = acc.get(beta, 0.0) + w
        indices = tuple(sorted(acc, key=graded_lex_key))
        coefficients = np.array([acc[alpha] for alpha in indices])
        leaf_ids[id(node)] = len(domains)
        domains.append(FlattenedDomain(node.box, node.mass, indices, coefficients))

    # the DFS above visits leaves in the same order as _collect_leaves
    return FlattenedSse(model.input_model, tuple(domains), model.root, leaf_ids)


def mean(flattened):
    """Expected value: mass-weighted constant terms of the terminal expansions."""
    return float(sum(dom.mass * dom.constant_term() for dom in flattened.domains))


def variance(flattened):
    """Variance from the orthonormal coefficients of the terminal expansions."""
    second = sum(dom.mass * float(dom.coefficients @ dom.coefficients) for dom in flattened.domains)
    mu = mean(flattened)
    return float(second - mu * mu)


def gen_error_estimate(model, var_y=None):
    """Mass-weighted terminal LOO errors: (absolute, relative) estimate.

    Terminal domains report their own LOO when expanded, else the value
    inherited from the last expanded ancestor.  The relative form divides by
    the training-sample variance; a zero-variance (constant) design reports 0
    when the absolute estimate is below squared machine noise at the data
    scale, infinity otherwise.
    """
    absolute = float(sum(leaf.mass * leaf.loo for leaf in model.leaves))
    denom = model.var_y if var_y is None else float(var_y)
    if denom > 0.0:
        relative = absolute / denom
    else:
        noise = (4.0 * np.finfo(float).eps * (1.0 + model.scale_y)) ** 2
        relative = 0.0 if absolute <= noise else math.inf
    return absolute, relative


# ---------------------------------------------------------------------------
# serialization


def _expansion_record(expansion):
    if expansion is None:
        return None
    return {
        "indices": [list(a) for a in expansion.indices],
        "coefficients": [float(c) for c in expansion.coefficients],
        "loo": float(expansion.loo),
        "unstable": bool(expansion.unstable),
    }


def _node_records(root):
    records = []
    ids = {}
    stack = [(root, -1)]
    while stack:
        node, parent = stack.pop()
        node_id = len(records)
        ids[id(node)] = node_id
        records.append(
            {
                "id": node_id,
                "parent": parent,
                "level": node.level,
                "index": node.index,
                "lower": list(node.box.lower),
                "upper": list(node.box.upper),
                "mass": node.mass,
                "loo_inherited": node.loo_inherited,
                "split_dim": node.split_dim,
                "split_value": node.split_value,
                "expansion": _expansion_record(node.expansion),
            }
        )
        if node.children is not None:
            stack.append((node.children[1], node_id))
            stack.append((node.children[0], node_id))
    return records


def _payload(model):
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "input_model": model.input_model.spec(),
        "config": {
            "max_degree": model.config.max_degree,
            "q_grid": list(model.config.q_grid),
            "rank": model.config.rank,
            "n_min": model.config.n_min,
            "n_children": model.config.n_children,
            "seed": model.config.seed,
        },
        "training": {
            "n_min": model.n_min,
            "n_train": model.n_train,
            "var_y": model.var_y,
            "scale_y": model.scale_y,
            "depth": model.depth,
            "n_expansions": model.n_expansions,
            "level_residual_ss": list(model.level_residual_ss),
            "has_duplicate_rows": model.has_duplicate_rows,
        },
        "nodes": _node_records(model.root),
    }


def _checksum(payload):
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def serialize(model):
    """Lossless JSON encoding of a trained model, as bytes.

    Floats are written with Python's shortest round-trip repr, so reloaded
    models predict identically to the last bit.  A sha256 checksum detects
    corrupted payloads.
    """
    payload = _payload(model)
    document = dict(payload)
    document["checksum"] = _checksum(payload)
    return (json.dumps(document, indent=1) + "\n").encode("utf-8")


def deserialize(data):
    """Inverse of :func:`serialize`; raises ValueError on any mismatch."""
    try:
        document = json.loads(data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError("not a model file") from exc
    if not isinstance(document, dict) or "checksum" not in document:
        raise ValueError("not a model file")
    if document.get("format") != MODEL_FORMAT or document.get("version") != MODEL_VERSION:
        raise ValueError("unsupported model format or version")
    stored = document.pop("checksum")
    if _checksum(document) != stored:
        raise ValueError("model file checksum mismatch")

    input_model = input_model_from_spec(document["input_model"])
    cfg_rec = document["config"]
    config = SseConfig(
        max_degree=cfg_rec["max_degree"],
        q_grid=tuple(cfg_rec["q_grid"]),
        rank=cfg_rec["rank"],
        n_min=cfg_rec["n_min"],
        n_children=cfg_rec["n_children"],
        seed=cfg_rec["seed"],
    )

    nodes = {}
    for rec in document["nodes"]:
        box = Box(tuple(rec["lower"]), tuple(rec["upper"]))
        exp_rec = rec["expansion"]
        expansion = None
        if exp_rec is not None:
            expansion = Expansion(
                tuple(tuple(a) for a in exp_rec["indices"]),
                np.asarray(exp_rec["coefficients"], dtype=float),
                exp_rec["loo"],
                box,
                exp_rec["unstable"],
            )
        nodes[rec["id"]] = Subdomain(
            level=rec["level"],
            index=rec["index"],
            box=box,
            mass=rec["mass"],
            loo_inherited=rec["loo_inherited"],
            expansion=expansion,
            split_dim=rec["split_dim"],
            split_value=rec["split_value"],
        )
    for rec in document["nodes"]:
        if rec["parent"] >= 0:
            parent = nodes[rec["parent"]]
            child = nodes[rec["id"]]
            if parent.children is None:
                parent.children = (child,)
            else:
                parent.children = parent.children + (child,)
    for node in nodes.values():
        if node.children is not None and len(node.children) != 2:
            raise ValueError("model file has a non-binary split")

    root = nodes[0]
    training = document["training"]
    return SseModel(
        input_model=input_model,
        config=config,
        root=root,
        leaves=_collect_leaves(root),
        n_min=training["n_min"],
        n_train=training["n_train"],
        var_y=training["var_y"],
        scale_y=training["scale_y"],
        depth=training["depth"],
        n_expansions=training["n_expansions"],
        level_residual_ss=tuple(training["level_residual_ss"]),
        has_duplicate_rows=training["has_duplicate_rows"],
    )


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
