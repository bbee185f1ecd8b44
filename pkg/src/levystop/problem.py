"""Problem-spec files: YAML with a schema version, validated with line-anchored errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .levy_model import JumpTerm, LevyModel, ModelError
from .reward import BUILTINS, PiecewiseExpPoly, RewardError, check_reward, from_pieces
from .solver import GridSpec

SCHEMA_VERSION = 1


class SpecError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<spec>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass
class MCBlock:
    x0: list[float] = field(default_factory=list)
    n_paths: int = 100_000
    seed: int = 0
    horizon: float | None = None
    dt: float | None = None
    gamma: list[tuple[float, float]] | None = None


@dataclass
class ProblemSpec:
    model: LevyModel
    q: float
    reward: PiecewiseExpPoly
    reward_desc: dict
    grid: GridSpec = field(default_factory=GridSpec)
    boundary_shift: tuple[int, float] | None = None
    mc: MCBlock = field(default_factory=MCBlock)
    source: str = "<spec>"


# ---------------------------------------------------------------------------
# YAML nodes -> python values with line numbers


class _Node:
    __slots__ = ("value", "line")

    def __init__(self, value, line):
        self.value = value
        self.line = line


def _wrap(node) -> _Node:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else k.value
            out[key] = _wrap(v)
        return _Node(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_wrap(v) for v in node.value], line)
    return _Node(yaml.safe_load(yaml.serialize(node)), line)


def _plain(n: _Node):
    if isinstance(n.value, dict):
        return {k: _plain(v) for k, v in n.value.items()}
    if isinstance(n.value, list):
        return [_plain(v) for v in n.value]
    return n.value


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, msg, node: _Node | None):
        raise SpecError(msg, node.line if node is not None else None, self.source)

    def block(self, parent: _Node, key: str, required=True) -> _Node | None:
        if key not in parent.value:
            if required:
                self.fail(f"missing required block '{key}'", parent)
            return None
        node = parent.value[key]
        if not isinstance(node.value, dict):
            self.fail(f"'{key}' must be a mapping", node)
        return node

    def keys(self, node: _Node, allowed: set[str], where: str):
        for k, v in node.value.items():
            if k not in allowed:
                self.fail(f"unknown key '{k}' in {where} (allowed: {', '.join(sorted(allowed))})", v)

    def number(self, node: _Node, key: str, default=None, required=False, positive=False, nonneg=False, allow_null=False):
        if key not in node.value:
            if required:
                self.fail(f"missing required key '{key}'", node)
            return default
        v = node.value[key]
        if v.value is None and allow_null:
            return None
        if isinstance(v.value, bool) or not isinstance(v.value, (int, float)):
            try:
                val = float(v.value)
            except (TypeError, ValueError):
                self.fail(f"'{key}' must be a number, got {v.value!r}", v)
        else:
            val = float(v.value)
        if not math.isfinite(val):
            self.fail(f"'{key}' must be finite", v)
        if positive and not val > 0:
            self.fail(f"'{key}' must be positive", v)
        if nonneg and val < 0:
            self.fail(f"'{key}' must be nonnegative", v)
        return val


def _endpoint(v):
    if v is None:
        return None
    if isinstance(v, str) and v.strip().lower() in {"inf", "+inf", "-inf"}:
        return None
    return float(v)


def parse_spec(text: str, source: str = "<spec>") -> ProblemSpec:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecError(f"malformed YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None, source) from None
    if root is None:
        raise SpecError("empty spec", None, source)
    top = _wrap(root)
    r = _Reader(source)
    if not isinstance(top.value, dict):
        r.fail("spec must be a mapping", top)
    r.keys(top, {"schema_version", "model", "reward", "solver", "mc"}, "spec")
    if "schema_version" not in top.value:
        r.fail("missing 'schema_version'", top)
    ver = top.value["schema_version"]
    if ver.value != SCHEMA_VERSION:
        r.fail(f"unsupported schema_version {ver.value!r} (expected {SCHEMA_VERSION})", ver)

    # model
    mn = r.block(top, "model")
    r.keys(mn, {"drift", "sigma", "jumps", "q"}, "model")
    drift = r.number(mn, "drift", required=True)
    sigma = r.number(mn, "sigma", default=0.0, nonneg=True)
    q = r.number(mn, "q", default=0.0, nonneg=True)
    jumps = []
    if "jumps" in mn.value:
        jn = mn.value["jumps"]
        if not isinstance(jn.value, list):
            r.fail("'jumps' must be a list of {rate, decay}", jn)
        for item in jn.value:
            if not isinstance(item.value, dict):
                r.fail("each jump must be a mapping {rate, decay}", item)
            r.keys(item, {"rate", "decay"}, "jump")
            jumps.append(JumpTerm(r.number(item, "rate", required=True, positive=True),
                                  r.number(item, "decay", required=True, positive=True)))
    try:
        model = LevyModel(drift, sigma, tuple(jumps))
    except ModelError as exc:
        r.fail(str(exc), mn)
    if model.sigma == 0.0 and model.drift <= 0:
        r.fail("bounded-variation models need a positive drift", mn)
    if q == 0.0 and model.mean_drift <= 0:
        r.fail(
            f"q = 0 requires psi'(0+) > 0 (got {model.mean_drift:.6g}): the process must drift to +inf",
            mn.value.get("q", mn),
        )

    # reward
    rn = r.block(top, "reward")
    r.keys(rn, {"name", "params", "pieces"}, "reward")
    desc = _plain(rn)
    try:
        if "pieces" in rn.value:
            if "name" in rn.value:
                r.fail("give either 'name' or 'pieces', not both", rn)
            pn = rn.value["pieces"]
            if not isinstance(pn.value, list) or not pn.value:
                r.fail("'pieces' must be a non-empty list", pn)
            plist = []
            for item in pn.value:
                if not isinstance(item.value, dict):
                    r.fail("each piece must be a mapping {left, right, terms, anchor}", item)
                r.keys(item, {"left", "right", "terms", "anchor"}, "piece")
                d = _plain(item)
                d["left"], d["right"] = _endpoint(d.get("left")), _endpoint(d.get("right"))
                plist.append(d)
            g = from_pieces(plist)
        else:
            if "name" not in rn.value:
                r.fail("reward needs 'name' (built-in) or 'pieces'", rn)
            name = rn.value["name"].value
            if name not in BUILTINS:
                r.fail(f"unknown reward '{name}' (built-ins: {', '.join(sorted(BUILTINS))})", rn.value["name"])
            params = _plain(rn.value["params"]) if "params" in rn.value else {}
            try:
                g = BUILTINS[name](**params)
            except TypeError as exc:
                r.fail(f"bad parameters for '{name}': {exc}", rn.value.get("params", rn))
        check_reward(g)
    except RewardError as exc:
        r.fail(str(exc), rn)

    # solver
    grid = GridSpec()
    shift = None
    sn = r.block(top, "solver", required=False)
    if sn is not None:
        allowed = {"grid_step", "refine", "refine_radius", "left_pad_decays", "right_pad", "a_min_offset", "touch_tol", "kappa_tol", "boundary_shift"}
        r.keys(sn, allowed, "solver")
        grid = GridSpec(
            step=r.number(sn, "grid_step", grid.step, positive=True),
            refine=int(r.number(sn, "refine", grid.refine, positive=True)),
            refine_radius=r.number(sn, "refine_radius", grid.refine_radius, nonneg=True),
            left_pad_decays=r.number(sn, "left_pad_decays", grid.left_pad_decays, positive=True),
            right_pad=r.number(sn, "right_pad", grid.right_pad, positive=True),
            a_min_offset=r.number(sn, "a_min_offset", grid.a_min_offset, positive=True),
            touch_tol=r.number(sn, "touch_tol", grid.touch_tol, positive=True),
            kappa_tol=r.number(sn, "kappa_tol", grid.kappa_tol, positive=True),
        )
        if "boundary_shift" in sn.value:
            bs = sn.value["boundary_shift"]
            if not isinstance(bs.value, dict):
                r.fail("'boundary_shift' must be {index, delta}", bs)
            r.keys(bs, {"index", "delta"}, "boundary_shift")
            shift = (int(r.number(bs, "index", required=True, nonneg=True)), r.number(bs, "delta", required=True))

    # mc
    mc = MCBlock()
    mcn = r.block(top, "mc", required=False)
    if mcn is not None:
        r.keys(mcn, {"x0", "n_paths", "seed", "horizon", "dt", "gamma"}, "mc")
        x0 = mcn.value.get("x0")
        if x0 is not None:
            vals = x0.value if isinstance(x0.value, list) else [x0]
            try:
                mc.x0 = [float(v.value) for v in vals]
            except (TypeError, ValueError):
                r.fail("'x0' must be a number or a list of numbers", x0)
        mc.n_paths = int(r.number(mcn, "n_paths", mc.n_paths, positive=True))
        mc.seed = int(r.number(mcn, "seed", mc.seed, nonneg=True))
        mc.horizon = r.number(mcn, "horizon", None, positive=True, allow_null=True)
        mc.dt = r.number(mcn, "dt", None, positive=True, allow_null=True)
        if "gamma" in mcn.value:
            gn = mcn.value["gamma"]
            try:
                mc.gamma = parse_gamma(_plain(gn))
            except (TypeError, ValueError) as exc:
                r.fail(f"bad 'gamma': {exc}", gn)

    return ProblemSpec(model, q, g, desc, grid, shift, mc, source)


def parse_gamma(raw) -> list[tuple[float, float]]:
    """``[[left, right], ...]`` with null for infinite ends."""
    out = []
    for item in raw:
        if len(item) != 2:
            raise ValueError("each interval needs two endpoints")
        l, r = item
        l = -math.inf if _endpoint(l) is None else float(l)
        r = math.inf if _endpoint(r) is None else float(r)
        if l > r:
            raise ValueError(f"empty interval [{l}, {r}]")
        out.append((l, r))
    out.sort()
    for (_, r0), (l1, _) in zip(out, out[1:]):
        if l1 <= r0:
            raise ValueError("intervals overlap or touch; merge them")
    return out


def gamma_to_json(gamma) -> list[list]:
    return [[None if math.isinf(l) else l, None if math.isinf(r) else r] for l, r in gamma]


def load_spec(path: str | Path) -> ProblemSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}", None, str(path)) from None
    return parse_spec(text, str(path))
