"""JSON problem files and the registry of ``g`` builders.

A problem file looks like::

    {"builder": "linear", "params": {"A": [[1, 1]], "b": [1]},
     "n": 2, "m": 1, "p": 1, "c": [1, 0], "M": [[-1]],
     "omega": {"lower": [0, 0], "upper": [1, 1]}}

``lower``/``upper`` entries may be ``null`` or ``"inf"``/``"-inf"`` for
unbounded components. Builders that know their whole problem (such as
``hovercraft_ocp``) may omit ``c``, ``M`` and ``omega``; any dimensions given
in the file are then checked against the built problem.
"""
from __future__ import annotations

import json
from typing import Callable, Dict, Union

import numpy as np

from .errors import UsageError
from .problem import ConvexSet, NonlinearMap, ParametricProblem, QuadConstraint

Built = Union[NonlinearMap, ParametricProblem]
_BUILDERS: Dict[str, Callable[..., Built]] = {}


def register_builder(name: str):
    def deco(fn):
        _BUILDERS[name] = fn
        return fn
    return deco


def builders():
    return sorted(_BUILDERS)


@register_builder("linear")
def _linear(A, b=None):
    return NonlinearMap.linear(A, b)


@register_builder("quadratic")
def _quadratic(A, b=None, curvature=0.0):
    """``g_i(x) = A_i x - b_i + curvature * ||x||^2 / 2``: known, tunable Hessians."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
    eps = float(curvature)
    return NonlinearMap(
        n=n, m=m,
        fun=lambda x: A @ x - b + 0.5 * eps * float(x @ x),
        jac=lambda x: A + eps * np.tile(x, (m, 1)),
        lag_hess=lambda x, lam: eps * float(np.sum(lam)) * np.eye(n),
        name="quadratic",
    )


@register_builder("planted_bug")
def _planted_bug():
    """``g(x) = x^2`` with a deliberately wrong Jacobian ``3x`` (for derivative checks)."""
    return NonlinearMap(
        n=1, m=1,
        fun=lambda x: np.array([x[0] ** 2]),
        jac=lambda x: np.array([[3.0 * x[0]]]),
        name="planted_bug",
    )


@register_builder("hovercraft_ocp")
def _hovercraft(N=15, dt=0.05, mode="slack", params=None, weights=None):
    from .hovercraft import HovercraftParams, OcpWeights, build_ocp

    hp = HovercraftParams(**(params or {}))
    w = OcpWeights(**{k: tuple(v) for k, v in (weights or {}).items()})
    return build_ocp(hp, w, N, dt, mode)


def _bounds(v, n, fill, name):
    if v is None:
        return np.full(n, fill)
    out = np.array([fill if e is None else float(e) for e in v], dtype=float)
    if out.shape[0] != n:
        raise UsageError(f"omega.{name}: expected length {n}, got {out.shape[0]}")
    return out


def omega_from_dict(d: dict, n: int) -> ConvexSet:
    lin_A = d.get("lin_A")
    lin_b = d.get("lin_b")
    quad = [QuadConstraint(np.asarray(q["P"], float), np.asarray(q["q"], float), float(q.get("r", 0.0)))
            for q in d.get("quad", [])]
    return ConvexSet(
        _bounds(d.get("lower"), n, -np.inf, "lower"),
        _bounds(d.get("upper"), n, np.inf, "upper"),
        None if lin_A is None else np.asarray(lin_A, float).reshape(-1, n),
        None if lin_b is None else np.asarray(lin_b, float),
        quad,
    )


def problem_from_dict(d: dict) -> ParametricProblem:
    name = d.get("builder")
    if name not in _BUILDERS:
        raise UsageError(f"builder: unknown {name!r}; registered: {', '.join(builders())}")
    try:
        built = _BUILDERS[name](**d.get("params", {}))
    except TypeError as exc:
        raise UsageError(f"params for builder {name!r}: {exc}") from exc
    if isinstance(built, ParametricProblem):
        prob = built
    else:
        n = int(d.get("n", built.n))
        if "c" not in d or "M" not in d:
            raise UsageError(f"builder {name!r} needs 'c' and 'M' in the problem file")
        M = np.asarray(d["M"], dtype=float)
        if M.size == 0:
            M = np.zeros((built.m, int(d.get("p", 0))))
        prob = ParametricProblem(
            c=np.asarray(d["c"], float), g=built, M=M.reshape(built.m, -1),
            omega=omega_from_dict(d.get("omega", {}), n),
            H=None if d.get("H") is None else np.asarray(d["H"], float),
            name=d.get("name", name),
        )
    for key, val in (("n", prob.n), ("m", prob.m), ("p", prob.p)):
        if key in d and int(d[key]) != val:
            raise UsageError(f"{key}: file says {d[key]}, builder produced {val}")
    return prob


def load_problem(path) -> ParametricProblem:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read problem file {path}: {exc}") from exc
    return problem_from_dict(d)


def _enc_bounds(v):
    return [None if not np.isfinite(e) else float(e) for e in v]


def problem_to_dict(problem: ParametricProblem, builder: str, params: dict) -> dict:
    om = problem.omega
    d = {
        "builder": builder, "params": params, "name": problem.name,
        "n": problem.n, "m": problem.m, "p": problem.p,
        "c": problem.c.tolist(), "M": problem.M.tolist(),
        "omega": {"lower": _enc_bounds(om.lower), "upper": _enc_bounds(om.upper),
                  "quad": [{"P": q.P.tolist(), "q": q.q.tolist(), "r": q.r} for q in om.quad]},
    }
    if om.lin_A is not None:
        d["omega"]["lin_A"] = om.lin_A.tolist()
        d["omega"]["lin_b"] = om.lin_b.tolist()
    if problem.H is not None:
        d["H"] = problem.H.tolist()
    return d
