"""Text model files.

Grammar (one record per line, fields separated by TAB, strings JSON-encoded,
floats written with ``repr`` so every value round-trips exactly)::

    metboost-model v1
    mode        <baseline|metboost>
    outcome     <json str>
    id          <json str>
    init        <float>
    shrinkage   <float>
    params      <json object>
    groups      <G> <json list of labels>
    predictors  <P>
    predictor   <json name> continuous
    predictor   <json name> categorical <json list of levels>
    group_column <int, -1 if none>
    stages      <M>
    stage       <m> <n_nodes> <n_leaves>
      split     <id> <left> <right> <L|R> <gain> <count> <value> <rule...>
      surrogate <agreement> <rule...>          (follows its split, in rank order)
      leaf      <id> <leaf index> <value> <count>
      beta      <k floats>
      var       <k between> | <k within>        (metboost only)
      b         <node> <n> <group>:<value> ...  (metboost only; nonzero cells)
    end

A rule is ``c <feature> <threshold> <0|1 reverse>`` or
``k <feature> <json left levels> <json known levels>``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ensemble import BoostModel, BoostParams, Stage
from .errors import FormatError
from .tree import Node, SplitRule, Tree

HEADER = "metboost-model v1"


def _f(x) -> str:
    return repr(float(x))


def _rule_fields(rule: SplitRule):
    if rule.categorical:
        return ["k", str(rule.feature), json.dumps(list(rule.left_levels)),
                json.dumps(list(rule.known_levels))]
    return ["c", str(rule.feature), _f(rule.threshold), "1" if rule.reverse else "0"]


def dumps(model: BoostModel) -> str:
    if model.n_stages == 0:
        raise FormatError("refusing to write a model with zero stages")
    out = [HEADER]

    def put(*fields):
        out.append("\t".join(fields))

    put("mode", model.mode)
    put("outcome", json.dumps(model.outcome_name))
    put("id", json.dumps(model.id_name))
    put("init", _f(model.init))
    put("shrinkage", _f(model.shrinkage))
    put("params", json.dumps(model.params.__dict__, sort_keys=True))
    put("groups", str(len(model.group_labels)), json.dumps(list(model.group_labels)))
    put("predictors", str(len(model.names)))
    for name, lv in zip(model.names, model.levels):
        if lv is None:
            put("predictor", json.dumps(name), "continuous")
        else:
            put("predictor", json.dumps(name), "categorical", json.dumps(list(lv)))
    put("group_column", str(model.group_column))
    put("stages", str(model.n_stages))
    for m, st in enumerate(model.stages):
        tree = st.tree
        put("stage", str(m), str(len(tree.nodes)), str(tree.n_leaves))
        for i, nd in enumerate(tree.nodes):
            if nd.is_leaf:
                put("leaf", str(i), str(nd.leaf), _f(nd.value), str(nd.count))
                continue
            put("split", str(i), str(nd.left), str(nd.right), "L" if nd.default_left else "R",
                _f(nd.gain), str(nd.count), _f(nd.value), *_rule_fields(nd.rule))
            for s, agree in zip(nd.surrogates, nd.agreements):
                put("surrogate", _f(agree), *_rule_fields(s))
        put("beta", *[_f(v) for v in st.beta])
        if st.b is not None:
            put("var", *[_f(v) for v in st.between], "|", *[_f(v) for v in st.within])
            for j in range(st.b.shape[0]):
                nz = np.flatnonzero(st.b[j])
                put("b", str(j), str(nz.size), *[f"{gi}:{_f(st.b[j, gi])}" for gi in nz])
    out.append("end")
    return "\n".join(out) + "\n"


def save_model(model: BoostModel, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


class _Lines:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    def peek(self):
        return self.lines[self.pos].split("\t") if self.pos < len(self.lines) else None

    def next(self, key=None):
        if self.pos >= len(self.lines):
            raise FormatError(f"line {self.pos + 1}: unexpected end of file"
                              + (f" (expected {key!r})" if key else ""))
        fields = self.lines[self.pos].split("\t")
        self.pos += 1
        if key is not None and fields[0] != key:
            raise FormatError(f"line {self.pos}: expected {key!r}, found {fields[0]!r}")
        return fields

    def fail(self, msg):
        raise FormatError(f"line {self.pos}: {msg}")


def _parse_rule(fields, lines: _Lines) -> SplitRule:
    if fields[0] == "c" and len(fields) == 4:
        return SplitRule(int(fields[1]), threshold=float(fields[2]), reverse=fields[3] == "1")
    if fields[0] == "k" and len(fields) == 4:
        return SplitRule(int(fields[1]), left_levels=tuple(json.loads(fields[2])),
                         known_levels=tuple(json.loads(fields[3])))
    lines.fail("malformed rule")


def loads(text: str) -> BoostModel:
    lines = _Lines(text)
    if lines.peek() is None or lines.lines[0] != HEADER:
        first = lines.lines[0] if lines.lines else ""
        raise FormatError(f"line 1: unsupported header {first!r}, expected {HEADER!r}")
    lines.next()
    try:
        return _parse_body(lines)
    except FormatError:
        raise
    except (ValueError, IndexError, KeyError, TypeError) as exc:
        raise FormatError(f"line {lines.pos}: {exc}") from None


def _parse_body(lines: _Lines) -> BoostModel:
    mode = lines.next("mode")[1]
    outcome = json.loads(lines.next("outcome")[1])
    id_name = json.loads(lines.next("id")[1])
    init = float(lines.next("init")[1])
    shrinkage = float(lines.next("shrinkage")[1])
    params = BoostParams(**json.loads(lines.next("params")[1]))
    f = lines.next("groups")
    group_labels = tuple(json.loads(f[2]))
    if len(group_labels) != int(f[1]):
        lines.fail("group count does not match label list")
    g = len(group_labels)
    n_pred = int(lines.next("predictors")[1])
    names, levels = [], []
    for _ in range(n_pred):
        f = lines.next("predictor")
        names.append(json.loads(f[1]))
        levels.append(None if f[2] == "continuous" else tuple(json.loads(f[3])))
    group_column = int(lines.next("group_column")[1])
    f = lines.next("stages")
    stages_line = lines.pos
    n_stages = int(f[1])
    if n_stages < 1:
        lines.fail("model has no stages")
    stages = []
    for m in range(n_stages):
        f = lines.peek()
        if f is None or f[0] != "stage":
            raise FormatError(f"line {stages_line}: stage count {n_stages} but only {m} stages"
                              f" present (line {lines.pos + 1})")
        f = lines.next("stage")
        if int(f[1]) != m:
            lines.fail(f"expected stage {m}")
        n_nodes, n_leaves = int(f[2]), int(f[3])
        nodes = []
        for i in range(n_nodes):
            f = lines.next()
            if f[0] == "leaf":
                nodes.append(Node(leaf=int(f[2]), value=float(f[3]), count=int(f[4])))
            elif f[0] == "split":
                rule = _parse_rule(f[8:], lines)
                nd = Node(rule=rule, left=int(f[2]), right=int(f[3]), default_left=f[4] == "L",
                          gain=float(f[5]), count=int(f[6]), value=float(f[7]))
                while lines.peek() is not None and lines.peek()[0] == "surrogate":
                    s = lines.next()
                    nd.agreements.append(float(s[1]))
                    nd.surrogates.append(_parse_rule(s[2:], lines))
                nodes.append(nd)
            else:
                lines.fail(f"expected node record, found {f[0]!r}")
            if int(f[1]) != i:
                lines.fail(f"node id {f[1]} out of order")
        tree = Tree(nodes, n_pred)
        if tree.n_leaves != n_leaves:
            lines.fail("leaf count mismatch")
        beta = np.array([float(v) for v in lines.next("beta")[1:]])
        if beta.size != n_leaves:
            lines.fail("beta length mismatch")
        st = Stage(tree, beta)
        if mode == "metboost":
            f = lines.next("var")[1:]
            bar = f.index("|")
            st.between = np.array([float(v) for v in f[:bar]])
            st.within = np.array([float(v) for v in f[bar + 1:]])
            b = np.zeros((n_leaves, g))
            for j in range(n_leaves):
                f = lines.next("b")
                if int(f[1]) != j or int(f[2]) != len(f) - 3:
                    lines.fail("malformed b record")
                for cell in f[3:]:
                    gi, v = cell.split(":", 1)
                    b[j, int(gi)] = float(v)
            st.b = b
        stages.append(st)
    f = lines.peek()
    if f is None or f[0] != "end":
        if f is not None and f[0] == "stage":
            raise FormatError(f"line {stages_line}: stage count {n_stages} but more stages follow"
                              f" (line {lines.pos + 1})")
        raise FormatError(f"line {lines.pos + 1}: expected 'end' (file truncated or corrupt)")
    lines.next("end")
    return BoostModel(mode, init, shrinkage, stages, tuple(names), tuple(levels), group_labels,
                      params, id_name, outcome, group_column)


def load_model(path) -> BoostModel:
    return loads(Path(path).read_text(encoding="utf-8"))
