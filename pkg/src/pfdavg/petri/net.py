"""Stochastic Petri nets with predicates: structure, expression parsing, compilation.

Guards are conjunctions of comparisons between a variable and a constant.
Assignments set, increment, or reflect (``x = c - x``) a variable. Those
forms cover the safety models built here and compile to flat integer arrays
that both simulation kernels consume.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..model import SafetyParams, derive_rates

# ---------------------------------------------------------------------------
# Delay laws
# ---------------------------------------------------------------------------

KIND_EXP, KIND_DIRAC, KIND_IPA = 0, 1, 2


@dataclass(frozen=True)
class Exp:
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError("exp rate must be >= 0")


@dataclass(frozen=True)
class Dirac:
    delay: float = 0.0

    def __post_init__(self):
        if not self.delay >= 0:
            raise ValueError("dirac delay must be >= 0")


@dataclass(frozen=True)
class Ipa:
    """Fires at calendar times k*period (k >= 1) when enabled at that instant."""

    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("ipa period must be > 0")


DelayLaw = Union[Exp, Dirac, Ipa]

# ---------------------------------------------------------------------------
# Guards and assignments
# ---------------------------------------------------------------------------

OPS = ("==", "!=", "<", "<=", ">", ">=")
OP_CODE = {op: i for i, op in enumerate(OPS)}
ASSIGN_SET, ASSIGN_ADD, ASSIGN_RSUB = 0, 1, 2


@dataclass(frozen=True)
class Comparison:
    var: str
    op: str
    value: int

    def __str__(self):
        return f"{self.var} {self.op} {self.value}"


@dataclass(frozen=True)
class Assignment:
    var: str
    op: int  # ASSIGN_*
    value: int

    def __str__(self):
        if self.op == ASSIGN_SET:
            return f"{self.var} = {self.value}"
        if self.op == ASSIGN_ADD:
            sign = "+" if self.value >= 0 else "-"
            return f"{self.var} = {self.var} {sign} {abs(self.value)}"
        return f"{self.var} = {self.value} - {self.var}"


_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_CMP_RE = re.compile(rf"^\s*({_NAME})\s*(==|!=|<=|>=|<|>)\s*(\S+)\s*$")


def _literal(text: str) -> int:
    low = text.strip().lower()
    if low == "true":
        return 1
    if low == "false":
        return 0
    try:
        return int(low)
    except ValueError:
        raise ValueError(f"expected an integer or boolean literal, got {text!r}") from None


def parse_guard(text: str) -> tuple:
    """Parse ``"nbOK > 0 && CCF_DD == true"`` into a tuple of comparisons.

    An empty string (or ``"true"``) is the always-true guard. A bare name
    ``x`` means ``x != 0`` and ``!x`` means ``x == 0``.
    """
    text = text.strip()
    if text.startswith("??"):
        text = text[2:].strip()
    if not text or text.lower() == "true":
        return ()
    out = []
    for part in re.split(r"&&|\band\b", text):
        part = part.strip()
        m = _CMP_RE.match(part)
        if m:
            out.append(Comparison(m.group(1), m.group(2), _literal(m.group(3))))
        elif re.fullmatch(rf"!\s*{_NAME}", part):
            out.append(Comparison(part[1:].strip(), "==", 0))
        elif re.fullmatch(_NAME, part):
            out.append(Comparison(part, "!=", 0))
        else:
            raise ValueError(f"cannot parse guard term {part!r}")
    return tuple(out)


def parse_assignment(text: str) -> tuple:
    """Parse ``"nbOK = nbOK - 1; CCF_DD = true"`` into assignments.

    Accepted forms: ``x = c``, ``x = x + c``, ``x = x - c``, ``x += c``,
    ``x -= c``, ``x = c - x`` and ``x = !x``.
    """
    text = text.strip()
    if text.startswith("!!"):
        text = text[2:].strip()
    out = []
    for stmt in filter(None, (s.strip() for s in text.split(";"))):
        if m := re.fullmatch(rf"({_NAME})\s*([+-])=\s*(\S+)", stmt):
            sign = 1 if m.group(2) == "+" else -1
            out.append(Assignment(m.group(1), ASSIGN_ADD, sign * _literal(m.group(3))))
            continue
        m = re.fullmatch(rf"({_NAME})\s*=\s*(.+)", stmt)
        if not m:
            raise ValueError(f"cannot parse assignment {stmt!r}")
        var, rhs = m.group(1), m.group(2).strip()
        if rhs == f"!{var}":
            out.append(Assignment(var, ASSIGN_RSUB, 1))
        elif mm := re.fullmatch(rf"{var}\s*([+-])\s*(\S+)", rhs):
            sign = 1 if mm.group(1) == "+" else -1
            out.append(Assignment(var, ASSIGN_ADD, sign * _literal(mm.group(2))))
        elif mm := re.fullmatch(rf"(\S+)\s*-\s*{var}", rhs):
            out.append(Assignment(var, ASSIGN_RSUB, _literal(mm.group(1))))
        else:
            out.append(Assignment(var, ASSIGN_SET, _literal(rhs)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Net structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Place:
    id: str
    tokens: int = 0
    label: str = ""


@dataclass(frozen=True)
class Transition:
    id: str
    law: DelayLaw
    inputs: tuple = ()  # (place id, weight)
    outputs: tuple = ()
    guard: tuple = ()  # Comparison, conjunctive
    assignments: tuple = ()
    label: str = ""


@dataclass(frozen=True)
class PetriNet:
    """Places, variables, transitions and the system-failed predicate.

    Transition order is significant: simultaneous zero-delay firings are
    resolved in ascending list position. ``groups`` lists place sets that
    must always hold exactly one token between them (checked in debug runs).
    """

    places: tuple
    variables: dict
    transitions: tuple
    stat: tuple  # Comparison, conjunctive
    groups: tuple = ()

    def __post_init__(self):
        place_ids = [p.id for p in self.places]
        if len(set(place_ids)) != len(place_ids):
            raise ValueError("duplicate place ids")
        trans_ids = [t.id for t in self.transitions]
        if len(set(trans_ids)) != len(trans_ids):
            raise ValueError("duplicate transition ids")
        known = set(place_ids)
        for p in self.places:
            if p.tokens < 0:
                raise ValueError(f"place {p.id} has negative tokens")
        for t in self.transitions:
            for place, weight in t.inputs + t.outputs:
                if place not in known:
                    raise ValueError(f"transition {t.id} references unknown place {place!r}")
                if weight < 1:
                    raise ValueError(f"transition {t.id}: arc weights must be >= 1")
            for c in t.guard:
                self._check_cmp(c, f"guard of {t.id}")
            for a in t.assignments:
                if a.var not in self.variables:
                    raise ValueError(f"assignment of {t.id} uses undeclared variable {a.var!r}")
        for c in self.stat:
            self._check_cmp(c, "stat predicate")
        for g in self.groups:
            for place in g:
                if place not in known:
                    raise ValueError(f"group references unknown place {place!r}")

    def _check_cmp(self, c, where):
        if c.var not in self.variables:
            raise ValueError(f"{where} uses undeclared variable {c.var!r}")
        if c.op not in OP_CODE:
            raise ValueError(f"{where}: unknown operator {c.op!r}")

    def compile(self) -> "CompiledNet":
        return CompiledNet.from_net(self)


def _csr(rows, width):
    ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    flat = []
    for i, row in enumerate(rows):
        ptr[i + 1] = ptr[i] + len(row)
        flat.extend(row)
    cols = [np.array([r[c] for r in flat], dtype=np.int64) for c in range(width)]
    return (ptr, *cols)


@dataclass(frozen=True, eq=False)
class CompiledNet:
    """Flat array form of a net, shared by the compiled and Python kernels."""

    place_ids: tuple
    var_names: tuple
    transition_ids: tuple
    marking0: np.ndarray
    vars0: np.ndarray
    kind: np.ndarray
    param: np.ndarray
    in_ptr: np.ndarray
    in_place: np.ndarray
    in_weight: np.ndarray
    out_ptr: np.ndarray
    out_place: np.ndarray
    out_weight: np.ndarray
    g_ptr: np.ndarray
    g_var: np.ndarray
    g_op: np.ndarray
    g_val: np.ndarray
    a_ptr: np.ndarray
    a_var: np.ndarray
    a_op: np.ndarray
    a_val: np.ndarray
    s_var: np.ndarray
    s_op: np.ndarray
    s_val: np.ndarray
    groups: tuple

    @classmethod
    def from_net(cls, net: PetriNet) -> "CompiledNet":
        pidx = {p.id: i for i, p in enumerate(net.places)}
        var_names = tuple(net.variables)
        vidx = {v: i for i, v in enumerate(var_names)}
        kinds, params = [], []
        for t in net.transitions:
            if isinstance(t.law, Exp):
                kinds.append(KIND_EXP)
                params.append(t.law.rate)
            elif isinstance(t.law, Dirac):
                kinds.append(KIND_DIRAC)
                params.append(t.law.delay)
            elif isinstance(t.law, Ipa):
                kinds.append(KIND_IPA)
                params.append(t.law.period)
            else:
                raise TypeError(f"unsupported delay law {t.law!r}")
        in_ptr, in_place, in_weight = _csr(
            [[(pidx[p], w) for p, w in t.inputs] for t in net.transitions], 2)
        out_ptr, out_place, out_weight = _csr(
            [[(pidx[p], w) for p, w in t.outputs] for t in net.transitions], 2)
        g_ptr, g_var, g_op, g_val = _csr(
            [[(vidx[c.var], OP_CODE[c.op], int(c.value)) for c in t.guard]
             for t in net.transitions], 3)
        a_ptr, a_var, a_op, a_val = _csr(
            [[(vidx[a.var], a.op, int(a.value)) for a in t.assignments]
             for t in net.transitions], 3)
        s_var = np.array([vidx[c.var] for c in net.stat], dtype=np.int64)
        s_op = np.array([OP_CODE[c.op] for c in net.stat], dtype=np.int64)
        s_val = np.array([int(c.value) for c in net.stat], dtype=np.int64)
        return cls(
            place_ids=tuple(p.id for p in net.places),
            var_names=var_names,
            transition_ids=tuple(t.id for t in net.transitions),
            marking0=np.array([p.tokens for p in net.places], dtype=np.int64),
            vars0=np.array([int(net.variables[v]) for v in var_names], dtype=np.int64),
            kind=np.array(kinds, dtype=np.int64),
            param=np.array(params, dtype=np.float64),
            in_ptr=in_ptr, in_place=in_place, in_weight=in_weight,
            out_ptr=out_ptr, out_place=out_place, out_weight=out_weight,
            g_ptr=g_ptr, g_var=g_var, g_op=g_op, g_val=g_val,
            a_ptr=a_ptr, a_var=a_var, a_op=a_op, a_val=a_val,
            s_var=s_var, s_op=s_op, s_val=s_val,
            groups=tuple(tuple(pidx[p] for p in g) for g in net.groups),
        )


# ---------------------------------------------------------------------------
# Case-study net
# ---------------------------------------------------------------------------

CHANNEL_MODES = ("OK", "DD", "DUT", "DUU", "RepDUT")


def build_case_net(params: SafetyParams) -> PetriNet:
    """Net of N identical channels plus one common-cause block per failure mode.

    ``nbOK`` counts operative channels; the system is failed while
    ``nbOK < M``. A common cause flag, once raised, drives every channel that
    is still OK into the matching failure through zero-delay transitions and
    is lowered again when no OK channel remains.
    """
    r = derive_rates(params)
    n = params.n
    places, transitions, groups = [], [], []
    failures = (("DD", r.dd_ind, r.dd_ccf), ("DUT", r.dut_ind, r.dut_ccf),
                ("DUU", r.duu_ind, r.duu_ccf))
    dec = parse_assignment("nbOK -= 1")
    inc = parse_assignment("nbOK += 1")

    channel_places = []
    for c in range(1, n + 1):
        ids = [f"C_{c}_{mode}" for mode in CHANNEL_MODES]
        channel_places.append(ids)
        groups.append(tuple(ids))
        for mode, pid in zip(CHANNEL_MODES, ids):
            places.append(Place(pid, 1 if mode == "OK" else 0, f"channel {c} {mode}"))
        ok, dd, dut, duu, rep = ids
        for mode, ind, _ in failures:
            target = {"DD": dd, "DUT": dut, "DUU": duu}[mode]
            transitions.append(Transition(
                f"C{c}_fail_{mode}", Exp(ind), ((ok, 1),), ((target, 1),), (), dec,
                f"channel {c} independent {mode} failure"))
        transitions.append(Transition(
            f"C{c}_repair_DD", Exp(params.mu_dd), ((dd, 1),), ((ok, 1),), (), inc,
            f"channel {c} DD repair"))
        transitions.append(Transition(
            f"C{c}_test", Ipa(params.t1), ((dut, 1),), ((rep, 1),), (), (),
            f"channel {c} proof test reveals DUT"))
        transitions.append(Transition(
            f"C{c}_repair_DUT", Exp(params.mu_dut), ((rep, 1),), ((ok, 1),), (), inc,
            f"channel {c} DUT repair"))

    for mode, _, ccf in failures:
        idle, active = f"CCF_{mode}_idle", f"CCF_{mode}_active"
        flag = f"CCF_{mode}"
        places.append(Place(idle, 1, f"no common cause {mode}"))
        places.append(Place(active, 0, f"common cause {mode} in progress"))
        groups.append((idle, active))
        transitions.append(Transition(
            f"CCF_{mode}_occur", Exp(ccf), ((idle, 1),), ((active, 1),),
            parse_guard("nbOK > 0"), parse_assignment(f"{flag} = true"),
            f"common cause {mode} strikes"))
        for c, ids in enumerate(channel_places, start=1):
            target = ids[CHANNEL_MODES.index(mode)]
            transitions.append(Transition(
                f"CCF_{mode}_hit_C{c}", Dirac(0.0), ((ids[0], 1),), ((target, 1),),
                parse_guard(f"{flag} == true"), dec,
                f"common cause {mode} fails channel {c}"))
        transitions.append(Transition(
            f"CCF_{mode}_reset", Dirac(0.0), ((active, 1),), ((idle, 1),),
            parse_guard("nbOK == 0"), parse_assignment(f"{flag} = false"),
            f"common cause {mode} cascade complete"))

    variables = {"nbOK": n, "CCF_DD": False, "CCF_DUT": False, "CCF_DUU": False}
    return PetriNet(
        places=tuple(places),
        variables=variables,
        transitions=tuple(transitions),
        stat=(Comparison("nbOK", "<", params.m),),
        groups=tuple(groups),
    )
