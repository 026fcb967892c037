"""Configuration-driven command line: simulate / compare / sweep.

Configs are YAML with strict key checking (unknown keys are rejected with
their line number).  Outputs are RFC-4180-style CSV, one file per requested
quantity, each carrying a leading comment line with the config hash and
grid, and a header row.  Complex quantities are split into `_re`/`_im`
columns.  Exit codes: 0 success, 1 configuration problem, 2 singular
propagator, 3 tolerance failure.
"""

import argparse
import hashlib
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .grids import TimeGrid
from .greens import SingularPropagatorError
from .master import FockSpace
from .model import (ConfigurationError, ConstantSchedule, CustomGaussian,
                    DecoupledThermal, DomainError, Mode, ModelSpec,
                    PartitionFreeThermal, QuenchSchedule, Reservoir,
                    Statistics, TabulatedSchedule, ValidationError,
                    thermal_occupation, uniform_band)
from .oracle import UnsupportedScopeError
from .pipeline import (build_greens_stack, oracle_outputs_for, run_master)
from . import oracle as oracle_mod

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SINGULAR = 2
EXIT_TOLERANCE = 3

QUANTITIES = ("coefficients", "occupations", "trace", "purity",
              "lesser_green_diag", "u_norm", "positivity_min_eig")

TOLERANCE_KEYS = ("u_err", "gless_err", "moment_err", "trace_dist",
                  "trace_drift", "herm_defect", "positivity_min")

DEFAULT_COMPARE_TOL = {"u_err": 1e-3, "gless_err": 1e-3,
                       "moment_err": 1e-3, "trace_dist": 1e-3}


class ConfigParseError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


# ---------------------------------------------------------------------------
# Marked YAML: values annotated with their source line
# ---------------------------------------------------------------------------


@dataclass
class _MNode:
    value: object
    line: int


def _to_marked(node, loader):
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, val_node in node.value:
            key = str(loader.construct_object(key_node))
            if key in out:
                raise ConfigParseError([f"line {key_node.start_mark.line + 1}: "
                                        f"duplicate key '{key}'"])
            out[key] = _to_marked(val_node, loader)
        return _MNode(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _MNode([_to_marked(v, loader) for v in node.value], line)
    return _MNode(loader.construct_object(node), line)


class _Ctx:
    """Error accumulator + strict map consumption."""

    def __init__(self):
        self.errors = []

    def fail(self, line, msg):
        self.errors.append(f"line {line}: {msg}")
        return None

    def as_map(self, mnode, what):
        if not isinstance(mnode.value, dict):
            return self.fail(mnode.line, f"{what} must be a mapping")
        return dict(mnode.value)

    def as_list(self, mnode, what):
        if not isinstance(mnode.value, list):
            return self.fail(mnode.line, f"{what} must be a list")
        return mnode.value

    def pop(self, d, key, parent, required=False, default=None):
        if d is None:
            return None
        if key in d:
            return d.pop(key)
        if required:
            self.errors.append(f"{parent[0]} (line {parent[1]}): missing required "
                               f"key '{key}'")
        return _MNode(default, parent[1]) if default is not None else None

    def reject_leftover(self, d, what):
        if not d:
            return
        for key, node in d.items():
            self.fail(node.line, f"unknown key '{key}' in {what}")

    def scalar(self, mnode, what, kind=float):
        try:
            v = kind(mnode.value)
            if kind is float and not math.isfinite(v) and not math.isinf(v):
                raise ValueError
            return v
        except (TypeError, ValueError):
            return self.fail(mnode.line, f"{what} must be a {kind.__name__}")


def _entry_to_complex(x):
    """Config number, or [re, im] pair, to a complex number."""
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    raise ValueError("expected a number or a [re, im] pair")


def _plain(mnode):
    if isinstance(mnode.value, dict):
        return {k: _plain(v) for k, v in mnode.value.items()}
    if isinstance(mnode.value, list):
        return [_plain(v) for v in mnode.value]
    return mnode.value


def _parse_value(ctx, mnode, kind, n_levels, what):
    """kind: 'real' scalar, 'vector' length-N complex, 'matrix' NxN complex."""
    raw = _plain(mnode)
    try:
        if kind == "real":
            if not isinstance(raw, (int, float)):
                raise ValueError("expected a real number")
            return float(raw)
        if kind == "vector":
            if isinstance(raw, (int, float)) and n_levels == 1:
                return np.array([complex(raw)])
            if isinstance(raw, list):
                if len(raw) == 2 and n_levels == 1 and all(
                        isinstance(v, (int, float)) for v in raw):
                    return np.array([_entry_to_complex(raw)])
                vec = np.array([_entry_to_complex(v) for v in raw])
                if vec.shape != (n_levels,):
                    raise ValueError(f"expected {n_levels} entries")
                return vec
            raise ValueError("expected a number or list of entries")
        if kind == "matrix":
            if isinstance(raw, (int, float)) and n_levels == 1:
                return np.array([[complex(raw)]])
            if isinstance(raw, list) and all(isinstance(r, list) for r in raw):
                mat = np.array([[_entry_to_complex(v) for v in row] for row in raw])
                if mat.shape != (n_levels, n_levels):
                    raise ValueError(f"expected a {n_levels}x{n_levels} matrix")
                return mat
            raise ValueError("expected a scalar (N=1) or nested [[...]] rows")
    except ValueError as exc:
        return ctx.fail(mnode.line, f"{what}: {exc}")
    return ctx.fail(mnode.line, f"{what}: unsupported value kind")


def _parse_schedule(ctx, mnode, kind, n_levels, what):
    if not isinstance(mnode.value, dict) or "form" not in mnode.value:
        val = _parse_value(ctx, mnode, kind, n_levels, what)
        return None if val is None else ConstantSchedule(val)
    d = dict(mnode.value)
    form_node = d.pop("form")
    form = str(form_node.value)
    parent = (what, mnode.line)
    if form == "constant":
        vnode = ctx.pop(d, "value", parent, required=True)
        ctx.reject_leftover(d, what)
        if vnode is None:
            return None
        val = _parse_value(ctx, vnode, kind, n_levels, what + ".value")
        return None if val is None else ConstantSchedule(val)
    if form == "quench":
        inode = ctx.pop(d, "initial", parent, required=True)
        tnode = ctx.pop(d, "times", parent, required=True)
        vnode = ctx.pop(d, "values", parent, required=True)
        ctx.reject_leftover(d, what)
        if None in (inode, tnode, vnode):
            return None
        initial = _parse_value(ctx, inode, kind, n_levels, what + ".initial")
        times = _plain(tnode)
        if not isinstance(times, list) or not all(isinstance(t, (int, float)) for t in times):
            return ctx.fail(tnode.line, f"{what}.times must be a list of numbers")
        vals_nodes = ctx.as_list(vnode, what + ".values")
        if vals_nodes is None or initial is None:
            return None
        values = [_parse_value(ctx, v, kind, n_levels, what + ".values") for v in vals_nodes]
        if any(v is None for v in values):
            return None
        try:
            return QuenchSchedule(initial=initial, times=tuple(float(t) for t in times),
                                  values=tuple(values))
        except ConfigurationError as exc:
            return ctx.fail(mnode.line, str(exc))
    if form == "tabulated":
        tnode = ctx.pop(d, "times", parent, required=True)
        vnode = ctx.pop(d, "values", parent, required=True)
        ctx.reject_leftover(d, what)
        if None in (tnode, vnode):
            return None
        times = _plain(tnode)
        vals_nodes = ctx.as_list(vnode, what + ".values")
        if vals_nodes is None:
            return None
        values = [_parse_value(ctx, v, kind, n_levels, what + ".values") for v in vals_nodes]
        if any(v is None for v in values):
            return None
        try:
            return TabulatedSchedule(times=np.asarray(times, dtype=float),
                                     values=np.stack(values))
        except (ConfigurationError, ValueError) as exc:
            return ctx.fail(mnode.line, str(exc))
    return ctx.fail(form_node.line, f"{what}: unknown schedule form '{form}'")


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RunConfig:
    model: ModelSpec
    initial_state: object
    grid: TimeGrid
    n_max: int
    outputs: list
    tolerances: dict
    config_hash: str
    text: str = ""

    def with_steps(self, steps: int) -> "RunConfig":
        return RunConfig(model=self.model, initial_state=self.initial_state,
                         grid=TimeGrid(self.grid.t0, self.grid.t_final, steps),
                         n_max=self.n_max, outputs=self.outputs,
                         tolerances=self.tolerances,
                         config_hash=self.config_hash, text=self.text)


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a config; raises ConfigParseError carrying
    one message per problem (with line references)."""
    ctx = _Ctx()
    loader = yaml.SafeLoader(text)
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigParseError([f"YAML syntax error: {exc}"]) from exc
    if node is None:
        raise ConfigParseError(["empty config"])
    root = _to_marked(node, loader)
    top = ctx.as_map(root, "config")
    if top is None:
        raise ConfigParseError(ctx.errors)

    parent = ("config", root.line)
    model_node = ctx.pop(top, "model", parent, required=True)
    init_node = ctx.pop(top, "initial_state", parent, required=True)
    grid_node = ctx.pop(top, "grid", parent, required=True)
    fock_node = ctx.pop(top, "fock", parent)
    outputs_node = ctx.pop(top, "outputs", parent)
    tol_node = ctx.pop(top, "tolerances", parent)
    ctx.reject_leftover(top, "config")

    spec = _parse_model(ctx, model_node) if model_node else None
    grid = _parse_grid(ctx, grid_node) if grid_node else None
    init = _parse_initial_state(ctx, init_node, spec) if init_node and spec else None
    n_max = _parse_fock(ctx, fock_node, spec)
    outputs = _parse_outputs(ctx, outputs_node)
    tolerances = _parse_tolerances(ctx, tol_node)

    if ctx.errors:
        raise ConfigParseError(ctx.errors)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
    return RunConfig(model=spec, initial_state=init, grid=grid, n_max=n_max,
                     outputs=outputs, tolerances=tolerances,
                     config_hash=digest, text=text)


def _parse_model(ctx, mnode):
    d = ctx.as_map(mnode, "model")
    if d is None:
        return None
    parent = ("model", mnode.line)
    stat_node = ctx.pop(d, "statistics", parent, required=True)
    levels_node = ctx.pop(d, "levels", parent, required=True)
    eps_node = ctx.pop(d, "eps_sys", parent, required=True)
    res_node = ctx.pop(d, "reservoirs", parent)
    ctx.reject_leftover(d, "model")
    if None in (stat_node, levels_node, eps_node):
        return None
    stat_txt = str(stat_node.value)
    try:
        stats = Statistics(stat_txt)
    except ValueError:
        return ctx.fail(stat_node.line, f"statistics must be boson or fermion, "
                                        f"got '{stat_txt}'")
    n = ctx.scalar(levels_node, "model.levels", int)
    if n is None or n < 1:
        return ctx.fail(levels_node.line, "model.levels must be a positive integer")
    eps_sched = _parse_schedule(ctx, eps_node, "matrix", n, "model.eps_sys")
    reservoirs = []
    if res_node is not None:
        lst = ctx.as_list(res_node, "model.reservoirs")
        for k, rnode in enumerate(lst or []):
            res = _parse_reservoir(ctx, rnode, n, f"model.reservoirs[{k}]")
            if res is not None:
                reservoirs.append(res)
    if eps_sched is None or ctx.errors:
        return None
    return ModelSpec(statistics=stats, n_levels=n, eps_sys=eps_sched,
                     reservoirs=tuple(reservoirs))


def _parse_reservoir(ctx, mnode, n_levels, what):
    d = ctx.as_map(mnode, what)
    if d is None:
        return None
    parent = (what, mnode.line)
    band_node = d.pop("band", None)
    modes_node = d.pop("modes", None)
    ctx.reject_leftover(d, what)
    if (band_node is None) == (modes_node is None):
        return ctx.fail(mnode.line, f"{what} needs exactly one of 'band' or 'modes'")
    if band_node is not None:
        bd = ctx.as_map(band_node, what + ".band")
        if bd is None:
            return None
        bparent = (what + ".band", band_node.line)
        nm = ctx.pop(bd, "modes", bparent, required=True)
        e0 = ctx.pop(bd, "e_min", bparent, required=True)
        e1 = ctx.pop(bd, "e_max", bparent, required=True)
        rate = ctx.pop(bd, "rate", bparent, required=True)
        level = ctx.pop(bd, "level", bparent, default=0)
        ctx.reject_leftover(bd, what + ".band")
        if None in (nm, e0, e1, rate):
            return None
        vals = [ctx.scalar(nm, "band.modes", int), ctx.scalar(e0, "band.e_min"),
                ctx.scalar(e1, "band.e_max"), ctx.scalar(rate, "band.rate"),
                ctx.scalar(level, "band.level", int)]
        if any(v is None for v in vals):
            return None
        try:
            return uniform_band(vals[0], vals[1], vals[2], vals[3],
                                n_levels=n_levels, level=vals[4])
        except ConfigurationError as exc:
            return ctx.fail(band_node.line, str(exc))
    lst = ctx.as_list(modes_node, what + ".modes")
    if lst is None:
        return None
    modes = []
    for k, mnode_k in enumerate(lst):
        md = ctx.as_map(mnode_k, f"{what}.modes[{k}]")
        if md is None:
            continue
        mparent = (f"{what}.modes[{k}]", mnode_k.line)
        eps_n = ctx.pop(md, "eps", mparent, required=True)
        coup_n = ctx.pop(md, "coupling", mparent, required=True)
        ctx.reject_leftover(md, f"{what}.modes[{k}]")
        if None in (eps_n, coup_n):
            continue
        eps_s = _parse_schedule(ctx, eps_n, "real", n_levels, f"{what}.modes[{k}].eps")
        coup_s = _parse_schedule(ctx, coup_n, "vector", n_levels,
                                 f"{what}.modes[{k}].coupling")
        if eps_s is not None and coup_s is not None:
            modes.append(Mode(eps=eps_s, coupling=coup_s))
    return Reservoir(modes=tuple(modes))


def _parse_grid(ctx, mnode):
    d = ctx.as_map(mnode, "grid")
    if d is None:
        return None
    parent = ("grid", mnode.line)
    t0 = ctx.pop(d, "t0", parent, default=0.0)
    t1 = ctx.pop(d, "t_final", parent, required=True)
    steps = ctx.pop(d, "steps", parent, required=True)
    ctx.reject_leftover(d, "grid")
    if None in (t1, steps):
        return None
    vals = [ctx.scalar(t0, "grid.t0"), ctx.scalar(t1, "grid.t_final"),
            ctx.scalar(steps, "grid.steps", int)]
    if any(v is None for v in vals):
        return None
    try:
        return TimeGrid(vals[0], vals[1], vals[2])
    except ValueError as exc:
        return ctx.fail(mnode.line, str(exc))


def _parse_initial_state(ctx, mnode, spec):
    d = ctx.as_map(mnode, "initial_state")
    if d is None:
        return None
    parent = ("initial_state", mnode.line)
    kind_node = ctx.pop(d, "kind", parent, required=True)
    if kind_node is None:
        return None
    kind = str(kind_node.value)
    if kind == "partition_free_thermal":
        beta = ctx.pop(d, "beta", parent, required=True)
        mu = ctx.pop(d, "mu", parent, default=0.0)
        ctx.reject_leftover(d, "initial_state")
        if beta is None:
            return None
        vals = [ctx.scalar(beta, "initial_state.beta"), ctx.scalar(mu, "initial_state.mu")]
        if any(v is None for v in vals):
            return None
        return PartitionFreeThermal(beta=vals[0], mu=vals[1])
    if kind == "decoupled_thermal":
        beta = ctx.pop(d, "beta", parent)
        mu = ctx.pop(d, "mu", parent, default=0.0)
        res_node = ctx.pop(d, "reservoirs", parent)
        sys_node = ctx.pop(d, "system", parent, required=True)
        ctx.reject_leftover(d, "initial_state")
        temps = []
        if res_node is not None:
            for k, tn in enumerate(ctx.as_list(res_node, "initial_state.reservoirs") or []):
                td = ctx.as_map(tn, f"initial_state.reservoirs[{k}]")
                if td is None:
                    continue
                tparent = (f"initial_state.reservoirs[{k}]", tn.line)
                b = ctx.pop(td, "beta", tparent, required=True)
                m = ctx.pop(td, "mu", tparent, default=0.0)
                ctx.reject_leftover(td, f"initial_state.reservoirs[{k}]")
                if b is not None:
                    temps.append((ctx.scalar(b, "beta"), ctx.scalar(m, "mu")))
        elif beta is not None:
            temps.append((ctx.scalar(beta, "initial_state.beta"),
                          ctx.scalar(mu, "initial_state.mu")))
        else:
            ctx.fail(mnode.line, "decoupled_thermal needs 'beta' or 'reservoirs'")
        if sys_node is None:
            return None
        sd = ctx.as_map(sys_node, "initial_state.system")
        if sd is None:
            return None
        sparent = ("initial_state.system", sys_node.line)
        occ_node = sd.pop("occupations", None)
        c_node = sd.pop("c", None)
        p_node = sd.pop("p", None)
        ctx.reject_leftover(sd, "initial_state.system")
        n = spec.n_levels
        if (occ_node is None) == (c_node is None):
            return ctx.fail(sys_node.line,
                            "initial_state.system needs exactly one of 'occupations' or 'c'")
        if occ_node is not None:
            occ = _plain(occ_node)
            if isinstance(occ, (int, float)):
                occ = [occ]
            if (not isinstance(occ, list) or len(occ) != n
                    or not all(isinstance(v, (int, float)) for v in occ)):
                return ctx.fail(occ_node.line, f"occupations must list {n} numbers")
            c_sys = np.diag([float(v) for v in occ]).astype(complex)
        else:
            c_sys = _parse_value(ctx, c_node, "matrix", n, "initial_state.system.c")
        p_sys = None
        if p_node is not None:
            p_sys = _parse_value(ctx, p_node, "matrix", n, "initial_state.system.p")
        if c_sys is None or any(t is None or t[0] is None for t in temps):
            return None
        return DecoupledThermal(reservoir_temps=tuple(temps), system_c=c_sys,
                                system_p=p_sys)
    if kind == "custom_gaussian":
        path_node = ctx.pop(d, "path", parent, required=True)
        ctx.reject_leftover(d, "initial_state")
        if path_node is None:
            return None
        path = str(path_node.value)
        if not os.path.exists(path):
            return ctx.fail(path_node.line, f"custom Gaussian file not found: {path}")
        data = np.load(path)
        if "C0" not in data or "P0" not in data:
            return ctx.fail(path_node.line, "npz file must hold arrays C0 and P0")
        return CustomGaussian(c0=data["C0"], p0=data["P0"])
    return ctx.fail(kind_node.line, f"unknown initial_state kind '{kind}'")


def _parse_fock(ctx, mnode, spec):
    if mnode is None:
        if spec is not None and spec.statistics is Statistics.BOSON:
            ctx.errors.append("boson config must set fock.n_max explicitly "
                              "(truncation is a physics decision)")
        return 1
    d = ctx.as_map(mnode, "fock")
    if d is None:
        return 1
    parent = ("fock", mnode.line)
    nm = ctx.pop(d, "n_max", parent, required=True)
    ctx.reject_leftover(d, "fock")
    if nm is None:
        return 1
    val = ctx.scalar(nm, "fock.n_max", int)
    if val is None or val < 1:
        ctx.fail(nm.line, "fock.n_max must be a positive integer")
        return 1
    return val


def _parse_outputs(ctx, mnode):
    if mnode is None:
        return []
    lst = ctx.as_list(mnode, "outputs")
    out = []
    for k, onode in enumerate(lst or []):
        d = ctx.as_map(onode, f"outputs[{k}]")
        if d is None:
            continue
        parent = (f"outputs[{k}]", onode.line)
        q = ctx.pop(d, "quantity", parent, required=True)
        p = ctx.pop(d, "path", parent, required=True)
        ctx.reject_leftover(d, f"outputs[{k}]")
        if None in (q, p):
            continue
        qname = str(q.value)
        if qname not in QUANTITIES:
            ctx.fail(q.line, f"unknown quantity '{qname}' (choose from "
                             f"{', '.join(QUANTITIES)})")
            continue
        out.append((qname, str(p.value)))
    return out


def _parse_tolerances(ctx, mnode):
    if mnode is None:
        return {}
    d = ctx.as_map(mnode, "tolerances")
    if d is None:
        return {}
    out = {}
    for key in list(d.keys()):
        node = d.pop(key)
        if key not in TOLERANCE_KEYS:
            ctx.fail(node.line, f"unknown tolerance '{key}' (choose from "
                                f"{', '.join(TOLERANCE_KEYS)})")
            continue
        val = ctx.scalar(node, f"tolerances.{key}")
        if val is not None:
            out[key] = val
    return out


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12e")


def _write_csv(path, columns, rows, cfg: RunConfig, extra_comment=""):
    grid = cfg.grid
    comment = (f"# fanodyn {__version__} config={cfg.config_hash} "
               f"t0={grid.t0:g} t_final={grid.t_final:g} steps={grid.steps} "
               f"h={grid.h:.12g}")
    if extra_comment:
        comment += " " + extra_comment
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(comment + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _complex_columns(base_names):
    cols = []
    for name in base_names:
        cols += [f"{name}_re", f"{name}_im"]
    return cols


def _coefficient_table(stack):
    n = stack.spec.n_levels
    names = []
    for coeff in ("eps_prime", "gamma", "gamma_tilde", "gamma_bar"):
        for i in range(n):
            for j in range(n):
                names.append(f"{coeff}_{i}{j}")
    cols = ["t"] + _complex_columns(names)
    arrays = [stack.coeffs.eps_prime, stack.coeffs.gamma,
              stack.coeffs.gamma_tilde, stack.coeffs.gamma_bar]
    rows = []
    for k, t in enumerate(stack.grid.nodes):
        row = [t]
        for arr in arrays:
            for i in range(n):
                for j in range(n):
                    row += [arr[k, i, j].real, arr[k, i, j].imag]
        rows.append(row)
    return cols, rows


def _quantity_rows(qname, stack, master_run):
    grid = stack.grid
    ts = grid.nodes
    if qname == "coefficients":
        return _coefficient_table(stack)
    if qname == "occupations":
        occ = master_run.occupations()
        cols = ["t"] + [f"n_{i}" for i in range(occ.shape[1])]
        return cols, [[t] + list(occ[k]) for k, t in enumerate(ts)]
    if qname == "trace":
        tr = np.einsum("tii->t", master_run.result.rhos)
        return ["t", "trace_re", "trace_im"], [[t, tr[k].real, tr[k].imag]
                                               for k, t in enumerate(ts)]
    if qname == "purity":
        pur = master_run.purity()
        return ["t", "purity"], [[t, pur[k]] for k, t in enumerate(ts)]
    if qname == "positivity_min_eig":
        return ["t", "min_eig"], [[t, master_run.result.min_eig[k]]
                                  for k, t in enumerate(ts)]
    if qname == "lesser_green_diag":
        gless = stack.equal_time_gless()
        n = stack.spec.n_levels
        cols = ["t"] + _complex_columns([f"gless_{i}{i}" for i in range(n)])
        rows = []
        for k, t in enumerate(ts):
            row = [t]
            for i in range(n):
                row += [gless[k, i, i].real, gless[k, i, i].imag]
            rows.append(row)
        return cols, rows
    if qname == "u_norm":
        norms = stack.u_spectral_norms()
        return ["t", "u_norm"], [[t, norms[k]] for k, t in enumerate(ts)]
    raise ValueError(f"unknown quantity {qname}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _build_stack(cfg: RunConfig):
    return build_greens_stack(cfg.model, cfg.initial_state, cfg.grid)


def _needs_master(outputs):
    master_q = {"occupations", "trace", "purity", "positivity_min_eig"}
    return any(q in master_q for q, _ in outputs)


def _master_for(cfg, stack):
    stats = cfg.model.statistics
    n_max = cfg.n_max if stats is Statistics.BOSON else 1
    fock = FockSpace(stats, cfg.model.n_levels, n_max)
    return run_master(stack, fock)


def _check_run_tolerances(cfg, master_run):
    failures = list(master_run.result.failures)
    tol = cfg.tolerances
    res = master_run.result
    if "trace_drift" in tol and res.trace_drift.max() > tol["trace_drift"]:
        failures.append(f"trace drift {res.trace_drift.max():.3e} exceeds "
                        f"{tol['trace_drift']:.1e}")
    if "herm_defect" in tol and res.herm_defect.max() > tol["herm_defect"]:
        failures.append(f"hermiticity defect {res.herm_defect.max():.3e} exceeds "
                        f"{tol['herm_defect']:.1e}")
    if "positivity_min" in tol and res.min_eig.min() < tol["positivity_min"]:
        failures.append(f"min eigenvalue {res.min_eig.min():.3e} below "
                        f"{tol['positivity_min']:.1e}")
    return failures


def run_simulation(cfg: RunConfig, out_dir=".", halve_step=False) -> int:
    """model -> kernels -> greens -> master; one CSV per requested quantity."""
    try:
        stack = _build_stack(cfg)
        master_run = _master_for(cfg, stack) if _needs_master(cfg.outputs) else None
    except SingularPropagatorError as exc:
        print(f"fanodyn: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ConfigurationError, DomainError, ValidationError,
            UnsupportedScopeError) as exc:
        print(f"fanodyn: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    for qname, rel in cfg.outputs:
        cols, rows = _quantity_rows(qname, stack, master_run)
        _write_csv(os.path.join(out_dir, rel), cols, rows, cfg)

    if halve_step:
        fine = cfg.with_steps(2 * cfg.grid.steps)
        try:
            stack2 = _build_stack(fine)
            master2 = _master_for(fine, stack2) if _needs_master(cfg.outputs) else None
        except SingularPropagatorError as exc:
            print(f"fanodyn: {exc}", file=sys.stderr)
            return EXIT_SINGULAR
        rows = []
        for qname, _ in cfg.outputs:
            _, rows_a = _quantity_rows(qname, stack, master_run)
            _, rows_b = _quantity_rows(qname, stack2, master2)
            a = np.array([r[1:] for r in rows_a])
            b = np.array([r[1:] for r in rows_b])[::2]
            rows.append([qname, float(np.abs(a - b).max())])
        _write_csv(os.path.join(out_dir, "convergence.csv"),
                   ["quantity", "max_diff_h_vs_h2"], rows, cfg)

    if master_run is not None:
        failures = _check_run_tolerances(cfg, master_run)
        if failures:
            for msg in failures:
                print(f"fanodyn: {msg}", file=sys.stderr)
            return EXIT_TOLERANCE
    return EXIT_OK


def _comparison_report(cfg: RunConfig):
    stack = _build_stack(cfg)
    master_run = _master_for(cfg, stack)
    run_out = oracle_mod.RunOutputs(
        grid=cfg.grid,
        u_col=stack.field.col0,
        gless_diag=stack.equal_time_gless(),
        moments=master_run.moment_trajectory(),
        rho_traj=master_run.result.rhos,
    )
    try:
        orc = oracle_outputs_for(stack, fock=master_run.fock, want_rho=True)
    except UnsupportedScopeError as exc:
        print(f"fanodyn: warning: {exc}; trace-distance column downgraded to "
              f"moment comparison", file=sys.stderr)
        orc = oracle_outputs_for(stack, want_rho=False)
        run_out.rho_traj = None
    tol = dict(DEFAULT_COMPARE_TOL)
    tol.update({k: v for k, v in cfg.tolerances.items() if k in DEFAULT_COMPARE_TOL})
    report = oracle_mod.compare(run_out, orc, tolerances=tol)
    return stack, master_run, report


def run_comparison(cfg: RunConfig, out_dir=".", halve_step=False) -> int:
    """Pipeline and oracle side by side; report.csv has the error columns,
    requested quantities are written as in simulate."""
    try:
        stack, master_run, report = _comparison_report(cfg)
    except SingularPropagatorError as exc:
        print(f"fanodyn: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ConfigurationError, DomainError, ValidationError) as exc:
        print(f"fanodyn: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    cols = ["t", "u_err", "Gless_err", "moment_err", "trace_dist"]
    rows = [[t, report.u_err[k], report.gless_err[k], report.moment_err[k],
             report.trace_dist[k]] for k, t in enumerate(report.t)]
    extra = ""
    if halve_step:
        fine_cfg = cfg.with_steps(2 * cfg.grid.steps)
        try:
            _, _, fine = _comparison_report(fine_cfg)
        except SingularPropagatorError as exc:
            print(f"fanodyn: {exc}", file=sys.stderr)
            return EXIT_SINGULAR
        ratios = oracle_mod.convergence_ratios(report, fine)
        rows.append([-1.0, ratios.get("u_err", float("nan")),
                     ratios.get("gless_err", float("nan")),
                     ratios.get("moment_err", float("nan")),
                     ratios.get("trace_dist", float("nan"))])
        extra = "last_row_t=-1_holds_h_over_h2_error_ratios"
    _write_csv(os.path.join(out_dir, "report.csv"), cols, rows, cfg, extra)

    for qname, rel in cfg.outputs:
        qcols, qrows = _quantity_rows(qname, stack, master_run)
        _write_csv(os.path.join(out_dir, rel), qcols, qrows, cfg)

    if not report.passed:
        for msg in report.failures:
            print(f"fanodyn: {msg}", file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def _set_path(plain, axis, value):
    parts = axis.split(".")
    target = plain
    for p in parts[:-1]:
        if isinstance(target, list):
            target = target[int(p)]
        elif isinstance(target, dict) and p in target:
            target = target[p]
        else:
            raise KeyError(axis)
    last = parts[-1]
    if isinstance(target, list):
        idx = int(last)
        if not isinstance(target[idx], (int, float)):
            raise KeyError(axis)
        target[idx] = value
    elif isinstance(target, dict) and last in target:
        if not isinstance(target[last], (int, float)):
            raise KeyError(axis)
        target[last] = value
    else:
        raise KeyError(axis)


def _sweep_target(cfg: RunConfig):
    """(beta, mu) used for the Fermi/Bose reference value of a sweep row."""
    init = cfg.initial_state
    if isinstance(init, PartitionFreeThermal):
        return init.beta, init.mu
    if isinstance(init, DecoupledThermal):
        return init.reservoir_temps[0]
    raise ConfigurationError("sweep target needs a thermal initial state")


def run_sweep(cfg: RunConfig, axis: str, values, out_dir=".") -> int:
    """One pipeline run per axis value; the summary row holds the late-time
    occupation against the matching Fermi/Bose value (N=1 models)."""
    if cfg.model.n_levels != 1:
        print("fanodyn: sweep summaries are defined for single-level models",
              file=sys.stderr)
        return EXIT_CONFIG
    rows = []
    for val in values:
        plain = yaml.safe_load(cfg.text)
        try:
            _set_path(plain, axis, float(val))
        except (KeyError, IndexError, TypeError, ValueError):
            print(f"fanodyn: axis path '{axis}' does not name an existing scalar",
                  file=sys.stderr)
            return EXIT_CONFIG
        try:
            cfg_v = parse_config(yaml.safe_dump(plain))
        except ConfigParseError as exc:
            for msg in exc.errors:
                print(f"fanodyn: {msg}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            stack = _build_stack(cfg_v)
        except SingularPropagatorError as exc:
            print(f"fanodyn: {exc}", file=sys.stderr)
            return EXIT_SINGULAR
        occ = stack.occupations()[:, 0]
        tail = max(1, cfg_v.grid.steps // 10)
        late = float(occ[-tail:].mean())
        beta, mu = _sweep_target(cfg_v)
        eps = float(np.real(cfg_v.model.eps_sys_at(cfg_v.grid.t_final)[0, 0]))
        target = float(thermal_occupation([eps], beta, mu,
                                          cfg_v.model.statistics)[0])
        rel = abs(late - target) / max(abs(target), 1e-12)
        rows.append([float(val), late, target, rel])
    _write_csv(os.path.join(out_dir, "sweep.csv"),
               ["value", "late_occupation", "thermal_target", "rel_deviation"],
               rows, cfg, extra_comment=f"axis={axis}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _honor_thread_env():
    limit = os.environ.get("FANODYN_THREADS")
    if not limit:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=int(limit))
    except (ImportError, ValueError):
        pass


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fanodyn",
        description="Exact non-Markovian master-equation runs for "
                    "Fano-Anderson models with initial correlations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--out-dir", default=".", help="directory for CSV outputs")
        p.add_argument("--grid-steps", type=int, default=None,
                       help="override grid.steps from the config")

    p_sim = sub.add_parser("simulate", help="run the pipeline, write CSVs")
    add_common(p_sim)
    p_sim.add_argument("--halve-step", action="store_true",
                       help="also run at half step; write convergence.csv")

    p_cmp = sub.add_parser("compare", help="pipeline vs exact oracle report")
    add_common(p_cmp)
    p_cmp.add_argument("--halve-step", action="store_true",
                       help="append h/(h/2) error-ratio row to report.csv")

    p_swp = sub.add_parser("sweep", help="sweep one scalar config entry")
    add_common(p_swp)
    p_swp.add_argument("--axis", required=True,
                       help="dotted path of the scalar to sweep, e.g. "
                            "model.reservoirs.0.band.rate")
    p_swp.add_argument("--values", required=True,
                       help="comma-separated list of values (may be empty)")

    args = parser.parse_args(argv)
    _honor_thread_env()

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"fanodyn: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigParseError as exc:
        for msg in exc.errors:
            print(f"fanodyn: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    if args.grid_steps is not None:
        cfg = cfg.with_steps(args.grid_steps)

    os.makedirs(args.out_dir, exist_ok=True)
    if args.command == "simulate":
        return run_simulation(cfg, out_dir=args.out_dir, halve_step=args.halve_step)
    if args.command == "compare":
        return run_comparison(cfg, out_dir=args.out_dir, halve_step=args.halve_step)
    values = [v for v in args.values.split(",") if v.strip() != ""]
    return run_sweep(cfg, axis=args.axis, values=values, out_dir=args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
