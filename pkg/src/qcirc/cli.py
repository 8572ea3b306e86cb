"""Batch command-line front end.

Commands read a JSON netlist, run part of the pipeline and write JSON
(structured reports) or CSV (numeric series). Exit codes: 0 success,
1 numerical failure or non-converged sweep points, 2 input error.

Energies are in GHz (E/h). ``simulate`` converts them to angular
frequencies, so times are in ns and rates in 1/ns.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import io
import json
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from . import __version__, builder, dynamics, fockspace, goldens, graphkit, netlist, truncate
from .errors import InputError, NetlistSyntaxError, NonConvergedPoint, QcircError, ShapeMismatch, SingularCapacitanceMatrix

TWO_PI = 2 * math.pi


# ----------------------------------------------------------------------------
# formatting and manifests


def _num(x) -> str:
    """Deterministic text for one number."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".15g")


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings, complex to [re, im]."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else _num(x)
    return obj


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(v if isinstance(v, str) else _num(v) for v in r) + "\n")
    return buf.getvalue()


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(ctx: click.Context, inputs: Sequence[str], extra: Optional[dict] = None) -> dict:
    params = {}
    c = ctx
    while c is not None:
        params.update({k: v for k, v in c.params.items() if k not in params})
        c = c.parent
    return _clean(
        {
            "command": ctx.info_name,
            "argv": sys.argv[1:],
            "inputs": {str(p): _sha256(p) for p in inputs},
            "version": __version__,
            "params": params,
            "seed": ctx.obj.get("seed"),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            **(extra or {}),
        }
    )


def _write(ctx: click.Context, text: str, out: Optional[str], inputs: Sequence[str], extra: Optional[dict] = None):
    """Send output to stdout or to ``out`` with a ``<out>.manifest.json`` sidecar."""
    if out is None:
        click.echo(text, nl=False)
        return
    Path(out).write_text(text, encoding="utf-8")
    man = _manifest(ctx, inputs, extra)
    Path(f"{out}.manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------------
# input


def _read_json(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetlistSyntaxError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise NetlistSyntaxError(f"{path}: top level must be an object", 1, 1)
    return doc


def _parse_tree(text: Optional[str]) -> Optional[List[int]]:
    if not text:
        return None
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"--tree must be comma-separated branch ids, got {text!r}") from None


class Circuit:
    """A loaded netlist with its graph, tree choice and parameter overrides."""

    def __init__(self, path: str, floating: bool = False, auto_ground: bool = False, tree: Optional[str] = None):
        self.path = path
        text = Path(path).read_text(encoding="utf-8")
        self.spec = netlist.parse_netlist(text)
        self.doc = json.loads(text)
        meta = self.doc.get("meta", {}) if isinstance(self.doc.get("meta"), dict) else {}
        self.floating = bool(floating or meta.get("floating", False))
        self.auto_ground = auto_ground
        self.tree_ids = _parse_tree(tree) or self.doc.get("tree")
        self.graph = self.graph_with()

    def graph_with(self, **overrides) -> netlist.CircuitGraph:
        spec = netlist.with_values(self.spec, **overrides) if overrides else self.spec
        return netlist.validate(spec, auto_ground=self.auto_ground, floating=self.floating)

    def tree(self, graph: Optional[netlist.CircuitGraph] = None) -> graphkit.SpanningTree:
        g = graph or self.graph
        return graphkit.select_spanning_tree(g, self.tree_ids or "PreferInductiveTwigs")

    def hamiltonian(self, graph: Optional[netlist.CircuitGraph] = None) -> builder.ClassicalHamiltonian:
        """Hamiltonian of the undriven circuit (voltage sources grounded)."""
        g = graph or self.graph
        g0 = builder.ground_sources(g)
        tree = self.tree(g0) if (g0 is g and self.tree_ids) else None
        return builder.build_hamiltonian(g0, tree)


_VALUE = re.compile(
    r"^\s*([+-])?\s*((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*(pi|π)?\s*(?:/\s*(\d+\.?\d*))?\s*$"
)


def parse_value(text: str) -> float:
    """Number with an optional ``pi`` factor: ``0.5``, ``2pi``, ``-pi/2``, ``1.5*pi``."""
    m = _VALUE.match(str(text))
    if not m or (m.group(2) is None and m.group(3) is None):
        raise InputError(f"cannot parse number {text!r}")
    x = float(m.group(2)) if m.group(2) else 1.0
    if m.group(3):
        x *= math.pi
    if m.group(4):
        x /= float(m.group(4))
    return -x if m.group(1) == "-" else x


def parse_sweep(text: str) -> Tuple[str, np.ndarray]:
    """``name=start:stop:n`` (inclusive grid) or ``name=value``."""
    if "=" not in text:
        raise InputError(f"sweep must look like name=start:stop:n, got {text!r}")
    name, rng = text.split("=", 1)
    parts = rng.split(":")
    if len(parts) == 1:
        return name.strip(), np.array([parse_value(parts[0])])
    if len(parts) not in (2, 3):
        raise InputError(f"sweep range must be start:stop[:n], got {rng!r}")
    a, b = parse_value(parts[0]), parse_value(parts[1])
    n = 51 if len(parts) == 2 else int(parts[2])
    if n < 1:
        raise InputError("sweep needs at least one point")
    return name.strip(), np.linspace(a, b, n)


def resolve_parameter(spec: netlist.CircuitSpec, name: str) -> str:
    """Map a sweep name to a ``with_values`` key.

    ``flux`` and ``ng`` without an index refer to the only declared external
    flux or offset charge; ``flux<k>``, ``ng<node>`` and ``b<id>`` are explicit.
    """
    if name == "flux":
        loops = [k for k, _ in spec.external_fluxes]
        if len(loops) != 1:
            raise InputError(f"'flux' is ambiguous with {len(loops)} declared loops; use flux<k>")
        return f"flux{loops[0]}"
    if name == "ng":
        nodes = [n for n, _ in spec.offset_charges]
        if len(nodes) != 1:
            raise InputError(f"'ng' is ambiguous with {len(nodes)} declared offset charges; use ng<node>")
        return f"ng{nodes[0]}"
    if re.fullmatch(r"(flux|ng|b)\d+", name):
        return name
    raise InputError(f"unknown sweep parameter {name!r} (use flux, ng, flux<k>, ng<node> or b<id>)")


# ----------------------------------------------------------------------------
# command group


class _Group(click.Group):
    """Maps package errors to exit codes with a one-line message."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except QcircError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            ctx.exit(exc.exit_code)
        except (ValueError, FileNotFoundError) as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            ctx.exit(InputError.exit_code)


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="qcirc")
@click.option("--cutoff", default=10, show_default=True, help="Starting basis dimension per coordinate.")
@click.option(
    "--expansion",
    type=click.Choice(["taylor4", "taylor6", "exact"]),
    default="exact",
    show_default=True,
    help="Treatment of the cosine potentials.",
)
@click.option(
    "--basis",
    type=click.Choice(["auto", "fock", "charge"]),
    default="auto",
    show_default=True,
    help="auto puts compact coordinates in the charge basis.",
)
@click.option("--jobs", default=1, show_default=True, help="Worker processes for sweeps.")
@click.option("--seed", default=None, type=int, help="Recorded in manifests; no command draws random numbers.")
@click.option(
    "--format", "fmt", type=click.Choice(["auto", "json", "csv"]), default="auto", help="Override the output format."
)
@click.option("--floating", is_flag=True, help="Allow a circuit without ground.")
@click.option("--auto-ground", is_flag=True, help="Ground the lowest node when none is declared.")
@click.option("--tree", default=None, help="User spanning tree as comma-separated branch ids.")
@click.pass_context
def cli(ctx, cutoff, expansion, basis, jobs, seed, fmt, floating, auto_ground, tree):
    """Quantize superconducting circuits from JSON netlists."""
    if cutoff < 2:
        raise click.BadParameter("cutoff must be at least 2", param_hint="--cutoff")
    ctx.ensure_object(dict)
    ctx.obj.update(
        cutoff=cutoff,
        expansion=expansion,
        basis=basis,
        jobs=max(1, jobs),
        seed=seed,
        fmt=fmt,
        floating=floating,
        auto_ground=auto_ground,
        tree=tree,
    )


def _circuit(ctx, path: str) -> Circuit:
    o = ctx.obj
    return Circuit(path, o["floating"], o["auto_ground"], o["tree"])


def _fmt(ctx, default: str) -> str:
    f = ctx.obj["fmt"]
    return default if f == "auto" else f


# ----------------------------------------------------------------------------
# analyze


def analysis_bundle(c: Circuit, cutoff: int = 10) -> dict:
    """Matrices, tree, F-matrices, mode report and couplings of a circuit."""
    g = c.graph
    tree = c.tree()
    out = {"circuit": c.path, "tree": graphkit.matrices_to_dict(g, tree)}
    out["tree"]["policy"] = tree.policy_tag
    H = c.hamiltonian()
    out["hamiltonian"] = H.to_dict()
    Hq = builder.prepare_quantum(H)
    out["quantum"] = {"coordinates": list(Hq.labels), "Cinv": Hq.Cinv, "Linv": Hq.Linv, "Q0": Hq.Q0}
    out["effective_energies"] = builder.effective_energies(Hq)
    compact = fockspace.compact_coordinates(Hq)
    modes = []
    quant = []
    for i in range(Hq.n):
        try:
            m = fockspace.quantize_coordinate(Hq, i, cutoff)
            d = m.to_dict()
        except SingularCapacitanceMatrix:
            m = None
            d = {"label": Hq.labels[i], "zeta": None, "omega": None, "alpha": None}
        d["compact"] = bool(compact[i])
        modes.append(d)
        quant.append(m)
    out["modes"] = modes
    if all(m is not None for m in quant):
        poly, ms = truncate.hamiltonian_to_ladder(Hq, modes=quant)
        out["couplings"] = truncate.coupling_report(poly, ms)["couplings"]
    else:
        out["couplings"] = None
    if any(b.kind == "V" for b in g.branches):
        sc = builder.source_couplings(g)
        out["sources"] = {
            "coordinates": sc["coordinates"],
            "C_qq": sc["C_qq"],
            "beta": {str(k): v for k, v in sc["beta"].items()},
            "source_nodes": {str(k): v for k, v in sc["source_nodes"].items()},
        }
    if H.notes:
        out["notes"] = list(H.notes)
    return out


@cli.command()
@click.argument("circuit", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Write here (plus a manifest sidecar).")
@click.pass_context
def analyze(ctx, circuit, out):
    """Capacitance and inductance matrices, tree, F-matrices and per-mode report."""
    c = _circuit(ctx, circuit)
    bundle = analysis_bundle(c, ctx.obj["cutoff"])
    _write(ctx, _json_text(bundle), out, [circuit])


# ----------------------------------------------------------------------------
# graph


def _matrix_csv(name: str, cols: Sequence[int], M: np.ndarray) -> str:
    rows = [[str(int(v)) for v in r] for r in np.asarray(M)]
    return f"# {name}\n" + _csv_text([f"b{c}" for c in cols], rows)


@cli.command()
@click.argument("circuit", type=click.Path(exists=True, dir_okay=False))
@click.option("--emit", default="fcut,floop", show_default=True, help="Comma list of fcut, floop.")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.pass_context
def graph(ctx, circuit, emit, out):
    """Spanning tree and fundamental cut/loop matrices."""
    c = _circuit(ctx, circuit)
    tree = c.tree()
    d = graphkit.matrices_to_dict(c.graph, tree)
    wanted = [w.strip() for w in emit.split(",") if w.strip()]
    for w in wanted:
        if w not in ("fcut", "floop"):
            raise InputError(f"--emit takes fcut and/or floop, got {w!r}")
    if _fmt(ctx, "json") == "csv":
        text = "".join(_matrix_csv(w, d["columns"], d[w]) for w in wanted)
    else:
        keep = {"twigs", "links", "columns", "orthogonal"} | set(wanted)
        text = _json_text({k: v for k, v in d.items() if k in keep})
    _write(ctx, text, out, [circuit])


# ----------------------------------------------------------------------------
# spectrum


def _spectrum_point(job: dict) -> dict:
    """One sweep point; module level so worker processes can run it."""
    c = Circuit(job["path"], job["floating"], job["auto_ground"], job["tree"])
    g = c.graph_with(**job["overrides"])
    H = c.hamiltonian(g)
    r = fockspace.converged_spectrum(
        H,
        levels=job["levels"],
        expansion=job["expansion"],
        start=job["cutoff"],
        max_dim=job["max_dim"],
        rtol=job["rtol"],
        bases=job["basis"],
    )
    return {"energies": [float(e) for e in r.energies], "converged": bool(r.converged), "drift": float(r.drift), "dims": r.dims}


def run_sweep(jobs: List[dict], workers: int = 1) -> List[dict]:
    """Evaluate sweep points; results come back in input order."""
    if workers <= 1 or len(jobs) <= 1:
        return [_spectrum_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_spectrum_point, jobs))


@cli.command()
@click.argument("circuit", type=click.Path(exists=True, dir_okay=False))
@click.option("--sweep", default=None, help="name=start:stop:n with name flux, ng, flux<k>, ng<node> or b<id>.")
@click.option("--levels", default=4, show_default=True, help="Eigenvalues per point.")
@click.option("--max-dim", default=160, show_default=True, help="Largest dimension per coordinate.")
@click.option("--rtol", default=1e-8, show_default=True, help="Cutoff convergence tolerance.")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.pass_context
def spectrum(ctx, circuit, sweep, levels, max_dim, rtol, out):
    """Cutoff-converged spectrum, optionally over a parameter sweep (CSV)."""
    o = ctx.obj
    c = _circuit(ctx, circuit)
    if sweep:
        name, grid = parse_sweep(sweep)
        key = resolve_parameter(c.spec, name)
    else:
        name, grid, key = None, np.array([np.nan]), None
    base = dict(
        path=circuit,
        floating=c.floating,
        auto_ground=o["auto_ground"],
        tree=o["tree"],
        levels=levels,
        expansion=o["expansion"],
        cutoff=o["cutoff"],
        max_dim=max_dim,
        rtol=rtol,
        basis=o["basis"],
    )
    jobs = [dict(base, overrides={key: float(v)} if key else {}) for v in grid]
    # validate the overrides before starting workers
    c.graph_with(**jobs[0]["overrides"])
    res = run_sweep(jobs, o["jobs"])
    header = ([name] if name else []) + [f"E{i}" for i in range(levels)] + ["converged", "drift", "dims"]
    rows, bad = [], []
    for v, r in zip(grid, res):
        e = list(r["energies"]) + [float("nan")] * (levels - len(r["energies"]))
        row = ([float(v)] if name else []) + e + [str(r["converged"]).lower(), r["drift"], "x".join(map(str, r["dims"]))]
        rows.append(row)
        if not r["converged"]:
            bad.append((v, r))
    if _fmt(ctx, "csv") == "json":
        text = _json_text({"parameter": name, "key": key, "points": [dict(r, value=float(v)) for v, r in zip(grid, res)]})
    else:
        text = _csv_text(header, rows)
    _write(ctx, text, out, [circuit], {"nonconverged": len(bad)})
    for v, r in bad:
        at = f"{name}={_num(v)}" if name else "single point"
        click.echo(f"warning: {NonConvergedPoint.__name__}: {at} drift {_num(r['drift'])} at dims {r['dims']}", err=True)
    if bad:
        ctx.exit(NonConvergedPoint.exit_code)


# ----------------------------------------------------------------------------
# truncate


@cli.command(name="truncate")
@click.argument("circuit", type=click.Path(exists=True, dir_okay=False))
@click.option("--levels", type=click.IntRange(2, 4), default=2, show_default=True)
@click.option("--level-basis", "level_basis", type=click.Choice(["fock", "eigen"]), default="fock", show_default=True)
@click.option("--emit", type=click.Choice(["pauli", "matrix"]), default="pauli", show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.pass_context
def truncate_cmd(ctx, circuit, levels, level_basis, emit, out):
    """Hamiltonian restricted to the lowest levels, as a matrix or Pauli sum.

    Fock truncation keeps ``levels`` oscillator states per mode; eigen
    truncation keeps ``levels ** n_modes`` eigenstates in total.
    """
    o = ctx.obj
    c = _circuit(ctx, circuit)
    Hq = builder.prepare_quantum(c.hamiltonian())
    bases = o["basis"] if level_basis == "eigen" else "fock"
    op = fockspace.build_fock_hamiltonian(Hq, max(o["cutoff"], levels), o["expansion"], bases=bases)
    if level_basis == "fock":
        tr = truncate.truncate_levels(op, levels, "fock")
    else:
        n = levels ** len(op.dims)
        tr = truncate.truncate_levels(op, n, "eigen", H=op)
        # eigen levels are exact in any basis; shift so the ground energy is zero
        tr.data = tr.data - tr.data[0, 0] * np.eye(n)
        # off-diagonal elements vanish up to rounding
        tr.data[np.abs(tr.data) < 1e-12 * max(1.0, np.abs(tr.data).max())] = 0.0
        if levels == 2 and len(op.dims) > 1:
            tr.dims = [2] * len(op.dims)
    doc = {"coordinates": list(Hq.labels), "levels": levels, "basis": level_basis, "dims": tr.dims, "labels": tr.labels}
    if emit == "pauli":
        doc["pauli"] = truncate.pauli_decompose(tr).to_dict()
    else:
        doc["matrix"] = {"real": tr.data.real, "imag": tr.data.imag}
    _write(ctx, _json_text(doc), out, [circuit])


# ----------------------------------------------------------------------------
# simulate


def _phase_gauge(vecs: np.ndarray, A) -> np.ndarray:
    """Rephase eigenvectors so that ``<n+1|A|n>`` is positive imaginary."""
    V = np.array(vecs, dtype=complex)
    for n in range(V.shape[1] - 1):
        a = V[:, n + 1].conj() @ (A @ V[:, n])
        if abs(a) > 1e-14:
            V[:, n + 1] *= np.exp(1j * (np.angle(a) - math.pi / 2))
    return V


def driven_levels(c: Circuit, drive: dict, levels: int, cutoff: int, expansion: str, basis: str):
    """Lowest ``levels`` energies and the drive matrix between them.

    ``drive`` is ``{"source": branch_id}`` for an exact voltage-source
    coupling ``(beta . q) V`` or ``{"coupling": Omega}`` for a ladder drive
    ``Omega i(b^dag - b)`` between consecutive levels.
    """
    H = c.hamiltonian()
    Hq = builder.prepare_quantum(H)
    op = fockspace.build_fock_hamiltonian(Hq, cutoff, expansion, bases=basis)
    vals, vecs = fockspace.spectrum(op, levels)
    if "source" in drive:
        sc = builder.source_couplings(c.graph)
        bid = int(drive["source"])
        if bid not in sc["beta"]:
            raise InputError(f"branch {bid} is not a voltage source")
        if list(sc["coordinates"]) != list(Hq.labels):
            raise ShapeMismatch("source drive needs the circuit coordinates to be node fluxes")
        beta = sc["beta"][bid]
        A = sum(beta[i] * fockspace.charge_operator(op, i) for i in range(Hq.n) if beta[i])
        V = _phase_gauge(vecs, A)
        a = V.conj().T @ (A @ V)
    elif "coupling" in drive:
        b, bd = fockspace.ladder_ops(levels)
        a = float(drive["coupling"]) * 1j * (bd - b)
    else:
        raise InputError("pulses file needs a drive block with 'source' or 'coupling'")
    a = 0.5 * (a + a.conj().T)
    return np.asarray(vals), a


def _pulse_sequence(doc: dict, E01: float, rate: float) -> dynamics.PulseSequence:
    """Segments with ``omega`` defaulting to the 0-1 transition and ``theta``
    converted to an amplitude for the 0-1 Rabi rate ``rate``."""
    segs = []
    for s in doc.get("segments", []):
        s = dict(s)
        om = s.get("omega", "resonant")
        s["omega"] = E01 + float(s.get("detuning", 0.0)) if om == "resonant" else float(om)
        if "theta" in s:
            th = s.pop("theta")
            th = parse_value(th) if isinstance(th, str) else float(th)
            s["V0"] = dynamics.amplitude_for_angle(th, rate, s.get("shape", "square"), float(s["tau"]))
        segs.append(s)
    if not segs:
        raise InputError("pulses file has no segments")
    return dynamics.PulseSequence.from_dict({"segments": segs})


def _initial_state(doc: dict, d: int) -> np.ndarray:
    init = doc.get("initial", 0)
    if isinstance(init, int):
        if not 0 <= init < d:
            raise InputError(f"initial level {init} outside 0..{d - 1}")
        rho = np.zeros((d, d), dtype=complex)
        rho[init, init] = 1
        return rho
    psi = np.array([complex(*x) if isinstance(x, list) else complex(x) for x in init])
    if psi.size != d:
        raise InputError(f"initial state needs {d} amplitudes")
    return np.outer(psi, psi.conj())


def _trajectory_rows(tr: dynamics.Trajectory, observables: Sequence[str]) -> Tuple[List[str], List[list]]:
    d = tr.states.shape[1]
    header = ["t"]
    cols = [tr.times]
    if "populations" in observables:
        header += [f"p{i}" for i in range(d)]
        P = tr.populations()
        cols += [P[:, i] for i in range(d)]
    if "bloch" in observables:
        sub = tr.states[:, :2, :2]
        header += ["x", "y", "z"]
        cols += [
            np.real(np.einsum("tij,ji->t", sub, dynamics.SX)),
            np.real(np.einsum("tij,ji->t", sub, dynamics.SY)),
            np.real(np.einsum("tij,ji->t", sub, dynamics.SZ)),
        ]
    if "trace" in observables:
        header.append("trace")
        cols.append(np.real(np.einsum("tii->t", tr.states)))
    return header, [list(r) for r in zip(*cols)]


def _sample_every(T: float, dt: float, samples: int) -> int:
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return max(1, n // max(1, samples))


@cli.command()
@click.argument("circuit", type=click.Path(exists=True, dir_okay=False))
@click.argument("pulses", type=click.Path(exists=True, dir_okay=False), required=False)
@click.argument("noise", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option(
    "--experiment", type=click.Choice(["pulse", "t1", "ramsey", "swap"]), default="pulse", show_default=True
)
@click.option("--T", "T", default=None, type=float, help="Duration in ns (default: the pulse length).")
@click.option("--dt", default=None, type=float, help="Time step in ns.")
@click.option("--levels", default=2, show_default=True, help="Levels kept in the driven model.")
@click.option("--frame", type=click.Choice(["drive", "qubit"]), default="drive", show_default=True)
@click.option("--target-gate", type=click.Choice(sorted(dynamics.TARGET_GATES)), default=None)
@click.option("--observables", default="populations", show_default=True, help="Comma list of populations, bloch, trace.")
@click.option("--samples", default=200, show_default=True, help="Trajectory rows.")
@click.option("--detuning", default=0.0, show_default=True, help="Ramsey detuning in rad/ns.")
@click.option("--coupling", default=None, type=float, help="Swap coupling g in GHz (default: from the circuit).")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.pass_context
def simulate(ctx, circuit, pulses, noise, experiment, T, dt, levels, frame, target_gate, observables, samples, detuning, coupling, out):
    """Pulse-level and open-system simulation (trajectory CSV plus '# ' summary lines)."""
    o = ctx.obj
    obs = [x.strip() for x in observables.split(",") if x.strip()]
    for x in obs:
        if x not in ("populations", "bloch", "trace"):
            raise InputError(f"unknown observable {x!r}")
    pdoc = _read_json(pulses) if pulses else {}
    nm = dynamics.NoiseModel.from_dict(_read_json(noise)) if noise else dynamics.NoiseModel()
    inputs = [p for p in (circuit, pulses, noise) if p]
    c = _circuit(ctx, circuit)
    summary: Dict[str, object] = {"experiment": experiment}

    if experiment == "pulse":
        drive = pdoc.get("drive") or c.doc.get("meta", {}).get("drive") or {}
        vals, a = driven_levels(c, drive, levels, o["cutoff"], o["expansion"], o["basis"])
        E = TWO_PI * (vals - vals[0])
        A = TWO_PI * a
        rate = abs(A[1, 0])
        pulse = _pulse_sequence(pdoc, float(E[1]), rate)
        T = pulse.duration if T is None else T
        wf = pulse.segments[0].omega
        if frame == "drive":
            scale = np.abs(E - np.arange(levels) * wf).max()
        else:
            scale = E.max()
        vmax = max(abs(s.V0) for s in pulse.segments)
        omega_max = scale + vmax * np.abs(A).max() + max(abs(s.omega) for s in pulse.segments) * (frame == "qubit")
        dt = dt or dynamics.default_dt(omega_max, min(s.tau for s in pulse.segments))
        Hfn = dynamics.drive_hamiltonian(E, A, pulse, frame=frame)
        summary.update(levels=levels, E01_GHz=float(vals[1] - vals[0]), rabi_rate=float(rate), dt=dt, T=T)
        if levels > 2:
            summary["alpha_GHz"] = float((vals[2] - vals[1]) - (vals[1] - vals[0]))
        if target_gate:
            U = dynamics.evolve_unitary(Hfn, T, dt)
            target = dynamics.TARGET_GATES[target_gate]
            if target.shape[0] != 2:
                raise InputError(f"{target_gate} is a two-qubit gate; use --experiment swap")
            summary["gate"] = target_gate
            summary["fidelity"] = dynamics.gate_fidelity(U, target, subspace=2)
        rho0 = _initial_state(pdoc, levels)
        tr = dynamics.lindblad_evolve(Hfn, nm, rho0, T, dt, _sample_every(T, dt, samples))
        header, rows = _trajectory_rows(tr, obs)

    elif experiment == "swap":
        if noise:
            raise InputError("the swap experiment is closed-system; drop the noise file")
        if coupling is None:
            Hq = builder.prepare_quantum(c.hamiltonian())
            poly, ms = truncate.hamiltonian_to_ladder(Hq)
            cps = truncate.coupling_report(poly, ms)["couplings"]
            if len(cps) != 1:
                raise InputError(f"swap needs a two-mode circuit or --coupling (found {len(cps)} pairs)")
            coupling = cps[0]["g"]
        g = TWO_PI * float(coupling)
        seg = (pdoc.get("segments") or [{"shape": "square", "theta": "pi/2", "tau": 1.0}])[0]
        shape = seg.get("shape", "square")
        th = seg.get("theta", "pi/2")
        th = parse_value(th) if isinstance(th, str) else float(th)
        unit = dynamics.Segment(shape, 1.0, 0.0, 0.0, 1.0).area()
        tau = abs(th / g) / unit
        sgn = math.copysign(1.0, th / g)
        segment = dynamics.Segment(shape, sgn, 0.0, 0.0, tau)
        T = tau if T is None else T
        dt = dt or dynamics.default_dt(abs(g), tau)
        Hfn = dynamics.swap_hamiltonian(g, lambda t: segment.V0 * float(segment.envelope(t)))
        U = dynamics.evolve_unitary(Hfn, T, dt)
        summary.update(g_GHz=float(coupling), tau=tau, theta=th, dt=dt, T=T)
        gate = target_gate or "ISWAP"
        summary["gate"] = gate
        summary["fidelity"] = dynamics.gate_fidelity(U, dynamics.TARGET_GATES[gate])
        rho0 = _initial_state(dict(pdoc, initial=pdoc.get("initial", 2)), 4)
        tr = dynamics.lindblad_evolve(Hfn, nm, rho0, T, dt, _sample_every(T, dt, samples))
        header, rows = _trajectory_rows(tr, obs)

    elif experiment == "t1":
        if nm.Gamma1 <= 0:
            raise InputError("t1 needs a noise file with a positive relaxation rate")
        T = T or 5.0 / nm.Gamma1
        dt = dt or T / 2000
        r = dynamics.t1_experiment(nm, T, dt, samples)
        summary.update(Gamma1_fit=r["Gamma1"], Gamma1_input=nm.Gamma1, T=T, dt=dt)
        header, rows = ["t", "p1"], [list(x) for x in zip(r["times"], r["p1"])]

    else:  # ramsey
        G2 = nm.Gamma2
        T = T or (5.0 / G2 if G2 > 0 else 10.0 * TWO_PI / max(abs(detuning), 1e-3))
        dt = dt or min(T / 4000, 1.0 / (50 * max(abs(detuning), 1e-9)))
        t, p = dynamics.ramsey_signal(detuning, nm, T, dt, max(samples, 400))
        fit = dynamics.fit_ramsey(t, p)
        summary.update(delta_fit=fit["delta"], delta_input=abs(detuning), Gamma2_fit=fit["Gamma2"], Gamma2_input=G2, T=T, dt=dt)
        header, rows = ["t", "p1"], [list(x) for x in zip(t, p)]

    lines = [f"# {k} {_num(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v}" for k, v in summary.items()]
    text = _csv_text(header, rows)
    if out is None:
        click.echo(text + "\n".join(lines))
    else:
        _write(ctx, text, out, inputs, {"summary": summary})
        click.echo("\n".join(lines))


# ----------------------------------------------------------------------------
# fixtures


@cli.command()
@click.argument("names", nargs=-1)
@click.option("--list", "list_only", is_flag=True, help="List bundled fixtures and exit.")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.pass_context
def fixtures(ctx, names, list_only, out):
    """Run golden assertions on the bundled fixture netlists."""
    if list_only:
        for n in goldens.fixture_names():
            click.echo(f"{n}\t{goldens.fixture_path(n)}")
        return
    unknown = [n for n in names if n not in goldens.GOLDENS]
    if unknown:
        raise InputError(f"unknown fixtures {unknown}; try --list")
    checks = goldens.run_goldens(names or None)
    if _fmt(ctx, "text") == "json":
        text = _json_text([dict(ch.to_dict(), status=ch.status) for ch in checks])
    else:
        text = "".join(f"{ch.status:5s} {ch.fixture} | {ch.name} | {_num(ch.value)}\n" for ch in checks)
        counts = {s: sum(ch.status == s for ch in checks) for s in ("PASS", "XFAIL", "FAIL")}
        text += "# " + " ".join(f"{k} {v}" for k, v in counts.items()) + "\n"
    _write(ctx, text, out, [goldens.fixture_path(ch) for ch in sorted({c.fixture for c in checks})])
    if any(ch.status == "FAIL" for ch in checks):
        ctx.exit(1)


def main(argv: Optional[Sequence[str]] = None):
    cli.main(args=list(argv) if argv is not None else None, prog_name="qcirc")


if __name__ == "__main__":
    main()
