"""Command line front end.

``hyperlock COMMAND PROBLEM [options]`` runs one pipeline stage on a problem
file and writes CSV (and SVG) artifacts into ``--out``.  Exit status: 0 on
success, 1 for bad input, 2 when a mathematical assumption fails
(non-resonance, simple adjoint kernel, a nondegenerate root of the phase
equation, convergence of the locking solver).
"""
from __future__ import annotations

import csv
import io
import json
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import click
import jsonschema
import numpy as np

from .field import Numerics

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSUMPTION = 2

DEFAULT_NUMERICS = Numerics(modes=16, n_x=65)
COMMANDS = ("check-nonres", "adjoint", "phase-curve", "lock", "sweep", "diagnose")


class UsageFailure(Exception):
    """Bad input: unreadable or invalid problem file, inconsistent options."""


class AssumptionFailure(Exception):
    """A hypothesis of the locking theory fails for this problem."""


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------


def bundled_dir() -> Path:
    return Path(str(resources.files("hyperlock") / "problems"))


def bundled_names() -> list[str]:
    return sorted(p.stem for p in bundled_dir().glob("*.json") if p.stem != "schema")


def resolve_problem(path: str | Path) -> Path:
    """An existing path, or the bundled problem with the same file stem."""
    p = Path(path)
    if p.is_file():
        return p
    candidate = bundled_dir() / (p.stem + ".json")
    if p.stem != "schema" and candidate.is_file():
        return candidate
    raise UsageFailure(f"no problem file {str(path)!r} (bundled: {', '.join(bundled_names())})")


def _schema() -> dict:
    return json.loads((bundled_dir() / "schema.json").read_text())


def _line_of(text: str, path) -> int:
    """Line of the JSON member addressed by ``path`` (best effort)."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
            if m is None:
                break
            pos = m.start()
        else:
            # walk to the key-th element of the array opening after pos
            start = text.find("[", pos)
            if start < 0:
                break
            pos = _array_item(text, start, key)
    return text.count("\n", 0, pos) + 1


def _array_item(text: str, start: int, index: int) -> int:
    depth, item, i, in_str = 0, 0, start + 1, False
    while i < len(text):
        c = text[i]
        if in_str:
            if c == "\\":
                i += 1
            elif c == '"':
                in_str = False
        elif c == '"':
            in_str = True
        elif c in "[{":
            depth += 1
        elif c in "]}":
            if depth == 0:
                return i
            depth -= 1
        elif c == "," and depth == 0:
            item += 1
            if item == index:
                j = i + 1
                while j < len(text) and text[j] in " \t\r\n":
                    j += 1
                return j
        i += 1
    return start if index == 0 else len(text)


def read_problem_file(path: Path) -> dict:
    """Parse and validate a problem file; errors carry line numbers."""
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageFailure(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (_line_of(text, e.absolute_path), e.message))
    if errors:
        lines = [
            f"{path}: line {_line_of(text, e.absolute_path)}: "
            f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
            for e in errors
        ]
        raise UsageFailure("\n".join(lines))
    return doc


def problem_kind(doc: dict) -> str:
    if doc.get("kind"):
        return doc["kind"]
    family = (doc.get("manufactured") or {}).get("family", "")
    return "second_order" if family in ("harmonic_wave", "wave_counterexample") else "system"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    problem: Path
    command: str
    mode: str = "system"
    numerics: Numerics = DEFAULT_NUMERICS
    tol: float | None = None
    out: Path = Path(".")
    eps0: float | None = None
    tau0: float | None = None
    phi0: float = 0.0
    n_eps: int = 3
    n_tau: int = 3
    doc: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def second_order(self) -> bool:
        return self.mode == "second-order"

    def header(self, **extra) -> dict:
        meta = {
            "command": self.command,
            "problem": self.doc.get("name", self.problem.stem),
            "mode": self.mode,
            "numerics": {"M": self.numerics.modes, "N_x": self.numerics.n_x,
                         "quad_order": self.numerics.quad_order},
        }
        if self.tol is not None:
            meta["tol"] = self.tol
        meta.update(extra)
        return meta


def make_config(command: str, problem: str, *, modes=None, xnodes=None, tol=None,
                second_order=False, out=".", eps0=None, tau0=None, phi0=0.0,
                n_eps=3, n_tau=3) -> RunConfig:
    path = resolve_problem(problem)
    doc = read_problem_file(path)
    kind = problem_kind(doc)
    if second_order and kind != "second_order":
        raise UsageFailure(f"--second-order given but {path.name} describes a first-order system")
    mode = "second-order" if kind == "second_order" else "system"
    block = doc.get("numerics", {})
    m = modes if modes is not None else block.get("modes", DEFAULT_NUMERICS.modes)
    nx = xnodes if xnodes is not None else block.get("n_x", DEFAULT_NUMERICS.n_x)
    try:
        numerics = Numerics(modes=int(m), n_x=int(nx),
                            quad_order=int(block.get("quad_order", DEFAULT_NUMERICS.quad_order)))
    except ValueError as exc:
        raise UsageFailure(str(exc)) from None
    tol = tol if tol is not None else block.get("tol")
    if tol is not None and not tol > 0:
        raise UsageFailure("tolerances must be positive")
    if eps0 is not None and not eps0 > 0:
        raise UsageFailure("--eps0 must be positive")
    if n_eps < 1 or n_tau < 1:
        raise UsageFailure("--n-eps and --n-tau must be at least 1")
    return RunConfig(path, command, mode, numerics, tol, Path(out), eps0, tau0, phi0,
                     n_eps, n_tau, doc)


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------


class Pipeline:
    """Lazily built objects shared by the stages of one run."""

    def __init__(self, cfg: RunConfig, echo=click.echo):
        self.cfg = cfg
        self.echo = echo
        self._cache: dict = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def loaded(self):
        from .problem import load_problem

        def build():
            try:
                problem, sol = load_problem(self.cfg.doc)
            except (ValueError, TypeError) as exc:
                raise UsageFailure(f"{self.cfg.problem}: {exc}") from None
            if sol is None:
                raise UsageFailure(f"{self.cfg.problem}: no unforced solution given")
            return problem, sol

        return self._get("loaded", build)

    @property
    def problem(self):
        return self.loaded[0]

    @property
    def u0(self):
        return self._get("u0", lambda: self.loaded[1].field(self.cfg.numerics))

    def nonresonance(self):
        from .linsolve import MARGIN_TOL, check_nonres_sys
        from .secondorder import check_nonres_eq

        tol = self.cfg.tol if self.cfg.command == "check-nonres" and self.cfg.tol else MARGIN_TOL
        check = check_nonres_eq if self.cfg.second_order else check_nonres_sys
        return self._get("nonres", lambda: check(self.problem, self.u0, self.cfg.numerics, tol))

    def require_nonresonance(self):
        report = self.nonresonance()
        if not report.any_satisfied:
            raise AssumptionFailure(f"non-resonance: {report.summary()}")
        return report

    def require_forcing(self):
        if not self.problem.is_forced:
            raise UsageFailure(f"{self.cfg.problem.name} has no forcing; the phase function vanishes")

    def adjoint(self):
        from .adjoint import solve_adjoint_sys
        from .secondorder import solve_adjoint_eq

        self.require_nonresonance()
        solve = solve_adjoint_eq if self.cfg.second_order else solve_adjoint_sys
        return self._get("adjoint", lambda: solve(self.problem, self.u0, self.cfg.numerics))

    def curve(self):
        from .phase import phi_curve_eq, phi_curve_sys

        self.require_forcing()
        build = phi_curve_eq if self.cfg.second_order else phi_curve_sys
        return self._get("curve", lambda: build(self.problem, self.u0, self.adjoint()))

    def lock_context(self):
        from .locking import LockContext
        from .secondorder import FOSContext, phi_curve_fos
        from .charops import SystemForm
        from .phase import phi_curve_sys

        self.require_forcing()
        adj = self.adjoint()

        def build():
            if self.cfg.second_order:
                ctx = FOSContext(self.problem, self.cfg.numerics, self.u0)
                lock = LockContext(ctx, adj.system, phi_curve_fos(ctx, adj))
                lock.equation_adjoint = adj
                return lock
            form = SystemForm(self.problem, self.cfg.numerics, self.u0)
            return LockContext(form, adj, phi_curve_sys(self.problem, self.u0, adj))

        return self._get("lock", build)

    def root(self, ctx, tau):
        from .locking import nearest_root
        from .phase import locking_interval

        root = nearest_root(ctx.curve, tau, self.cfg.phi0)
        if root is None:
            lo, hi = locking_interval(ctx.curve)
            raise AssumptionFailure(
                f"Phi(phi) = {tau!r} has no nondegenerate root (Phi ranges over [{lo:.6g}, {hi:.6g}])"
            )
        return root


def _write_table(path: Path, header: dict, columns: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _plot_phase_curve(path: Path, table: np.ndarray, tau0, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    with matplotlib.rc_context({"svg.hashsalt": "hyperlock", "svg.fonttype": "path"}):
        fig = Figure(figsize=(6.0, 3.6))
        ax = fig.add_subplot()
        ax.plot(table[:, 0], table[:, 1], color="C0", lw=1.5, label="Phi")
        if tau0 is not None:
            ax.axhline(tau0, color="C3", lw=0.8, ls="--", label="tau0")
        ax.set_xlim(0.0, 1.0)
        ax.set_xlabel("phi")
        ax.set_ylabel("Phi(phi)")
        ax.set_title(title)
        ax.grid(alpha=0.3)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})


def stage_check_nonres(pipe: Pipeline) -> int:
    report = pipe.nonresonance()
    data = report.to_dict()
    data.update(pipe.cfg.header())
    (pipe.cfg.out / "nonres.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    for k in range(2):
        route = report.routes[k] or "none"
        pipe.echo(f"condition {k + 1}: margin {report.margins[k]:.3e}  route {route}")
    pipe.echo(report.summary())
    return EXIT_OK if report.any_satisfied else EXIT_ASSUMPTION


def stage_adjoint(pipe: Pipeline) -> int:
    adj = pipe.adjoint()
    cfg = pipe.cfg
    if cfg.second_order:
        sysadj = adj.system
        extra = {"kernel_gap": sysadj.kernel_gap, "residual": sysadj.residual,
                 "difference_defect": adj.difference_defect, "normalization": adj.normalization_eq}
        adj.u_star.to_csv(cfg.out / "adjoint.csv", extra=cfg.header(**extra))
        adj.u_tilde.to_csv(cfg.out / "adjoint_difference.csv", extra=cfg.header(**extra))
    else:
        extra = {"kernel_gap": adj.kernel_gap, "residual": adj.residual,
                 "boundary_residual": adj.boundary_residual}
        adj.u_star.to_csv(cfg.out / "adjoint.csv", extra=cfg.header(**extra))
    for key, value in extra.items():
        pipe.echo(f"{key}: {value:.6e}")
    return EXIT_OK


def stage_phase_curve(pipe: Pipeline) -> int:
    from .phase import find_locked_phases, locking_interval

    curve = pipe.curve()
    cfg = pipe.cfg
    table = curve.table()
    lo, hi = locking_interval(curve)
    header = cfg.header(locking_interval=[lo, hi])
    _write_table(cfg.out / "phase_curve.csv", header, ["phi", "Phi", "dPhi"], table)
    _plot_phase_curve(cfg.out / "phase_curve.svg", table, cfg.tau0, header["problem"])
    pipe.echo(f"Phi ranges over [{lo:.10g}, {hi:.10g}]")
    if cfg.tau0 is not None:
        roots = find_locked_phases(curve, cfg.tau0)
        if not roots:
            pipe.echo(f"no root of Phi(phi) = {cfg.tau0!r}")
        for r in roots:
            tag = "" if r.nondegenerate else "  (degenerate)"
            pipe.echo(f"root phi = {r.phi:.12f}  Phi' = {r.slope:+.6e}{tag}")
    return EXIT_OK


SOLUTION_COLUMNS = ["eps", "tau", "T", "phi", "w_sup", "residual", "orbit_distance_over_eps"]


def _require(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageFailure(f"{cfg.command} needs " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _solution_tol(cfg: RunConfig) -> float:
    from .locking import SOLUTION_TOL

    return cfg.tol or SOLUTION_TOL


def stage_lock(pipe: Pipeline) -> int:
    from .locking import LockingError, seed_solution, solve_locked

    cfg = pipe.cfg
    _require(cfg, "eps0", "tau0")
    ctx = pipe.lock_context()
    root = pipe.root(ctx, cfg.tau0)
    seed = seed_solution(cfg.tau0, root.phi, ctx)
    try:
        sol = solve_locked(cfg.eps0, cfg.tau0, seed, ctx)
    except LockingError as exc:
        raise AssumptionFailure(f"locking solver: {exc}") from None
    residual = max(sol.residual_abstract, sol.residual_pde)
    row = (sol.eps, sol.tau, sol.T, sol.phi, sol.w.sup_norm(), residual, sol.orbit_ratio)
    header = cfg.header(phi0=root.phi, newton_iterations=sol.newton_iters)
    _write_table(cfg.out / "lock.csv", header, SOLUTION_COLUMNS, [row])
    u = ctx.form.reconstruct(sol.eps, sol.u.coef, sol.phi) if cfg.second_order else sol.u
    u.to_csv(cfg.out / "locked_solution.csv", extra=header)
    pipe.echo(f"phi0 = {root.phi:.12f}  phi = {sol.phi:.12f}  T = {sol.T:.12f}")
    pipe.echo(f"residual {residual:.3e}  orbit distance / eps {sol.orbit_ratio:.6f}  "
              f"({sol.newton_iters} Newton steps)")
    return EXIT_OK if residual < _solution_tol(cfg) else EXIT_ASSUMPTION


def stage_sweep(pipe: Pipeline) -> int:
    from .locking import sweep

    cfg = pipe.cfg
    _require(cfg, "eps0", "tau0")
    ctx = pipe.lock_context()
    root = pipe.root(ctx, cfg.tau0)
    result = sweep(cfg.eps0, cfg.tau0, ctx, n_eps=cfg.n_eps, n_tau=cfg.n_tau, phi0=root.phi)
    rows = result.rows()
    header = cfg.header(phi0=root.phi, eps0=cfg.eps0, tau0=cfg.tau0)
    _write_table(cfg.out / "sweep.csv", header, SOLUTION_COLUMNS, rows)
    tol = _solution_tol(cfg)
    failed = [p for p in result.points if p.solution is None]
    bad = [r for r in rows if not r[5] < tol]
    for p in failed:
        pipe.echo(f"eps={p.eps:.4g} tau={p.tau:.6g}: {p.failure}")
    pipe.echo(f"{len(rows) - len(bad)}/{len(rows)} points with residual < {tol:g}; "
              f"sup orbit distance / eps = {result.uniform_bound:.6f}")
    return EXIT_OK if not bad else EXIT_ASSUMPTION


def stage_diagnose(pipe: Pipeline) -> int:
    from .locking import LockingError, seed_solution, solve_locked, sys2_diagnostic

    cfg = pipe.cfg
    _require(cfg, "eps0", "tau0")
    ctx = pipe.lock_context()
    root = pipe.root(ctx, cfg.tau0)
    warm = seed_solution(cfg.tau0, root.phi, ctx)
    ladder = sorted((cfg.eps0 / 2.0**k for k in range(max(cfg.n_eps, 1))), reverse=True)
    sequence = []
    for eps in reversed(ladder):  # smallest eps first: closest to the seed
        try:
            sol = solve_locked(eps, cfg.tau0, warm, ctx)
        except LockingError as exc:
            pipe.echo(f"eps={eps:.4g}: {exc}")
            continue
        warm = (sol.phi, sol.w.coef)
        sequence.append((eps, sol.T, sol.u.coef))
    sequence.sort(key=lambda s: -s[0])
    entries = sys2_diagnostic(sequence, ctx, _solution_tol(cfg))
    rows = [(e.eps, e.period, e.phi, e.value, e.residual, e.accepted) for e in entries]
    header = cfg.header(phi0=root.phi, tau0=cfg.tau0)
    _write_table(cfg.out / "diagnose.csv", header,
                 ["eps", "T", "phi", "Phi_minus_tau", "residual", "accepted"], rows)
    for e in entries:
        pipe.echo(f"eps={e.eps:.4g}  Phi(phi) - (T-1)/eps = {e.value:+.3e}")
    ok = len(entries) == len(ladder) and all(e.accepted for e in entries)
    return EXIT_OK if ok else EXIT_ASSUMPTION


STAGES = {
    "check-nonres": stage_check_nonres,
    "adjoint": stage_adjoint,
    "phase-curve": stage_phase_curve,
    "lock": stage_lock,
    "sweep": stage_sweep,
    "diagnose": stage_diagnose,
}


def run(cfg: RunConfig, echo=click.echo) -> int:
    """Execute one stage; returns the exit status."""
    from .adjoint import AdjointError
    from .linsolve import NonResonanceError
    from .locking import LockingError
    from .phase import PhaseError

    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        echo(f"error: cannot create output directory: {exc}", err=True)
        return EXIT_USAGE
    pipe = Pipeline(cfg, echo)
    try:
        return STAGES[cfg.command](pipe)
    except UsageFailure as exc:
        echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except (AssumptionFailure, AdjointError, NonResonanceError, PhaseError, LockingError) as exc:
        echo(f"assumption failed: {exc}", err=True)
        return EXIT_ASSUMPTION


# ---------------------------------------------------------------------------
# click wiring
# ---------------------------------------------------------------------------


def _common(fn):
    opts = [
        click.argument("problem"),
        click.option("--modes", type=int, help="Fourier modes M in t (default 16)."),
        click.option("--xnodes", type=int, help="Grid nodes N_x in x (default 65)."),
        click.option("--tol", type=float, help="Acceptance tolerance of the stage."),
        click.option("--second-order", is_flag=True, help="Require a second-order problem."),
        click.option("--out", default=".", show_default=True, type=click.Path(file_okay=False),
                     help="Output directory."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _locking(fn):
    opts = [
        click.option("--eps0", type=float, help="Forcing amplitude (largest rung of a ladder)."),
        click.option("--tau0", type=float, help="Scaled period deviation (T - 1) / eps."),
        click.option("--phi0", type=float, default=0.0, show_default=True,
                     help="Pick the root of the phase equation nearest to this phase."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Frequency locking of forced periodic hyperbolic problems.

    PROBLEM is a JSON problem file or the name of a bundled one
    (see `hyperlock problems`).
    """


def _execute(command: str, problem: str, **kw) -> int:
    try:
        cfg = make_config(command, problem, **kw)
    except UsageFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    return run(cfg)


@cli.command("check-nonres")
@_common
def check_nonres_cmd(problem, **kw):
    """Non-resonance margins of both boundary round trips."""
    return _execute("check-nonres", problem, **kw)


@cli.command("adjoint")
@_common
def adjoint_cmd(problem, **kw):
    """Normalized adjoint periodic solution."""
    return _execute("adjoint", problem, **kw)


@cli.command("phase-curve")
@_common
@click.option("--tau0", type=float, help="Also report the roots of Phi(phi) = tau0.")
def phase_curve_cmd(problem, **kw):
    """Phase function on 512 phases (CSV and SVG)."""
    return _execute("phase-curve", problem, **kw)


@cli.command("lock")
@_common
@_locking
def lock_cmd(problem, **kw):
    """One locked solution at (eps0, tau0)."""
    return _execute("lock", problem, **kw)


@cli.command("sweep")
@_common
@_locking
@click.option("--n-eps", type=int, default=3, show_default=True, help="Rungs eps0 / 2^k.")
@click.option("--n-tau", type=int, default=3, show_default=True, help="Values of tau around tau0.")
def sweep_cmd(problem, **kw):
    """Locked solutions on a wedge of (eps, tau) values."""
    return _execute("sweep", problem, **kw)


@cli.command("diagnose")
@_common
@_locking
@click.option("--n-eps", type=int, default=4, show_default=True, help="Rungs eps0 / 2^k.")
def diagnose_cmd(problem, **kw):
    """Phi(phi_k) - (T_k - 1) / eps_k along an eps ladder at fixed tau0."""
    return _execute("diagnose", problem, **kw)


@cli.command("problems")
def problems_cmd():
    """List the bundled problem files."""
    for name in bundled_names():
        doc = json.loads((bundled_dir() / f"{name}.json").read_text())
        click.echo(f"{name:20s} {doc.get('description', '')}")
    return EXIT_OK


def main(argv=None) -> int:
    """Entry point; usage errors exit with 1 rather than click's 2."""
    try:
        code = cli.main(args=argv, prog_name="hyperlock", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    return EXIT_OK if code is None else int(code)


if __name__ == "__main__":
    sys.exit(main())
