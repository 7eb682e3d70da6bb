"""Command line runner: ``higgs-lab <command> [flags]``.

Every run writes ``config.json`` (the validated config), ``report.json`` (all
numbers and named assertions) and, for solves, ``fields/*.csv`` into the output
directory.  The exit status is 0 exactly when every assertion passes, 1 when
some assertion fails, 2 for an invalid config and 3 when the solver fails.
"""

import argparse
import json
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import bundle as bdl
from . import diagnostics as dg
from . import solver as slv
from . import suites
from .domain import MetricField, build_grid, read_field_csv, write_field_csv

MAX_Q = 8
EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, violations):
        super().__init__("invalid config")
        self.violations = violations


def load_schema():
    return json.loads(resources.files("higgs_lab").joinpath("config_schema.json").read_text())


# ---------------------------------------------------------------------------
# config assembly and validation


def parse_coefficients(text):
    """'1e-2, 0.5+0.1j' -> [[0.01, 0.0], [0.5, 0.1]]"""
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            c = complex(part.replace(" ", ""))
            out.append([c.real, c.imag])
    return out


def parse_grid(text):
    try:
        nr, nphi = text.lower().split("x")
        return int(nr), int(nphi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 48x96, got {text!r}")


def parse_radii(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_args(args):
    cfg = {"command": args.command, "output": args.out or f"runs/{args.command}"}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "n", None) is not None:
        cfg["n"] = args.n
    if getattr(args, "samples", None) is not None:
        cfg["samples"] = args.samples
    q = {}
    for k in range(1, MAX_Q + 1):
        val = getattr(args, f"q{k}", None)
        if val is not None:
            try:
                q[f"q{k}"] = parse_coefficients(val)
            except ValueError:
                q[f"q{k}"] = val  # left for the validator to reject
    if q:
        cfg["q"] = q
    if getattr(args, "grid", None) is not None or getattr(args, "radius", None) is not None:
        nr, nphi = args.grid or (32, 64)
        cfg["grid"] = {"R": args.radius if args.radius is not None else 0.7, "Nr": nr, "Nphi": nphi}
        if args.grading is not None:
            cfg["grid"]["grading"] = args.grading
    solver = {}
    for flag, key in (("method", "method"), ("tol", "residualTol"), ("max_iterations", "maxIterations")):
        val = getattr(args, flag, None)
        if val is not None:
            solver[key] = val
    if getattr(args, "no_defect", False):
        solver["referenceDefect"] = False
    if getattr(args, "compat_projection", None) is not None:
        solver["compatProjection"] = args.compat_projection
    if solver:
        cfg["solver"] = solver
    if getattr(args, "pair_epsilon", None) is not None:
        cfg["pairEpsilon"] = args.pair_epsilon
    if getattr(args, "radii", None) is not None:
        cfg["radii"] = args.radii
    if getattr(args, "probe", None) is not None:
        cfg["probeRadius"] = args.probe
    if getattr(args, "run_dir", None) is not None:
        cfg["runDir"] = args.run_dir
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = _merge(cfg, json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([{"key": "config", "message": f"cannot read config file: {exc}"}])
    return apply_defaults(cfg)


def apply_defaults(cfg):
    cmd = cfg.get("command")
    cfg.setdefault("seed", 0)
    if cmd in ("verify-algebra", "build-bundle", "solve", "exhaust"):
        cfg.setdefault("n", 2)
    if cmd == "verify-algebra":
        cfg.setdefault("samples", 1000)
    if cmd in ("solve", "exhaust"):
        cfg.setdefault("q", {})
        cfg.setdefault("solver", {})
    if cmd == "solve":
        cfg.setdefault("grid", {"R": 0.7, "Nr": 32, "Nphi": 64})
        cfg.setdefault("pairEpsilon", 0.0)
    if cmd == "exhaust":
        cfg.setdefault("grid", {"R": max(cfg.get("radii", [0.9])), "Nr": 32, "Nphi": 64})
        cfg.setdefault("radii", [0.5, 0.7, 0.85, 0.92])
        cfg.setdefault("probeRadius", 0.3)
    return cfg


def validate(cfg):
    """Every violated key, schema and cross-field rules together."""
    violations = []
    for err in sorted(Draft202012Validator(load_schema()).iter_errors(cfg), key=lambda e: list(e.path)):
        key = ".".join(str(p) for p in err.path) or "(root)"
        violations.append({"key": key, "message": err.message})
    n = cfg.get("n")
    if isinstance(n, int) and isinstance(cfg.get("q"), dict):
        for key in cfg["q"]:
            if key.startswith("q") and key[1:].isdigit() and int(key[1:]) > n:
                violations.append({"key": f"q.{key}", "message": f"only q1..q{n} exist for n = {n}"})
    radii = cfg.get("radii")
    if cfg.get("command") == "exhaust" and isinstance(radii, list) and all(isinstance(r, (int, float)) for r in radii):
        if any(b <= a for a, b in zip(radii, radii[1:])):
            violations.append({"key": "radii", "message": "radii must be strictly increasing"})
        probe = cfg.get("probeRadius")
        if isinstance(probe, (int, float)) and radii and probe >= min(radii):
            violations.append({"key": "probeRadius", "message": "probe radius must be below every disk radius"})
    if cfg.get("command") == "diagnose" and "runDir" not in cfg:
        violations.append({"key": "runDir", "message": "diagnose needs the run directory of a solve"})
    if violations:
        raise ConfigError(violations)
    return cfg


def higgs_tuple(cfg):
    n = cfg["n"]
    coeffs = []
    for k in range(1, n + 1):
        pairs = cfg.get("q", {}).get(f"q{k}", [])
        coeffs.append(tuple(complex(re, im) for re, im in pairs))
    return bdl.HiggsTuple(n, tuple(coeffs))


def solver_config(cfg):
    return slv.SolverConfig(**cfg.get("solver", {}))


def grid_from(cfg):
    g = cfg["grid"]
    return build_grid(g["R"], g["Nr"], g["Nphi"], g.get("grading", 0.3))


# ---------------------------------------------------------------------------
# reports


class Report:
    def __init__(self, command):
        self.data = {"command": command, "assertions": [], "results": {}}

    def check(self, name, passed, value=None, threshold=None):
        entry = {"name": name, "passed": bool(passed)}
        if value is not None:
            entry["value"] = value
        if threshold is not None:
            entry["threshold"] = threshold
        self.data["assertions"].append(entry)

    def result(self, key, value):
        self.data["results"][key] = value

    @property
    def passed(self):
        return all(a["passed"] for a in self.data["assertions"])

    def finish(self):
        self.data["passed"] = self.passed
        return self.data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands


def run_verify_algebra(cfg, rep):
    n, samples, seed = cfg["n"], cfg["samples"], cfg["seed"]
    alg = suites.algebra_suite(n, samples, seed)
    struct = suites.structure_suite(n, samples, seed + 1)
    skew = suites.skew_suite(min(samples, 100), seed + 2)
    quasi = suites.quasi_cyclic_suite(min(samples, 100), seed + 3)
    nu = suites.nu_split_suite(min(samples, 100), seed + 4)
    for key, ok in alg["checks"].items():
        rep.check(f"compatible metric identity: {key}", ok, alg["worst"][key])
    for key, ok in struct["checks"].items():
        rep.check(f"split compatible metric identity: {key}", ok, struct["worst"][key])
    rep.check("Higgs field skew for the split pairing", skew["holds"], skew["worst"], 1e-14)
    rep.check("quasi-cyclic vector survives half-epsilon perturbation", quasi["holds"], quasi["minSlack"], 0.0)
    rep.check("nu-split block bound", nu["holds"], nu["minSlack"], 0.0)
    for key, val in (("algebra", alg), ("structure", struct), ("skew", skew), ("quasiCyclic", quasi), ("nuSplit", nu)):
        rep.result(key, val)


def run_build_bundle(cfg, rep):
    n = cfg["n"]
    spec = bdl.build_bundle(n)
    rep.result("bundle", spec.to_dict())
    exact = bdl.hX_constants_exact(n)
    rep.result("hX_constants", {"exact": [str(Fraction(a)) for a in exact], "float": [float(a) for a in exact]})
    rep.result("hX_at_origin", bdl.hX_diagonal(spec, 0.5 * 4.0).tolist())
    rep.result("weightPowers", spec.weight_powers.tolist())
    skew = suites.skew_suite(100, cfg["seed"], max_n=n) if n > 0 else None
    rep.check("Higgs field skew for the split pairing", skew["holds"], skew["worst"], 1e-14)
    grid = build_grid(0.7, 16, 32)
    model = suites.model_metric_suite(n, grid)
    rep.check("model Higgs norm n(n-1)(2n-1)/3", model["holds"], model["maxDeviation"], 1e-12)
    rep.result("modelHiggsNorm", model)


def _metric_columns(spec, field_):
    K = dg.scaled_metric(field_, spec)
    cols = {}
    lab = spec.labels
    for i in range(spec.dim):
        for j in range(i, spec.dim):
            if lab[i] == lab[j]:
                cols[f"K_{i}_{j}_re"] = K[..., i, j].real
                if i != j:
                    cols[f"K_{i}_{j}_im"] = K[..., i, j].imag
    return cols


def metric_from_columns(spec, grid, cols):
    K = np.zeros(grid.shape + (spec.dim, spec.dim), dtype=complex)
    lab = spec.labels
    for i in range(spec.dim):
        for j in range(i, spec.dim):
            if lab[i] != lab[j]:
                continue
            val = cols[f"K_{i}_{j}_re"].reshape(grid.shape).astype(complex)
            if i != j:
                val = val + 1j * cols[f"K_{i}_{j}_im"].reshape(grid.shape)
            K[..., i, j] = val
            K[..., j, i] = np.conj(val)
    D = np.sqrt(bdl.hX_diagonal(spec, grid.gx))
    return MetricField(grid, K * (D[..., :, None] * D[..., None, :]), spec.labels, True)


def compatibility_threshold(spec, field_, tol):
    """Compatibility is exact only for the continuum solution: allow O(spacing^2) times the deviation from h_X."""
    dev = float(slv.log_spectrum_distance(field_.H, slv.hX_field(spec, field_.grid).H).max())
    return max(100 * tol, 10 * field_.grid.spacing**2 * dev)


def diagnose_metric(spec, q, field_, tol, rep, pair=None):
    grid = field_.grid
    dom = dg.domination_report(field_, spec)
    rep.check("weak domination of the model metric", dom.verdict, min(dom.minMargins), -dom.tolerance)
    rep.result("domination", dom.to_dict())
    rep.result("strictDominationSomewhere", dom.rigiditySignature >= 1e-6)
    energy = dg.energy_report(field_, q, spec)
    rep.check("energy density lower bound 2n(n-1)^2(2n-1)/3", energy.minMargin >= -energy.tolerance, energy.minMargin)
    rep.check(
        "energy strengthening by exp(w_n / N)",
        energy.strengtheningMinMargin >= -energy.tolerance,
        energy.strengtheningMinMargin,
    )
    rep.result("energy", energy.to_dict())
    vk = dg.vk_cooperative_check(field_, spec)
    if spec.n > 1:
        rows = vk["rows"]
        rep.check("v_k differential inequalities", all(r["inequalityHolds"] for r in rows))
        rep.check("v_k interior sup below boundary sup", all(r["maximumPrinciple"] for r in rows))
        rep.check("v_k nonpositive in the interior", all(r["nonPositive"] for r in rows))
        rep.check("v_k system cooperative", vk["cooperative"])
    rep.result("vk", vk)
    _, A = bdl.theta_matrices(spec, q, grid.z)
    ident = dg.structural_identities(field_, spec, A)
    thr = compatibility_threshold(spec, field_, tol)
    rep.check("identities forced by compatibility", ident["max"] <= thr, ident["max"], thr)
    rep.result("structuralIdentities", ident)
    if pair is not None:
        sim = slv.metric_pair_diagnostics(field_, pair)["report"]
        rep.check("subharmonicity of tr(s)", sim["trace"]["holds"], sim["trace"]["maxValue"], sim["trace"]["delta"])
        rep.check("subharmonicity of log tr(s)", sim["logTrace"]["holds"], sim["logTrace"]["maxValue"])
        rep.check("tr(s) maximal on the boundary", sim["boundaryMaximum"]["holds"])
        rep.result("pair", sim)
    return {"margins": dom, "energy": energy}


def run_solve(cfg, rep, outdir):
    spec = bdl.build_bundle(cfg["n"])
    q = higgs_tuple(cfg)
    grid = grid_from(cfg)
    scfg = solver_config(cfg)
    field_, res = slv.solve_dirichlet(spec, q, grid, None, scfg)
    tol = scfg.residualTol
    rep.check("harmonic metric residual", res.supResidual <= tol, res.supResidual, tol)
    thr = compatibility_threshold(spec, field_, tol)
    rep.check("compatibility emerges", res.compatibilityDrift <= thr, res.compatibilityDrift, thr)
    rep.check("V and W blocks stay split", res.offBlock == 0.0, res.offBlock)
    rep.result("solver", res.to_dict())
    pair = None
    if cfg.get("pairEpsilon", 0.0) > 0:
        Hb = slv.perturbed_boundary(spec, grid, cfg["pairEpsilon"], cfg["seed"])
        pair, pres = slv.solve_dirichlet(spec, q, grid, Hb, scfg)
        rep.check("harmonic metric residual (perturbed boundary)", pres.supResidual <= tol, pres.supResidual, tol)
        rep.result("pairSolver", pres.to_dict())
    diagnose_metric(spec, q, field_, tol, rep, pair)
    fields = outdir / "fields"
    fields.mkdir(parents=True, exist_ok=True)
    write_field_csv(fields / "metric.csv", grid, _metric_columns(spec, field_))
    write_field_csv(fields / "diagnostics.csv", grid, dg.field_columns(field_, spec, q))


def run_exhaust(cfg, rep):
    spec = bdl.build_bundle(cfg["n"])
    q = higgs_tuple(cfg)
    g = cfg["grid"]
    out = slv.exhaustion_sequence(
        spec, q, cfg["radii"], cfg["probeRadius"], (g["Nr"], g["Nphi"]), solver_config(cfg)
    )
    rep.check("exhaustion differences decrease", out["decreasingTail"], out["differences"])
    rep.result("exhaustion", out)


def run_diagnose(cfg, rep):
    run = Path(cfg["runDir"])
    if not (run / "fields").is_dir() or not (run / "fields" / "metric.csv").is_file():
        raise FileNotFoundError(f"missing fields/ in {run}")
    with open(run / "config.json") as fh:
        src = json.load(fh)
    spec = bdl.build_bundle(src["n"])
    q = higgs_tuple(src)
    grid = grid_from(src)
    cols = read_field_csv(run / "fields" / "metric.csv")
    rr, pp = grid.node_table()
    if cols["r"].size != rr.size or np.abs(cols["r"] - rr).max() > 1e-12 or np.abs(cols["phi"] - pp).max() > 1e-12:
        raise ValueError("field nodes do not match the grid in config.json")
    field_ = metric_from_columns(spec, grid, cols)
    tol = solver_config(src).residualTol
    res = slv.HitchinProblem(spec, q, grid, field_, solver_config(src).referenceDefect)
    K = dg.scaled_metric(field_, spec)
    sup = res.sup_residual(K)
    rep.check("harmonic metric residual", sup <= 10 * tol, sup, 10 * tol)
    diagnose_metric(spec, q, field_, tol, rep)
    rep.result("source", {"runDir": str(run), "config": src})


COMMANDS = {
    "verify-algebra": run_verify_algebra,
    "build-bundle": run_build_bundle,
    "exhaust": run_exhaust,
    "diagnose": run_diagnose,
}


def run(cfg):
    """Execute a validated config; returns (exit code, report dict)."""
    outdir = Path(cfg["output"])
    rep = Report(cfg["command"])
    try:
        if cfg["command"] == "diagnose":
            run_diagnose(cfg, rep)
            outdir.mkdir(parents=True, exist_ok=True)
        elif cfg["command"] == "solve":
            outdir.mkdir(parents=True, exist_ok=True)
            run_solve(cfg, rep, outdir)
        else:
            COMMANDS[cfg["command"]](cfg, rep)
            outdir.mkdir(parents=True, exist_ok=True)
    except slv.SolverError as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        rep.check("solver converged", False)
        rep.result("solverFailure", {"message": str(exc), "trace": exc.trace})
        dump_json(outdir / "config.json", cfg)
        dump_json(outdir / "report.json", rep.finish())
        return EXIT_SOLVER, rep.data
    dump_json(outdir / "config.json", cfg)
    dump_json(outdir / "report.json", rep.finish())
    return (EXIT_OK if rep.passed else EXIT_FAILED), rep.data


def build_parser():
    p = argparse.ArgumentParser(prog="higgs-lab", description="Harmonic metrics on disks for split Higgs bundles")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; its values override flags")
        sp.add_argument("--out", help="output directory (default runs/<command>)")
        sp.add_argument("--seed", type=int)

    def bundle_flags(sp):
        sp.add_argument("--n", type=int)

    def q_flags(sp):
        for k in range(1, MAX_Q + 1):
            sp.add_argument(f"--q{k}", metavar="COEFFS", help=argparse.SUPPRESS if k > 4 else f"coefficients of q_{k}")

    def solver_flags(sp):
        sp.add_argument("--grid", type=parse_grid, help="NrxNphi, e.g. 48x96")
        sp.add_argument("--grading", type=float)
        sp.add_argument("--method", choices=[slv.NEWTON, slv.HEAT_FLOW])
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iterations", type=int)
        sp.add_argument("--compat-projection", type=int, help="project onto compatible metrics every k steps")
        sp.add_argument("--no-defect", action="store_true", help="plain discretization without the model defect")

    sp = sub.add_parser("verify-algebra", help="seeded identity suites")
    common(sp)
    bundle_flags(sp)
    sp.add_argument("--samples", type=int)

    sp = sub.add_parser("build-bundle", help="dump the bundle data and model metric")
    common(sp)
    bundle_flags(sp)

    sp = sub.add_parser("solve", help="Dirichlet problem with model boundary values")
    common(sp)
    bundle_flags(sp)
    q_flags(sp)
    sp.add_argument("--radius", type=float)
    solver_flags(sp)
    sp.add_argument("--pair-epsilon", type=float, help="also solve with a perturbed boundary and compare")

    sp = sub.add_parser("exhaust", help="solutions on growing disks")
    common(sp)
    bundle_flags(sp)
    q_flags(sp)
    sp.set_defaults(radius=None)
    solver_flags(sp)
    sp.add_argument("--radii", type=parse_radii)
    sp.add_argument("--probe", type=float)

    sp = sub.add_parser("diagnose", help="recompute diagnostics from a solve directory")
    common(sp)
    sp.add_argument("run_dir", nargs="?")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = validate(config_from_args(args))
    except ConfigError as exc:
        json.dump({"error": "invalid config", "violations": exc.violations}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return EXIT_INVALID
    if cfg["command"] == "diagnose" and "output" in cfg and args.out is None and args.config is None:
        cfg["output"] = str(Path(cfg["runDir"]) / "diagnose")
    try:
        code, data = run(cfg)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    for a in data["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}")
    print(f"report: {Path(cfg['output']) / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
