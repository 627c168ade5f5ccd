"""Command-line scenario runner.

``heatblowup run CONFIG`` executes one scenario described by a JSON document
and writes ``<prefix>.csv`` plus ``<prefix>.manifest.json``.
``heatblowup report MANIFEST...`` merges the checks of several manifests.

Exit codes: 0 success, 2 a check failed, 1 usage or configuration error.
The environment variable ``HEATBLOWUP_OUTPUT_PREFIX`` is prepended to every
output path.  Numerical modules are imported only after ``--threads`` has
set the BLAS thread variables.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from importlib import resources

from . import __version__

OUTPUT_ENV = "HEATBLOWUP_OUTPUT_PREFIX"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")
FLOAT_FMT = "%.16e"

# every acceptance tolerance, overridable per config under "tolerances"
DEFAULT_TOLERANCES = {
    "mu2_slope_lo": -3.3,
    "mu2_slope_hi": -2.7,
    "psi2_zero_max": math.sqrt(15.0),
    "exponent_abs": 0.02,
    "alpha_rel": 0.01,
    "orthogonality": 1e-8,
    "audit_change": 0.2,
    "flat_T_abs": 1e-3,
    "flat_exponent_abs": 0.01,
    "perturbed_exponent_lo": 0.70,
    "perturbed_exponent_hi": 0.80,
    "stationary_abs": 1e-4,
    "inner_stat_ratio": 10.0,
    "inner_lam_decades": 2.0,
    "rho_orthogonality": 1e-8,
    "semigroup_decay": 1e-6,
    "power_envelope_refine": 1.05,
}

# output columns per scenario kind; schemas/csv_columns.json is generated from this
CSV_COLUMNS = {
    "spectral-sweep": ["R", "mu1", "mu2", "slope_running", "psi2_zero"],
    "matching": ["l", "alpha_l_R100", "alpha_l_closed", "fitted_exponent", "orthogonality_max"],
    "envelope-audit": ["region", "constant", "constant_fine", "change"],
    "evolve": ["t", "u_max", "lam_est", "u_origin"],
    "inner-linear": ["s", "t", "lam", "stat", "unstable"],
    "selfsimilar-check": ["i", "eigen_defect", "rho_orthogonality", "decay_error", "power_envelope_ratio"],
}

_DEFAULT_PARAMS = {
    "spectral-sweep": {"R": [20.0, 40.0, 80.0, 160.0]},
    "matching": {"l": [1, 2, 3], "R": 20.0, "R_alpha": 100.0, "T": [0.5, 0.8, 0.8], "n_orth": 20},
    "envelope-audit": {"l": 1, "R": 20.0, "delta0": 0.1, "T": None, "tau_span": None, "n_times": 8, "n": 400},
    "evolve": {"data": "flat", "amplitude": 1.2, "r_max": None, "N": None, "grading": None, "far_bc": None,
               "horizon": None, "threshold": 1e8, "c_react": 0.05, "dt_max": 1e-3, "record_every": 1},
    "inner-linear": {"l": 1, "R": 20.0, "T": 0.5, "N": 400, "n_s": 600, "lam_decades": 2.0},
    "selfsimilar-check": {"max_index": 8, "decay_max_index": 3, "tau": [0.05, 0.7, 2.5], "n_points": 16,
                          "z_max": 5.0, "power_envelope_l": [1, 2, 3]},
}

_EVOLVE_PRESETS = {
    "flat": {"r_max": 10.0, "N": 64, "grading": ["uniform"], "far_bc": "neumann"},
    "ground": {"r_max": 20.0, "N": 2048, "grading": ["graded", 2e-6], "far_bc": "matched-decay", "horizon": 1.0},
    "scaled-ground": {"r_max": 20.0, "N": 2048, "grading": ["graded", 2e-6], "far_bc": "matched-decay"},
}


class ConfigError(Exception):
    """Malformed or schema-invalid configuration."""


def _schema(name: str) -> dict:
    return json.loads(resources.files(__package__).joinpath("schemas", name).read_text())


def load_config(path: str) -> dict:
    """Parse and validate a config file.

    Raises
    ------
    ConfigError
        With the JSON path of the first schema violation.
    """
    import jsonschema

    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(_schema("config.schema.json"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ConfigError(f"{path}: {where}: {err.message}")
    return cfg


def resolve(cfg: dict) -> tuple[dict, dict]:
    """Fill in default parameters and tolerances."""
    kind = cfg["kind"]
    params = dict(_DEFAULT_PARAMS[kind])
    if kind == "evolve":
        params.update(_EVOLVE_PRESETS[cfg.get("params", {}).get("data", "flat")])
    params.update(cfg.get("params", {}))
    if kind == "envelope-audit":
        if params["T"] is None:
            params["T"] = math.exp(-params["R"])
        if params["tau_span"] is None:
            tau0 = -math.log(params["T"])
            params["tau_span"] = [tau0 + 0.5, tau0 + 13.0]
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(cfg.get("tolerances", {}))
    return params, tol


def _check(name, value, passed, lower=None, upper=None):
    return {"name": name, "value": value, "lower": lower, "upper": upper, "passed": bool(passed)}


def _bounded(name, value, lower=None, upper=None):
    ok = math.isfinite(value) and (lower is None or value >= lower) and (upper is None or value <= upper)
    return _check(name, float(value), ok, lower, upper)


# ---------------------------------------------------------------------------
# scenarios: each returns (rows, checks)


def _spectral_sweep(p, tol, seed):
    import numpy as np

    from .spectral import eigen_ball

    radii = [float(r) for r in p["R"]]
    rows, mu2s, ok_sign, ok_psi, zeros = [], [], True, True, []
    for i, R in enumerate(radii):
        e1, e2 = eigen_ball(R, 1), eigen_ball(R, 2)
        mu2s.append(e2.mu)
        ok_sign &= e1.mu < 0 < e2.mu
        v = e1.psi.values[:-1]
        ok_psi &= bool(np.all(v > 0)) and len(e1.zeros) == 0 and len(e2.zeros) == 1
        z = e2.zeros[0] if e2.zeros else math.nan
        zeros.append(z)
        slope = (float(np.polyfit(np.log(radii[: i + 1]), np.log(np.abs(mu2s)), 1)[0])
                 if i > 0 else math.nan)
        rows.append([R, e1.mu, e2.mu, slope, z])
    checks = [
        _check("sign_pattern", float(ok_sign), ok_sign),
        _check("psi_zero_counts", float(ok_psi), ok_psi),
        _bounded("psi2_zero_max", max(zeros), upper=tol["psi2_zero_max"]),
        _bounded("mu2_slope", rows[-1][3], tol["mu2_slope_lo"], tol["mu2_slope_hi"]),
    ]
    return rows, checks


def _matching(p, tol, seed):
    import numpy as np

    from .ansatz import AnsatzState, orthogonality_residual
    from .matching import alpha_closed_form, compute_constants, fit_scaling_law, lambda_ode_solve, time_change

    ls = [int(v) for v in p["l"]]
    Ts = p["T"] if isinstance(p["T"], list) else [p["T"]] * len(ls)
    if len(Ts) != len(ls):
        raise ConfigError("params.T must have one entry per l")
    rows, checks = [], []
    for l, T in zip(ls, Ts):
        path = lambda_ode_solve(l, float(p["R"]), float(T))
        fit = fit_scaling_law(path.t, path.lam, path.T)
        a100 = compute_constants(l, float(p["R_alpha"])).alpha_l
        aref = alpha_closed_form(l)
        tc = time_change(path, path.T, l, path.constants.alpha_l)
        st = AnsatzState(l, float(p["R"]), float(T), path)
        times = float(T) * np.linspace(0.0, 0.99, int(p["n_orth"]))
        orth = max(orthogonality_residual(st, float(t)) for t in times)
        rows.append([l, a100, aref, fit.q, orth])
        checks += [
            _bounded(f"exponent_l{l}", abs(fit.q - (2 * l + 2)), upper=tol["exponent_abs"]),
            _bounded(f"alpha_gap_l{l}", abs(a100 / aref - 1.0), upper=tol["alpha_rel"]),
            _check(f"sandwich_l{l}", float(tc.holds), tc.holds and bool(tc.hypothesis.all())),
            _bounded(f"orthogonality_l{l}", orth, upper=tol["orthogonality"]),
        ]
    return rows, checks


def _envelope_audit(p, tol, seed):
    import numpy as np

    from .ansatz import AnsatzState, EnvelopeW, SurrogateEps, envelope_audit
    from .matching import lambda_ode_solve

    l, R, T, d0 = int(p["l"]), float(p["R"]), float(p["T"]), float(p["delta0"])
    path = lambda_ode_solve(l, R, T)
    st = AnsatzState(l, R, T, path, eps=SurrogateEps(R, l, path), w_tilde=EnvelopeW(l, T, d0), delta0=d0)
    taus = np.linspace(*map(float, p["tau_span"]), int(p["n_times"]))
    audit = envelope_audit(st, T - np.exp(-taus), n=int(p["n"]))
    rows, checks = [], []
    for reg, c in audit.constants.items():
        rows.append([reg, c, audit.constants_fine[reg], audit.change[reg]])
        checks.append(_bounded(f"change_{reg}", audit.change[reg], upper=tol["audit_change"]))
        checks.append(_check(f"constant_{reg}", c, 0.0 < c < math.inf))
    return rows, checks


def _evolve(p, tol, seed):
    import numpy as np

    from .evolve import DtControl, EvolveConfig, evolve_nonlinear
    from .groundstate import eval_Q

    cfg = EvolveConfig(r_max=float(p["r_max"]), N=int(p["N"]), grading=tuple(p["grading"]),
                       dt_ctrl=DtControl(c_react=float(p["c_react"]), dt_max=float(p["dt_max"])),
                       blowup_threshold=float(p["threshold"]), far_bc=p["far_bc"])
    data = p["data"]
    if data == "flat":
        u0 = np.ones_like
    elif data == "ground":
        u0 = eval_Q
    else:
        amp = float(p["amplitude"])

        def u0(r):
            return amp * eval_Q(r)

    rows = []
    every = int(p["record_every"])
    count = [0]

    def sink(rec):
        if count[0] % every == 0:
            rows.append(list(rec))
        count[0] += 1

    horizon = math.inf if p["horizon"] is None else float(p["horizon"])
    tr = evolve_nonlinear(u0, cfg, horizon, sink=sink)
    d = tr.diagnostics
    if data == "flat":
        checks = [_bounded("T_est", abs(d.T_est - 0.75), upper=tol["flat_T_abs"]),
                  _bounded("rate_exponent", abs(d.exponent - 0.75), upper=tol["flat_exponent_abs"])]
    elif data == "ground":
        dev = float(np.max(np.abs(tr.final - eval_Q(tr.grid.nodes))))
        checks = [_check("no_blowup", float(tr.blew_up), not tr.blew_up),
                  _bounded("stationarity", dev, upper=tol["stationary_abs"])]
    else:
        checks = [_check("blew_up", float(tr.blew_up), tr.blew_up),
                  _bounded("rate_exponent", d.exponent, tol["perturbed_exponent_lo"], tol["perturbed_exponent_hi"])]
    return rows, checks


def _inner_linear(p, tol, seed):
    from .ansatz import AnsatzState
    from .evolve import evolve_inner_linear
    from .matching import lambda_ode_solve

    l, R, T = int(p["l"]), float(p["R"]), float(p["T"])
    st = AnsatzState(l, R, T, lambda_ode_solve(l, R, T))
    res = evolve_inner_linear(st, N=int(p["N"]), n_s=int(p["n_s"]), lam_decades=float(p["lam_decades"]))
    rows = [[s, t, lam, st_, u] for s, t, lam, st_, u in zip(res.s, res.t, res.lam, res.stat, res.unstable)]
    checks = [_bounded("stat_ratio", res.stat_ratio, upper=tol["inner_stat_ratio"]),
              _bounded("lam_decades", res.lam_decades, lower=tol["inner_lam_decades"]),
              _check("no_escape", float(res.escaped), not res.escaped)]
    return rows, checks


def _selfsimilar_check(p, tol, seed):
    import numpy as np

    from .radial import inner_rho
    from .selfsimilar import basis_coeffs, kappa_sq, power_envelope_ratio, semigroup_apply

    rng = np.random.default_rng(seed)
    z = np.sort(rng.uniform(0.0, float(p["z_max"]), int(p["n_points"])))
    n = int(p["max_index"])
    basis = [basis_coeffs(i) for i in range(n + 1)]
    kap = [math.sqrt(kappa_sq(i)) for i in range(n + 1)]
    l37 = {int(l): power_envelope_ratio(int(l), np.linspace(0, 30, 61), np.linspace(0.05, 10, 25))
           for l in p["power_envelope_l"]}
    rows, checks = [], []
    for i, e in enumerate(basis):
        defect = float(max(abs(c) for c in e.eigen_defect()))
        orth = max((abs(inner_rho(e, basis[j])) / (kap[i] * kap[j]) for j in range(i)), default=0.0)
        if i <= int(p["decay_max_index"]):
            dec = 0.0
            for tau in p["tau"]:
                ex = math.exp(-i * float(tau)) * e(z)
                u = semigroup_apply(e, float(tau), z)
                dec = max(dec, float(np.max(np.abs(u - ex)) / np.max(np.abs(ex))))
            checks.append(_bounded(f"decay_e{i}", dec, upper=tol["semigroup_decay"]))
        else:
            dec = math.nan
        rows.append([i, defect, orth, dec, l37.get(i, math.nan)])
        checks.append(_check(f"eigen_identity_e{i}", defect, defect == 0))
        checks.append(_bounded(f"rho_orthogonality_e{i}", orth, upper=tol["rho_orthogonality"]))
    for l, c1 in l37.items():
        c2 = power_envelope_ratio(l, np.linspace(0, 60, 121), np.linspace(0.05, 20, 49))
        checks.append(_bounded(f"power_envelope_l{l}", c2 / c1, upper=tol["power_envelope_refine"]))
    return rows, checks


SCENARIOS = {
    "spectral-sweep": _spectral_sweep,
    "matching": _matching,
    "envelope-audit": _envelope_audit,
    "evolve": _evolve,
    "inner-linear": _inner_linear,
    "selfsimilar-check": _selfsimilar_check,
}


# ---------------------------------------------------------------------------
# output


def format_row(row) -> str:
    """One CSV line: numbers in 17-significant-digit scientific notation."""
    out = []
    for v in row:
        if isinstance(v, str):
            out.append(v)
        else:
            out.append(FLOAT_FMT % float(v))
    return ",".join(out)


def output_prefix(prefix: str) -> str:
    return os.environ.get(OUTPUT_ENV, "") + prefix


def run(config_path: str, threads: int | None = None) -> int:
    """Execute one scenario; returns the exit code."""
    try:
        cfg = load_config(config_path)
        params, tol = resolve(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    from .errors import HeatBlowupError

    seed = int(cfg.get("seed", 0))
    try:
        rows, checks = SCENARIOS[cfg["kind"]](params, tol, seed)
    except ConfigError as exc:
        print(f"error: {config_path}: {exc}", file=sys.stderr)
        return 1
    except HeatBlowupError as exc:
        rows, checks = [], [_check(f"completed ({type(exc).__name__}: {exc})", math.nan, False)]
    prefix = output_prefix(cfg["output"])
    csv_path, man_path = prefix + ".csv", prefix + ".manifest.json"
    parent = os.path.dirname(csv_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    lines = [",".join(CSV_COLUMNS[cfg["kind"]])] + [format_row(r) for r in rows]
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest = {
        "id": cfg["id"],
        "kind": cfg["kind"],
        "version": __version__,
        "seed": seed,
        "params": params,
        "tolerances": tol,
        "threads": threads,
        "csv": os.path.abspath(csv_path),
        "columns": CSV_COLUMNS[cfg["kind"]],
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    with open(man_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, allow_nan=True)
        fh.write("\n")
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {cfg['id']} {c['name']} = {c['value']!r}")
    return 0 if manifest["passed"] else 2


def report(paths: list[str], out=None) -> int:
    """Print the merged check table; nonzero exit if any check failed."""
    out = out or sys.stdout
    merged: dict[str, dict] = {}
    for path in paths:
        try:
            with open(path, encoding="utf-8") as fh:
                man = json.load(fh)
            sid = man["id"]
            man["checks"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            print(f"error: {path}: not a run manifest ({exc})", file=sys.stderr)
            return 1
        if sid in merged:
            warnings.warn(f"duplicate scenario id {sid!r}: {path} replaces an earlier manifest", stacklevel=2)
        if man.get("version") != __version__:
            warnings.warn(f"{path} was written by version {man.get('version')}, running {__version__}",
                          stacklevel=2)
        merged[sid] = man
    print("id\tkind\tcheck\tvalue\tlower\tupper\tstatus", file=out)
    failed = False
    for sid, man in merged.items():
        for c in man["checks"]:
            failed |= not c["passed"]
            print(f"{sid}\t{man['kind']}\t{c['name']}\t{c['value']}\t{c['lower']}\t{c['upper']}\t"
                  f"{'PASS' if c['passed'] else 'FAIL'}", file=out)
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="heatblowup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP threads")
    p_rep = sub.add_parser("report", help="merge run manifests into a pass/fail table")
    p_rep.add_argument("manifests", nargs="*")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if args.command == "run":
        if args.threads is not None:
            if args.threads < 1:
                print("error: --threads must be positive", file=sys.stderr)
                return 1
            for var in THREAD_VARS:
                os.environ[var] = str(args.threads)
        return run(args.config, args.threads)
    return report(args.manifests)


if __name__ == "__main__":
    sys.exit(main())
