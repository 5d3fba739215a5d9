"""Command-line entry point.

Every subcommand resolves its parameters as flags > config file > defaults,
writes CSV/JSON artifacts into --out, and writes ``<name>_manifest.json``
recording each parameter with its source, the seed, the package version and
SHA-256 digests of the artifacts. ``replay`` re-runs a manifest and, with
--check, verifies the digests.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__, _kernels
from .errors import InvalidParameter, SimulationAborted

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INVALID = 2

# ---------------------------------------------------------------- parameter tables

MODEL = [("a", float, 1.0, "mean reversion a>0"), ("b", float, 5.0, "memory rate b>0"),
         ("c", float, 1.0, "noise level c>=0")]
SEEDED = [("seed", int, 0, "master seed (non-negative integer)"),
          ("threads", int, 1, "worker threads; results do not depend on it")]

PARAMS: Dict[str, list] = {
    "simulate": MODEL + SEEDED + [
        ("k", int, 2, "kernel order for --method memory"),
        ("x0", float, 1.0, "initial x"), ("y0", float, 0.0, "initial y"),
        ("dt", float, 0.01, "time step"), ("steps", int, 1000, "number of steps"),
        ("paths", int, 1, "number of paths"), ("record_every", int, 1, "keep every n-th state"),
        ("method", str, "exact", "exact | euler | memory | ou"),
    ],
    "moments": MODEL + [
        ("x0", float, 1.0, "initial x"), ("y0", float, 0.0, "initial y"),
        ("t_max", float, 12.0, "last time"), ("n_t", int, 121, "number of time points"),
    ],
    "return-time": MODEL + SEEDED + [
        ("x0", float, 1.0, "initial x>0"), ("y0", float, 0.0, "initial y"),
        ("dt", float, None, "time step (default 0.01/omega)"), ("horizon", float, 8.0, "censoring time"),
        ("paths", int, 100000, "number of paths"), ("bb", bool, False, "Brownian-bridge crossing correction"),
        ("t_lo", float, None, "fit window start (default 3/omega)"),
        ("t_hi", float, None, "fit window end (default 0.999 quantile)"),
    ],
    "sector-exit": MODEL + SEEDED + [
        ("alpha1", str, "-inf", "lower slope y/x of the sector (number or -inf)"),
        ("alpha2", str, "inf", "upper slope y/x of the sector (number or inf)"),
        ("x0", float, 1.0, "initial x>0"), ("y0", float, 0.0, "initial y"),
        ("dt", float, None, "time step (default 0.01/omega)"), ("horizon", float, 8.0, "censoring time"),
        ("paths", int, 100000, "number of paths"), ("bb", bool, False, "Brownian-bridge crossing correction"),
    ],
    "persistence": MODEL + SEEDED + [
        ("particles", int, 5000, "Fleming-Viot population"), ("dt", float, None, "time step (default 0.005/omega)"),
        ("t_burn", float, None, "burn-in (default 10/omega)"), ("t_run", float, None, "end time (default 60/omega)"),
        ("batches", int, 20, "batch count for the stderr"),
        ("exp_paths", int, 10000, "paths for the exponentiality check (0 skips it)"),
    ],
    "bridge": [
        ("rho", float, 0.2294157338705618, "turning-frame damping (a/(2 omega))"),
        ("x0", float, 1.0, "start x"), ("y0", float, 2.0, "start y"),
        ("xT", float, 0.0, "end x"), ("yT", float, 0.0, "end y"),
        ("T", float, 0.01, "duration"), ("n_u", int, 99, "interior grid points"),
    ],
    "certify": [
        ("rho", float, 0.0, "turning-frame damping rho>=0"),
        ("kind", str, "both", "elliptic | hypo | both"),
        ("fd_step", float, 1e-4, "finite-difference step"),
        ("n_r", int, 40, "radial grid points on [0.2, 5]"), ("n_theta", int, 181, "angular grid points"),
    ],
    "estimate": [
        ("input", str, None, "CSV with columns t,x (omit to simulate)"),
        ("a", float, 1.0, "simulation a"), ("b", float, 6.0, "simulation b"), ("c", float, 1.0, "simulation c"),
        ("dt", float, 5e-4, "simulation step"), ("steps", int, 200000, "simulation steps"),
        ("seed", int, 0, "simulation seed"),
        ("b_min", float, None, "b grid start"), ("b_max", float, None, "b grid end"),
        ("n_b", int, 60, "b grid size"), ("epsilon", float, None, "crossing threshold (default c_hat sqrt(dt))"),
    ],
    "epochs": [
        ("series1", str, None, "CSV of the first epoch (t,x or x)"),
        ("series2", str, None, "CSV of the second epoch (t,x or x)"),
        ("t0", float, 1965.0, "start of epoch 1"), ("t1", float, 1999.0, "epoch boundary"),
        ("t2", float, 2008.0, "end of epoch 2"),
        ("periods1", float, 3.0, "periods seen in epoch 1"), ("periods2", float, 0.25, "periods seen in epoch 2"),
    ],
    "figure": SEEDED + [("paths", int, 20000, "paths for fig2")],
}

SCHEMAS = {
    "simulate": "simulate.csv: path_id,t,x,y  (y is the memory drift minus b x for --method memory; nan for ou)",
    "moments": "moments.csv: t,mean_x,mean_y,cov_xx,cov_xy,cov_yy,J  (J for the law started at the origin)",
    "return-time": "survival.csv: t,survival,ci_lo,ci_hi; return_time.json: rate fit and bound checks",
    "sector-exit": "survival.csv: t,survival,ci_lo,ci_hi; sector_exit.json: rate fit and bound checks",
    "persistence": "persistence.json: lambda0_hat,stderr,bounds,conjecture_ratio; cloud.csv: x,y",
    "bridge": "bridge.csv: u,eta_x,eta_y,sigma_xx,sigma_xy,sigma_yy,phi_x,phi_y",
    "certify": "certify.json: per-factor minima, oracle discrepancy, verdict (exit 1 on fail)",
    "estimate": "estimate.json: a_hat,b_hat,c_hat,T_hat_ml,T_hat_eps,loglik,grid diagnostics",
    "epochs": "epochs.json: chi,chi_tilde,ratio_a,ratio_b",
    "figure": "fig1_*.csv: t,x,y; fig2.csv: t_lo,t_hi,density_bubble,density_ou; fig3.csv: case,T,u,eta_x,eta_y",
}

# ---------------------------------------------------------------- output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header: List[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_jsonable(v) for v in o.tolist()]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else repr(f)
    return o


def write_json(path: Path, obj) -> Path:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InvalidParameter(f"config file not found: {path}")
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # type: ignore
        except ModuleNotFoundError:
            import tomli as tomllib  # type: ignore
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    with open(p) as fh:
        return json.load(fh)


def resolve(sub: str, flags: dict, config: dict):
    """Merge defaults, config (top level or a section named after the subcommand) and flags."""
    section = dict(config.get(sub, {})) if isinstance(config.get(sub), dict) else {}
    top = {k: v for k, v in config.items() if not isinstance(v, dict)}
    values, sources = {}, {}
    for name, typ, default, _ in PARAMS[sub]:
        values[name], sources[name] = default, "default"
        for src_name, src in (("config", top), ("config", section)):
            key = name if name in src else name.replace("_", "-") if name.replace("_", "-") in src else None
            if key is not None:
                values[name], sources[name] = _coerce(src[key], typ, name), src_name
        if flags.get(name) is not None:
            values[name], sources[name] = flags[name], "flag"
    return values, sources


def _coerce(v, typ, name):
    if v is None:
        return None
    try:
        if typ is bool:
            return v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes")
        return typ(v)
    except (TypeError, ValueError):
        raise InvalidParameter(f"parameter {name} has the wrong type: {v!r}")


# ---------------------------------------------------------------- subcommands


def _params(v):
    from .model import ModelParams

    return ModelParams(v["a"], v["b"], v["c"])


def cmd_simulate(v, out: Path) -> dict:
    from .simulate import euler_path, exact_path, matched_ou_path, memory_path, memory_to_xy

    p = _params(v)
    m = v["method"]
    common = dict(stream=v["seed"], n_paths=v["paths"], threads=v["threads"], record_every=v["record_every"])
    if m == "exact":
        tr = exact_path(p, (v["x0"], v["y0"]), v["dt"], v["steps"], **common)
        xy = tr.states
    elif m == "euler":
        tr = euler_path(p, (v["x0"], v["y0"]), v["dt"], v["steps"], **common)
        xy = tr.states
    elif m == "memory":
        tr = memory_path(p, v["k"], v["x0"], v["dt"], v["steps"], **common)
        xy = memory_to_xy(p, tr)
    elif m == "ou":
        tr = matched_ou_path(p, v["x0"], v["dt"], v["steps"], **common)
        xy = np.concatenate([tr.states, np.full_like(tr.states, np.nan)], axis=2)
    else:
        raise InvalidParameter(f"method must be exact, euler, memory or ou (got {m!r})")
    t = tr.t

    def rows():
        for i, pid in enumerate(tr.path_ids):
            for j in range(t.size):
                yield (int(pid), t[j], xy[i, j, 0], xy[i, j, 1])

    return {"simulate.csv": write_csv(out / "simulate.csv", ["path_id", "t", "x", "y"], rows())}


def cmd_moments(v, out: Path) -> dict:
    from .gaussian import GaussianLaw, chi2_divergence, covariance_schedule, stationary_law, transition_law

    p = _params(v)
    if v["n_t"] < 2 or not v["t_max"] > 0:
        raise InvalidParameter("invariant n_t>=2 and t_max>0 violated")
    ts = np.linspace(0.0, v["t_max"], v["n_t"])
    mu = stationary_law(p) if p.c > 0 else None
    sched = covariance_schedule(p) if p.c > 0 and p.regime.value == "oscillatory" else None
    rows = []
    for t in ts:
        if t == 0:
            m, S = np.array([v["x0"], v["y0"]]), np.zeros((2, 2))
        else:
            law = transition_law(p, (v["x0"], v["y0"]), t)
            m, S = law.mean, law.cov
        j = math.nan
        if mu is not None and t > 0:
            if sched is not None:
                cov_t = sched.Sigma(t)
                j = chi2_divergence(GaussianLaw(np.zeros(2), cov_t), mu,
                                    cov_diff=-math.exp(-p.a * t) * sched.R(t))
            else:
                j = chi2_divergence(GaussianLaw(np.zeros(2), transition_law(p, (0.0, 0.0), t).cov), mu)
        rows.append((t, m[0], m[1], S[0, 0], S[0, 1], S[1, 1], j))
    return {"moments.csv": write_csv(out / "moments.csv",
                                     ["t", "mean_x", "mean_y", "cov_xx", "cov_xy", "cov_yy", "J"], rows)}


def _survival_outputs(out, stem, curve, report):
    rows = zip(curve.t_grid, curve.survival, curve.ci_lo, curve.ci_hi)
    return {"survival.csv": write_csv(out / "survival.csv", ["t", "survival", "ci_lo", "ci_hi"], rows),
            f"{stem}.json": write_json(out / f"{stem}.json", report)}


def _dt_default(v, p, k=0.01):
    from .model import require_oscillatory

    return v["dt"] if v["dt"] is not None else k / require_oscillatory(p).omega


def cmd_return_time(v, out: Path) -> dict:
    from .hitting import check_bounds, fit_rate, return_time_samples, survival_curve
    from .model import require_oscillatory

    p = _params(v)
    sp = require_oscillatory(p)
    es = return_time_samples(p, (v["x0"], v["y0"]), _dt_default(v, p), v["horizon"], v["paths"], v["seed"],
                             v["threads"], bb_correction=v["bb"])
    curve = survival_curve(es)
    window = None if v["t_lo"] is None and v["t_hi"] is None else (
        v["t_lo"] if v["t_lo"] is not None else 3.0 / sp.omega,
        v["t_hi"] if v["t_hi"] is not None else min(curve.tail_quantile, curve.horizon))
    fit = fit_rate(curve, window, omega=sp.omega)
    rep = {"fit": fit.as_dict(), "checks": check_bounds(curve, fit, p), "n_paths": es.n,
           "n_censored": es.n_censored}
    return _survival_outputs(out, "return_time", curve, rep)


def cmd_sector_exit(v, out: Path) -> dict:
    from .hitting import check_bounds, fit_rate, sector_exit_samples, survival_curve
    from .model import Slope, require_oscillatory, sector_angles

    p = _params(v)
    sp = require_oscillatory(p)
    sector = sector_angles(p, Slope.of(v["alpha1"]), Slope.of(v["alpha2"]))
    es = sector_exit_samples(p, sector, (v["x0"], v["y0"]), _dt_default(v, p), v["horizon"], v["paths"],
                             v["seed"], v["threads"], bb_correction=v["bb"])
    unc = es.tau[~es.censored]
    t_end = min(v["horizon"], 1.2 * float(unc.max())) if unc.size else v["horizon"]
    curve = survival_curve(es, np.linspace(0.0, t_end, 401))
    fit = fit_rate(curve, omega=sp.omega)
    rep = {"fit": fit.as_dict(), "checks": check_bounds(curve, fit, p, sector),
           "sector": {"theta_tilde1": sector.theta_tilde1, "theta_tilde2": sector.theta_tilde2,
                      "u_turn_time": sector.u_turn_time, "rate_bound": sector.rate_bound},
           "n_paths": es.n, "n_censored": es.n_censored}
    return _survival_outputs(out, "sector_exit", curve, rep)


def cmd_persistence(v, out: Path) -> dict:
    from .persistence import fleming_viot, qsd_exponentiality

    p = _params(v)
    fv = fleming_viot(p, v["particles"], v["dt"], v["t_burn"], v["t_run"], v["seed"], v["batches"])
    rep = fv.as_dict()
    if v["exp_paths"] > 0:
        ex = qsd_exponentiality(p, fv.cloud, fv.dt, n_paths=v["exp_paths"], seed=v["seed"])
        rep["exponentiality"] = ex.as_dict()
    return {"persistence.json": write_json(out / "persistence.json", rep),
            "cloud.csv": write_csv(out / "cloud.csv", ["x", "y"], fv.cloud)}


def cmd_bridge(v, out: Path) -> dict:
    from .bridge import bridge_law, turning_limit

    if v["n_u"] < 1:
        raise InvalidParameter("invariant n_u>=1 violated")
    u = np.linspace(0.0, 1.0, v["n_u"] + 2)[1:-1]
    z0, zT = np.array([v["x0"], v["y0"]]), np.array([v["xT"], v["yT"]])
    law = bridge_law(v["rho"], z0, zT, v["T"], u)
    phi = turning_limit(z0, zT, u)
    rows = ((u[i], law.eta[i, 0], law.eta[i, 1], law.sigma[i, 0, 0], law.sigma[i, 0, 1], law.sigma[i, 1, 1],
             phi[i, 0], phi[i, 1]) for i in range(u.size))
    return {"bridge.csv": write_csv(out / "bridge.csv", ["u", "eta_x", "eta_y", "sigma_xx", "sigma_xy", "sigma_yy",
                                                         "phi_x", "phi_y"], rows)}


def cmd_certify(v, out: Path) -> dict:
    from .certify import default_grids, elliptic_certificate, hypo_certificate, verify_certificate

    kinds = {"both": ("elliptic", "hypo"), "elliptic": ("elliptic",), "hypo": ("hypo",)}.get(v["kind"])
    if kinds is None:
        raise InvalidParameter(f"kind must be elliptic, hypo or both (got {v['kind']!r})")
    reports = {}
    for k in kinds:
        cert = elliptic_certificate(v["rho"]) if k == "elliptic" else hypo_certificate(v["rho"])
        r, th = default_grids(cert, v["n_r"], v["n_theta"])
        reports[k] = verify_certificate(cert, r, th, v["fd_step"]).as_dict()
    verdict = "pass" if all(r["verdict"] == "pass" for r in reports.values()) else "fail"
    return {"certify.json": write_json(out / "certify.json", {"verdict": verdict, "certificates": reports})}


def _read_xy_csv(path: str):
    p = Path(path)
    if not p.is_file():
        raise InvalidParameter(f"input file not found: {path}")
    with open(p) as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and not _is_number(rows[0][0]):
        head = [h.strip().lower() for h in rows[0]]
        rows = rows[1:]
    else:
        head = ["t", "x"][: len(rows[0])] if rows else []
    data = np.array([[float(c) for c in r] for r in rows]) if rows else np.empty((0, len(head)))
    if data.size == 0:
        raise InvalidParameter(f"no data rows in {path}")
    if "x" in head:
        x = data[:, head.index("x")]
        t = data[:, head.index("t")] if "t" in head else None
    else:
        x = data[:, -1]
        t = data[:, 0] if data.shape[1] > 1 else None
    return t, x


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_estimate(v, out: Path) -> dict:
    from .estimate import ObservedSeries, mle

    if v["input"]:
        t, x = _read_xy_csv(v["input"])
        if t is None:
            raise InvalidParameter("estimate input needs a t column")
        series = ObservedSeries.from_times(t, x)
    else:
        from .simulate import exact_path

        tr = exact_path(_params(v), (0.0, 0.0), v["dt"], v["steps"], stream=v["seed"])
        series = ObservedSeries.from_trajectory(tr)
    grid = None
    if v["b_min"] is not None or v["b_max"] is not None:
        if v["b_min"] is None or v["b_max"] is None:
            raise InvalidParameter("give both --b-min and --b-max")
        grid = np.linspace(v["b_min"], v["b_max"], v["n_b"])
    res = mle(series, grid, epsilon=v["epsilon"])
    return {"estimate.json": write_json(out / "estimate.json", res.as_dict())}


def cmd_epochs(v, out: Path) -> dict:
    from .estimate import epoch_compare

    if not v["series1"] or not v["series2"]:
        raise InvalidParameter("epochs needs --series1 and --series2")
    _, x1 = _read_xy_csv(v["series1"])
    _, x2 = _read_xy_csv(v["series2"])
    res = epoch_compare(x1, x2, v["t0"], v["t1"], v["t2"], v["periods1"], v["periods2"])
    return {"epochs.json": write_json(out / "epochs.json", res.as_dict())}


FIG1 = ((1.0, 5.0, 1.0), (1.0, 10.0, 5.0), (1.0, 10.0, 0.0))


def figure_data(name: str, out: Path, seed: int = 0, threads: int = 1, paths: int = 20000) -> dict:
    """CSV bundles behind the three illustrative figures."""
    from .model import ModelParams

    if name == "fig1":
        from .simulate import exact_path

        files = {}
        for a, b, c in FIG1:
            tr = exact_path(ModelParams(a, b, c), (1.0, 0.0), 0.01, 2000, stream=seed)
            fn = f"fig1_a{a:g}_b{b:g}_c{c:g}.csv"
            files[fn] = write_csv(out / fn, ["t", "x", "y"], zip(tr.t, tr.x[0], tr.y[0]))
        return files
    if name == "fig2":
        from .hitting import compare_with_matched_ou

        cmp = compare_with_matched_ou(ModelParams(1.0, 5.0, 1.0), x0=1.0, n_paths=paths, seed=seed, threads=threads)
        tb = cmp.bubble_samples.tau[~cmp.bubble_samples.censored]
        to = cmp.ou_samples.tau[~cmp.ou_samples.censored]
        edges = np.linspace(0.0, 12.0, 121)
        hb = np.histogram(tb, edges)[0] / (cmp.bubble_samples.n * np.diff(edges))
        ho = np.histogram(to, edges)[0] / (cmp.ou_samples.n * np.diff(edges))
        rows = zip(edges[:-1], edges[1:], hb, ho)
        return {"fig2.csv": write_csv(out / "fig2.csv", ["t_lo", "t_hi", "density_bubble", "density_ou"], rows)}
    if name == "fig3":
        from .bridge import bridge_law
        from .model import turning_transform

        rho = turning_transform(ModelParams(1.0, 5.0, 1.0)).rho
        z = np.array([1.0, 1.0])
        cases = {"same_point": z, "same_x": np.array([1.0, -1.0]), "same_y": np.array([-1.0, 1.0])}
        u = np.linspace(0.0, 1.0, 102)[1:-1]
        rows = []
        for label, zT in cases.items():
            for T in (0.5, 0.1):
                law = bridge_law(rho, z, zT, T, u)
                rows.append((label, T, 0.0, z[0], z[1]))
                rows.extend((label, T, u[i], law.eta[i, 0], law.eta[i, 1]) for i in range(u.size))
                rows.append((label, T, 1.0, zT[0], zT[1]))
        with open(out / "fig3.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "T", "u", "eta_x", "eta_y"])
            for r in rows:
                w.writerow([r[0]] + [_fmt(x) for x in r[1:]])
        return {"fig3.csv": out / "fig3.csv"}
    raise InvalidParameter(f"unknown figure {name!r}; choose fig1, fig2 or fig3")


COMMANDS: Dict[str, Callable] = {
    "simulate": cmd_simulate, "moments": cmd_moments, "return-time": cmd_return_time,
    "sector-exit": cmd_sector_exit, "persistence": cmd_persistence, "bridge": cmd_bridge,
    "certify": cmd_certify, "estimate": cmd_estimate, "epochs": cmd_epochs,
}

# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bubbledyn", description="Second-order speculative bubble diffusion toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON or TOML file (flags override it)")
        sp.add_argument("--out", default=".", help="output directory (created if missing)")

    for name, table in PARAMS.items():
        if name == "figure":
            continue
        sp = sub.add_parser(name, help=SCHEMAS[name].split(":")[0], description=SCHEMAS[name])
        common(sp)
        _add_table(sp, table)
    fp = sub.add_parser("figure", help="CSV data for figures", description=SCHEMAS["figure"])
    fp.add_argument("name", choices=["fig1", "fig2", "fig3"])
    common(fp)
    _add_table(fp, PARAMS["figure"])
    rp = sub.add_parser("replay", help="re-run a manifest", description="Re-run the command in a manifest file.")
    rp.add_argument("manifest")
    rp.add_argument("--out", help="output directory (default: the manifest's)")
    rp.add_argument("--check", action="store_true", help="exit 1 unless every artifact digest matches")
    return ap


def _add_table(sp, table):
    for name, typ, default, hlp in table:
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            sp.add_argument(flag, dest=name, action="store_const", const=True, default=None, help=hlp)
        else:
            sp.add_argument(flag, dest=name, type=typ, default=None, help=f"{hlp} [default: {default}]")


def _prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InvalidParameter(f"output directory not writable: {path} ({e.strerror})")
    if not os.access(out, os.W_OK):
        raise InvalidParameter(f"output directory not writable: {path}")
    return out


def execute(command: str, values: dict, sources: dict, out: Path, figure: Optional[str] = None,
            config_path: Optional[str] = None) -> dict:
    if command == "figure":
        files = figure_data(figure, out, values["seed"], values["threads"], values["paths"])
        label = figure
    else:
        files = COMMANDS[command](values, out)
        label = command.replace("-", "_")
    manifest = {
        "subcommand": command,
        "figure": figure,
        "params": values,
        "sources": sources,
        "config": config_path,
        "seed": values.get("seed"),
        "version": __version__,
        "backend": _kernels.BACKEND,
        "outputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in sorted(files.items())},
    }
    write_json(out / f"{label}_manifest.json", manifest)
    return manifest


def _replay(args) -> int:
    p = Path(args.manifest)
    if not p.is_file():
        raise InvalidParameter(f"manifest not found: {args.manifest}")
    with open(p) as fh:
        man = json.load(fh)
    command = man["subcommand"]
    if command not in PARAMS:
        raise InvalidParameter(f"manifest names an unknown subcommand {command!r}")
    out = _prepare_out(args.out) if args.out else p.parent
    values = {name: _coerce(man["params"].get(name, default), typ, name) for name, typ, default, _ in PARAMS[command]}
    new = execute(command, values, man.get("sources", {}), out, man.get("figure"), man.get("config"))
    if args.check:
        bad = [k for k, v in man["outputs"].items() if new["outputs"].get(k, {}).get("sha256") != v["sha256"]]
        if bad:
            print("replay mismatch: " + ", ".join(bad), file=sys.stderr)
            return EXIT_FAIL
        print("replay identical: " + ", ".join(sorted(man["outputs"])))
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        if args.command == "replay":
            return _replay(args)
        flags = {name: getattr(args, name) for name, *_ in PARAMS[args.command]}
        config = load_config(args.config)
        values, sources = resolve(args.command, flags, config)
        out = _prepare_out(args.out)
        man = execute(args.command, values, sources, out, getattr(args, "name", None), args.config)
    except InvalidParameter as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationAborted as e:
        print(f"aborted: {e}", file=sys.stderr)
        return EXIT_FAIL
    for name, rec in man["outputs"].items():
        print(rec["path"])
    if args.command == "certify":
        with open(man["outputs"]["certify.json"]["path"]) as fh:
            verdict = json.load(fh)["verdict"]
        print(f"verdict: {verdict}")
        return EXIT_OK if verdict == "pass" else EXIT_FAIL
    return EXIT_OK


def main() -> None:
    sys.exit(run())
