"""Experiment orchestration and serialisation of results.

Every run writes ``run_meta.json`` (resolved config, defaults, solver
statistics, verdicts) plus comma-separated tables with 17 significant
digits.  Nothing time- or host-dependent is written, so identical configs
give byte-identical outputs.
"""

import hashlib
import json
import math
import os

import numpy as np

from . import __version__, diagnostics as dg, elliptic, nonlinearity as nlm, parabolic
from .config import RunConfig
from .elliptic import EllipticConfig
from .mesh import build_interval_mesh, build_rect_mesh


def run_id(cfg: RunConfig):
    return hashlib.sha1(cfg.serialize().encode()).hexdigest()[:12]


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_num(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def build_mesh(cfg: RunConfig, refine=0):
    m = cfg["mesh"]
    k = 2 ** refine
    if m["kind"] == "interval":
        return build_interval_mesh(m["a"], m["b"], m["n"] * k)
    return build_rect_mesh(m["ax"], m["bx"], m["ay"], m["by"], m["nx"] * k, m["ny"] * k)


def build_nonlinearity(cfg: RunConfig):
    s = cfg["nonlinearity"]
    kind = s["kind"]
    if kind == "none":
        return nlm.none()
    if kind == "constant":
        return nlm.constant(s["value"])
    if kind == "capped_power":
        return nlm.capped_power(cfg["params"]["q"], s["cap"])
    return nlm.power(s["r"], s["coef"])


def solver_config(cfg: RunConfig):
    s = cfg["solver"]
    return EllipticConfig(eps_schedule=s["eps_schedule"], newton_tol=s["newton_tol"],
                          max_newton=s["max_newton"], damping=s["damping"], armijo=s["armijo"])


def _sine(mesh):
    if mesh.dim == 1:
        (a, b), = mesh.bounds
        return mesh.interpolate(lambda x: np.sin(np.pi * (x - a) / (b - a)))
    (ax, bx), (ay, by) = mesh.bounds
    return mesh.interpolate(lambda x, y: np.sin(np.pi * (x - ax) / (bx - ax))
                            * np.sin(np.pi * (y - ay) / (by - ay)))


def initial_field(cfg, mesh, params, nl, scx):
    ini = cfg["initial"]
    kind = ini["kind"]
    if kind == "sine":
        u = _sine(mesh)
    elif kind == "shell":
        u = _sine(mesh)
        if params.delta > 1:
            u = u ** params.tau
    elif kind == "steady":
        u = elliptic.solve_steady_state(mesh, nl, params, scx, tol=cfg["solver"]["steady_tol"]).u
    else:
        u = elliptic.subsolution(mesh, params, nl, scx)
    u = ini["amplitude"] * u
    if ini["energy_scale"]:
        u = dg.scale_to_nonpositive_energy(mesh, u, params, nl) * u
    return u


def _field_rows(mesh, u):
    return [tuple(mesh.nodes[i]) + (u[i],) for i in range(mesh.n_nodes)]


def _field_header(mesh):
    return ["x", "u"] if mesh.dim == 1 else ["x", "y", "u"]


def trajectory_rows(traj, nl):
    """time, L2, Linf, J, I, M, M', M'', energy-identity gap."""
    mesh = traj.mesh
    if traj.n_steps >= 2:
        led = dg.build_blowup_ledger(traj, traj.params, nl)
        J, Mpp, M, Mp = led.J, led.Mpp, led.M, led.Mp
    else:
        Mp = np.array([0.5 * mesh.integrate(u * u) for u in traj.fields])
        M = np.zeros_like(Mp)
        M[1:] = np.cumsum(0.5 * traj.dt * (Mp[1:] + Mp[:-1]))
        J = np.array([math.nan] * len(Mp))
        Mpp = J.copy()
    gap = np.concatenate([[0.0], parabolic.energy_identity_residual(traj)]) if traj.n_steps else [0.0]
    rows = []
    for k, u in enumerate(traj.fields):
        rows.append((traj.times[k], math.sqrt(2 * Mp[k]), float(np.max(np.abs(u))), J[k], -Mpp[k],
                     M[k], Mp[k], Mpp[k], gap[k]))
    return rows


TRAJ_HEADER = ["t", "l2", "linf", "J", "I", "M", "Mp", "Mpp", "energy_gap"]


def _solve_stats(r):
    return {"residual": r.residual, "iterations": r.iterations, "converged": r.converged,
            "warning": r.warning}


def _traj_meta(traj):
    led = traj.ledger
    return {"status": traj.status, "status_step": traj.status_step, "message": traj.message,
            "steps": traj.n_steps, "dt": traj.dt,
            "max_step_residual": max((row["residual"] for row in led), default=0.0),
            "newton_iterations": sum(row["newton_iterations"] for row in led),
            "picard_sweeps": [len(d) for d in traj.picard]}


class ExperimentFailure(RuntimeError):
    """A run completed but its trajectory reports solver failure."""


def run_experiment(cfg: RunConfig, out_dir=None):
    """Run the configured experiment, write its artifacts, return the metadata dict.

    Solver failures propagate as :class:`elliptic.SolverError` (or
    :class:`ExperimentFailure`), invariant breaches as
    :class:`elliptic.InvariantViolation`.
    """
    out_dir = out_dir or cfg["output"]["dir"] or os.path.join("runs", run_id(cfg))
    os.makedirs(out_dir, exist_ok=True)
    params = cfg.params
    nl = build_nonlinearity(cfg)
    scx = solver_config(cfg)
    mesh = build_mesh(cfg)
    d = cfg["diagnostics"]
    kind = cfg.experiment
    meta = {"package_version": __version__, "run_id": run_id(cfg), "experiment": kind,
            "config": cfg.to_json(), "defaults_used": cfg.defaults_used(),
            "derived": {"delta_crit": params.delta_crit, "tau": params.tau,
                        "m_crit": params.m_crit, "h": mesh.h}}
    files = []

    if kind == "stationary":
        if nl.kind == "none":
            r = elliptic.solve_singular(mesh, params.theta, params, cfg=scx) if params.theta > 0 \
                else elliptic.minimize(mesh, c0=0.0, lam=1.0, params=params, sing=0.0, b=0.0, cfg=scx)
            u, stats = r.u, _solve_stats(r)
        else:
            ss = elliptic.solve_steady_state(mesh, nl, params, scx, tol=cfg["solver"]["steady_tol"])
            u, stats = ss.u, {"monotone_steps": len(ss.steps), "last_step": ss.steps[-1], "K": ss.K}
        meta["solver"] = stats
        if params.theta > 0:
            fit = dg.conical_shell_fit(mesh, u, params)
            meta["shell_fit"] = {"c1": fit.c1, "c2": fit.c2, "exponent": fit.exponent}
        meta["max_norm"] = float(np.max(u))
        write_csv(os.path.join(out_dir, "field.csv"), _field_header(mesh), _field_rows(mesh, u))
        files.append("field.csv")

    elif kind in ("parabolic_sub", "parabolic_super"):
        u0 = initial_field(cfg, mesh, params, nl, scx)
        T, N0 = cfg["time"]["T"], cfg["time"]["N0"]
        if kind == "parabolic_sub":
            traj = parabolic.run_P(mesh, u0, nl, T, N0, params, scx) if nl.kind != "none" \
                else parabolic.run_G(mesh, u0, 0.0, T, N0, params, scx)
        else:
            traj = parabolic.run_superhomog(
                mesh, u0, nl, T, N0, params, picard_tol=d["picard_tol"], picard_max=d["picard_max"],
                cfg=scx, window=d["picard_window"],
                blow_cap=d["blow_cap_factor"] * float(np.max(np.abs(u0))))
        meta["trajectory"] = _traj_meta(traj)
        write_csv(os.path.join(out_dir, "trajectory.csv"), TRAJ_HEADER, trajectory_rows(traj, nl))
        write_csv(os.path.join(out_dir, "field.csv"), _field_header(mesh), _field_rows(mesh, traj.final))
        files += ["trajectory.csv", "field.csv"]
        if kind == "parabolic_sub" and traj.status == "completed" and params.theta > 0:
            ss = elliptic.solve_steady_state(mesh, nl, params, scx, tol=cfg["solver"]["steady_tol"])
            rep = dg.stabilization_report(traj, ss.u, tol=d["stab_rel_tol"] * float(np.max(ss.u)))
            meta["stabilization"] = {"final_error": float(rep.errors[-1]), "tol": rep.tol,
                                     "converged": rep.converged,
                                     "tail_nonincreasing": rep.tail_nonincreasing}
        if kind == "parabolic_super":
            meta["blowup"] = _blowup_meta(cfg, mesh, u0, params, nl, traj)
        if traj.status == "solver_failed":
            _write_meta(out_dir, meta, files)
            raise ExperimentFailure(f"trajectory stopped at step {traj.status_step}: {traj.message}")

    elif kind == "blowup_scan":
        base = initial_field(cfg, mesh, params, nl, scx)
        rows = []
        scans = []
        for s in cfg["initial"]["scales"]:
            u0 = s * base
            traj = parabolic.run_superhomog(
                mesh, u0, nl, cfg["time"]["T"], cfg["time"]["N0"], params, picard_tol=d["picard_tol"],
                picard_max=d["picard_max"], cfg=scx, window=d["picard_window"],
                blow_cap=d["blow_cap_factor"] * float(np.max(np.abs(u0))))
            bm = _blowup_meta(cfg, mesh, u0, params, nl, traj)
            scans.append({"scale": s, **bm})
            rows.append((s, bm["observed_blown_up"], -1 if traj.status_step is None else traj.status_step,
                         bm["T_star_estimate"] if bm["T_star_estimate"] is not None else math.nan))
        meta["scan"] = scans
        write_csv(os.path.join(out_dir, "blowup_scan.csv"), ["scale", "blown_up", "step", "T_star"], rows)
        files.append("blowup_scan.csv")

    elif kind == "sobolev_probe":
        fam = []
        for k in range(d["levels"]):
            mk = build_mesh(cfg, k)
            fam.append((mk, elliptic.solve_PS(mk, params, cfg=scx).u))
        rows, classes = dg.sobolev_probe(fam, d["m_grid"])
        meta["classification"] = {repr(m): c for m, c in classes.items()}
        write_csv(os.path.join(out_dir, "sobolev.csv"), ["m", "n", "integral", "rel_change", "class"],
                  [(r["m"], r["n"], r["integral"], r["rel_change"], r["class"]) for r in rows])
        files.append("sobolev.csv")

    elif kind == "scaling_probe":
        Ms = d["M_schedule"]
        ws = [elliptic.scaled_profile(mesh, M, params, scx) for M in Ms]
        rows = []
        for k, (M, w) in enumerate(zip(Ms, ws)):
            gap = float(np.max(np.abs(w - ws[k - 1]))) if k else math.nan
            rows.append((M, float(np.max(w)), gap, elliptic.limit_residual(mesh, w, params)))
        gaps = [r[2] for r in rows[1:]]
        meta["gap_ratios"] = [b / a for a, b in zip(gaps, gaps[1:])]
        write_csv(os.path.join(out_dir, "scaling.csv"), ["M", "max_w", "gap_to_previous", "limit_residual"], rows)
        files.append("scaling.csv")

    elif kind == "torsion_limit":
        rows = [(rho, float(np.max(elliptic.solve_torsion(mesh, rho, params, scx).u)))
                for rho in d["rho_schedule"]]
        norms = [r[1] for r in rows]
        meta["strictly_decreasing"] = all(b < a for a, b in zip(norms, norms[1:]))
        meta["final_over_first"] = norms[-1] / norms[0]
        write_csv(os.path.join(out_dir, "torsion.csv"), ["rho", "max_norm"], rows)
        files.append("torsion.csv")

    _write_meta(out_dir, meta, files)
    return meta


def _blowup_meta(cfg, mesh, u0, params, nl, traj):
    d = cfg["diagnostics"]
    led = dg.build_blowup_ledger(traj, params, nl, sigma=d["sigma"]) if traj.n_steps >= 2 else None
    try:
        v = dg.check_blowup_conditions(mesh, u0, params, nl, led, traj, theta_hat=d["theta_hat"],
                                       C_star=d["C_star"], lambda_star=d["lambda_star"])
    except dg.ConfigurationError as exc:
        return {"premises": None, "note": str(exc), "observed_blown_up": traj.status == "blown_up",
                "T_star_estimate": None, "status": traj.status, "status_step": traj.status_step}
    return {"condition_checked": v.condition_checked, "theta_star": v.theta_star,
            "premises": v.premises, "premises_hold": v.premises_hold,
            "observed_blown_up": v.observed_blown_up, "observed_time": v.observed_time,
            "T_star_estimate": v.T_star_estimate, "route": v.route,
            "concavity_holds_on_tail": v.concavity_holds_on_tail, "mpp_positive": v.mpp_positive,
            "status": traj.status, "status_step": traj.status_step, "notes": v.notes}


def _write_meta(out_dir, meta, files):
    meta["files"] = files
    with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _heat_exact(cfg, mesh, params, nl):
    """Exact solution when the run is the linear heat pair from a sine mode."""
    if not (params.theta == 0 and params.p == 2 and params.q == 2 and nl.kind == "none"
            and cfg["initial"]["kind"] in ("sine", "shell") and not cfg["initial"]["energy_scale"]):
        return None
    amp = cfg["initial"]["amplitude"]
    lengths = [b - a for a, b in mesh.bounds]
    rate = 2.0 * sum((math.pi / L) ** 2 for L in lengths)     # -Δ_2 - Δ_2 = -2Δ
    base = _sine(mesh)
    return lambda t: amp * base * math.exp(-rate * t)


def _parabolic_solution(cfg, mesh, N0):
    params, nl, scx = cfg.params, build_nonlinearity(cfg), solver_config(cfg)
    u0 = initial_field(cfg, mesh, params, nl, scx)
    T = cfg["time"]["T"]
    if nl.kind == "none":
        traj = parabolic.run_G(mesh, u0, 0.0, T, N0, params, scx)
    elif nl.kind == "subhomog":
        traj = parabolic.run_P(mesh, u0, nl, T, N0, params, scx)
    else:
        traj = parabolic.run_superhomog(mesh, u0, nl, T, N0, params, cfg=scx)
    if traj.status != "completed":
        raise ExperimentFailure(f"refinement level stopped: {traj.status} {traj.message}")
    return traj


def refinement_study(cfg: RunConfig, levels, axis="space"):
    """Errors between successive levels and observed orders.

    ``axis`` is ``space`` (mesh doubled) or ``time`` (N0 doubled, parabolic
    experiments only).  For the linear heat pair started from a sine mode the
    error is measured against the exact solution (max over time of the max
    norm); otherwise successive levels are compared on the coarse nodes.
    Returns a list of row dicts.
    """
    if levels < 2:
        raise ValueError("refinement_study: need levels >= 2")
    if axis not in ("space", "time"):
        raise ValueError("axis must be 'space' or 'time'")
    parab = cfg.experiment in ("parabolic_sub", "parabolic_super")
    if axis == "time" and not parab:
        raise ValueError("time refinement needs a parabolic experiment")
    params, nl, scx = cfg.params, build_nonlinearity(cfg), solver_config(cfg)
    sols = []
    for k in range(levels):
        mesh = build_mesh(cfg, k if axis == "space" else 0)
        N0 = cfg["time"]["N0"] * (2 ** k if axis == "time" else 1)
        if parab:
            traj = _parabolic_solution(cfg, mesh, N0)
            exact = _heat_exact(cfg, mesh, params, nl)
            if exact is not None:
                err = max(float(np.max(np.abs(u - exact(t)))) for t, u in zip(traj.times, traj.fields))
                sols.append((mesh, traj.final, err))
            else:
                sols.append((mesh, traj.final, None))
        else:
            if nl.kind == "none":
                u = elliptic.solve_singular(mesh, params.theta, params, cfg=scx).u
            else:
                u = elliptic.solve_steady_state(mesh, nl, params, scx).u
            sols.append((mesh, u, None))
    rows = []
    if sols[0][2] is not None:
        errs = [s[2] for s in sols]
        for k, e in enumerate(errs):
            order = math.log2(errs[k - 1] / e) if k and e > 0 else math.nan
            rows.append({"level": k, "h": sols[k][0].h, "error": e, "order": order})
        return rows
    gaps = []
    for (m0, u0, _), (m1, u1, _) in zip(sols, sols[1:]):
        fine = u1 if axis == "time" else _restrict(m0, m1, u1)
        gaps.append(float(np.max(np.abs(fine - u0))))
    for k, g in enumerate(gaps):
        order = math.log2(gaps[k - 1] / g) if k and g > 0 else math.nan
        rows.append({"level": k + 1, "h": sols[k + 1][0].h, "error": g, "order": order})
    return rows


def _restrict(coarse, fine, u):
    if coarse.dim == 1:
        return u[::2]
    return u.reshape(fine.shape)[::2, ::2].ravel()
