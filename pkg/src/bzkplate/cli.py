"""Command-line front end: ``bzkplate <subcommand> scenario.yaml [flags]``.

Every subcommand writes one CSV table (fixed header, listed in HEADERS)
to stdout or to ``--out``; with ``--out`` a JSON summary holding the same
numbers goes next to it with the suffix ``.json``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import Scenario, ScenarioError, load_scenario, parse_h_list
from .geometry2d import limit_energy, minkowski_condition_check
from .geometry3d import Extrusion, Zeta, droplet_check
from .planar import is_empty
from .recovery import (
    measured_sup_norm,
    GammaRow,
    RecoveryParams,
    build_void_tube,
    build_w_h,
    choose_phi,
    gamma_study,
    strain_decomposition,
)
from .rigidity import CubeRow, cube_study
from .thinfilm import FilmScene, film_energy, unrescaled_energy, unrescaled_scene

HEADERS = {
    "limit-energy": ("scenario", "bulk", "crack", "void", "total"),
    "film-energy": ("h", "t", "bulk", "void_surface", "total", "unrescaled_over_h3"),
    "recovery": ("h", "strain_identity_err", "frame_constant", "sup_norm", "sup_bound", "c0", "phi_sup",
                 "phi_grad_sup", "shadow_fraction"),
    "gamma-study": GammaRow.CSV_HEADER,
    "droplet-check": ("h", "s", "lhs", "rhs", "margin", "pass"),
    "minkowski": ("t", "quotient"),
    "cubes": CubeRow.CSV_HEADER,
    "selftest": ("check", "value", "tolerance", "pass"),
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _emit(args, sub: str, rows, summary: dict) -> None:
    header = HEADERS[sub]
    text = _csv_text(header, rows)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        doc = {"subcommand": sub, "header": list(header), "rows": [list(r) for r in rows], "summary": summary}
        out.with_suffix(".json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    else:
        sys.stdout.write(text)


def _h_list(args, scn: Scenario) -> list[float]:
    return parse_h_list(args.h) if args.h else scn.h_list


def _zeta(scn: Scenario):
    z = scn.harness.get("zeta")
    return None if z is None else Zeta.from_spec(z)


def _phi(scn: Scenario):
    return choose_phi(scn.immersion, scn.void2d, scn.norm, float(scn.harness.get("eps", 1e-3))).phi


def _needs_tube(scn: Scenario) -> bool:
    return bool(scn.immersion.segments) or not is_empty(scn.void2d)


def _t_of(scn: Scenario, h: float) -> float:
    from .recovery import t_schedule

    return t_schedule(scn.harness.get("t_schedule", "sqrt"))(h)


# --------------------------------------------------------------------------
# subcommands


def cmd_limit_energy(args, scn: Scenario):
    e = limit_energy(scn.immersion, scn.void2d, scn.material.linearized(), scn.norm)
    rows = [(scn.id, e.bulk, e.crack_surface, e.void_surface, e.total)]
    return rows, {"scenario": scn.id, **e.as_dict()}


def cmd_film_energy(args, scn: Scenario):
    Q3 = scn.material.linearized()
    phi = _phi(scn)
    rows = []
    for h in _h_list(args, scn):
        t = _t_of(scn, h)
        w = build_w_h(scn.immersion, RecoveryParams(phi=phi), h, Q3)
        E = build_void_tube(scn.immersion, scn.void2d, t, phi, h, scn.norm).E if _needs_tube(scn) else None
        sc = FilmScene(scn.immersion.omega, h, w, E, scn.material, scn.norm)
        en = film_energy(sc, tol=args.tol)
        v, A = unrescaled_scene(sc)
        J = unrescaled_energy(v, A, h, scn.material, scn.norm, scn.immersion.omega, tol=args.tol)
        rows.append((h, t, en.bulk, en.void_surface, en.total, J / h**3))
    return rows, {"scenario": scn.id}


def cmd_recovery(args, scn: Scenario):
    Q3 = scn.material.linearized()
    phi = _phi(scn)
    r = scn.immersion
    rng = np.random.default_rng(args.seed)
    lo, hi = r.omega.bbox()
    rows = []
    for h in _h_list(args, scn):
        w = build_w_h(r, RecoveryParams(phi=phi), h, Q3)
        x = rng.uniform([lo[0], lo[1], 0.0], [hi[0], hi[1], 1.0], (1000, 3))
        x = x[r.omega.contains_open(x[:, :2])]
        shadow = w.in_crack_shadow(x)
        xs = x[~shadow]
        sd = strain_decomposition(r, phi, w.d, xs, h)
        F = w.fd_gradient(xs, 1e-6)
        F[:, :, 2] /= h
        lhs = np.einsum("nji,njk->nik", sd.R, F)
        rhs = np.eye(3) + h * sd.s[:, None, None] * sd.G_h
        err = float(np.abs(lhs - rhs).max()) if len(xs) else 0.0
        ps, pg = phi.sup_bounds(r.omega)
        rows.append((h, err, w.frame_deviation_constant(seed=args.seed), measured_sup_norm(w, r.omega, seed=args.seed),
                     r.sup_norm() + w.c0 * h, w.c0, ps, pg, float(shadow.mean()) if len(shadow) else 0.0))
    return rows, {"scenario": scn.id}


def cmd_gamma_study(args, scn: Scenario):
    st = gamma_study(scn.immersion, scn.void2d, scn.material, scn.norm, _h_list(args, scn),
                     schedule=scn.harness.get("t_schedule", "sqrt"), zeta=_zeta(scn),
                     eps=float(scn.harness.get("eps", 1e-3)), s_list=scn.harness.get("s_list", (0.1, 0.25, 0.5)),
                     tol=args.tol)
    rows = [r.csv_row() for r in st.rows]
    summary = {"scenario": scn.id, "limit": st.limit.as_dict(),
               "droplet_passed": all(d.passed for d in st.droplets) if st.droplets else None}
    return rows, summary


def _void3d(scn: Scenario, h: float):
    A = scn.void3d(h)
    if A is None and not is_empty(scn.void2d):
        A = Extrusion(scn.void2d, 0.0, h)
    return A


def cmd_droplet_check(args, scn: Scenario):
    zeta = _zeta(scn) or Zeta.linear(10.0)
    method = scn.harness.get("droplet_method", "analytic")
    s_list = scn.harness.get("s_list", (0.1, 0.25, 0.5))
    rows, passed = [], True
    for h in _h_list(args, scn):
        rep = droplet_check(_void3d(scn, h), h, s_list, scn.norm, zeta, scn.immersion.omega, method=method,
                            grid=args.grid)
        rows += rep.csv_rows()
        passed &= rep.passed
    return rows, {"scenario": scn.id, "zeta": zeta.name, "passed": passed}


def cmd_minkowski(args, scn: Scenario):
    t_list = scn.harness.get("minkowski_t", [0.1 * 2.0**-k for k in range(8)])
    rep = minkowski_condition_check(scn.immersion, scn.void2d, scn.norm, [float(t) for t in t_list],
                                    tolerance=float(scn.harness.get("minkowski_tol", 0.01)))
    rows = list(zip(rep.t_list, rep.quotients))
    return rows, {"scenario": scn.id, "status": rep.status, "holds": rep.holds, "limit_surface": rep.lhs,
                  "extrapolated": rep.extrapolated}


def cmd_cubes(args, scn: Scenario):
    Q3 = scn.material.linearized()
    phi = _phi(scn)
    s = float(scn.harness.get("cube_s", 0.25))
    rows_ = cube_study(lambda h: build_w_h(scn.immersion, RecoveryParams(phi=phi), h, Q3),
                       lambda h: _void3d(scn, h), scn.immersion.omega, _h_list(args, scn), s, scn.norm)
    rows = [r.csv_row() for r in rows_]
    return rows, {"scenario": scn.id, "bad_h_ratio": max(r.bad_h for r in rows_) / max(min(r.bad_h for r in rows_), 1e-300)}


COMMANDS = {
    "limit-energy": cmd_limit_energy,
    "film-energy": cmd_film_energy,
    "recovery": cmd_recovery,
    "gamma-study": cmd_gamma_study,
    "droplet-check": cmd_droplet_check,
    "minkowski": cmd_minkowski,
    "cubes": cmd_cubes,
}


# --------------------------------------------------------------------------
# selftest


def _selftest_checks(seed: int):
    """(name, value, tolerance, ok) for a fast oracle suite."""
    from .forms import QuadraticForm3, q2_relax, q2_relax_bruteforce
    from .geometry2d import FlatIsometry
    from .geometry3d import Ball, surface_energy, tube_volume
    from .norms import Norm3, psi0, psi0_scan
    from .planar import Disk, Polygon
    from .forms import ElasticDensity
    from .thinfilm import Deformation3

    rng = np.random.default_rng(seed)
    out = []
    # Q2 closed form against a grid search
    worst = 0.0
    for _ in range(5):
        B = rng.normal(size=(6, 6))
        Q = QuadraticForm3(B @ B.T + 0.1 * np.eye(6))
        X = rng.normal(size=(2, 2))
        X = 0.5 * (X + X.T)
        worst = max(worst, abs(q2_relax(Q, X).value - q2_relax_bruteforce(Q, X, 10.0, 1e-7)))
    out.append(("q2_closed_form_vs_grid", worst, 1e-5, worst <= 1e-5))
    # psi0 ternary search against a dense scan
    psi = Norm3.ellipsoidal([[2.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.5, 0.0, 1.5]])
    worst = 0.0
    for _ in range(10):
        xp = rng.normal(size=2)
        worst = max(worst, abs(psi0(psi, xp)[0] - psi0_scan(psi, xp)[0]))
    out.append(("psi0_vs_scan", worst, 1e-8, worst <= 1e-8))
    # limit energy of the unit cylinder
    om = Polygon.rectangle((0, 0), (1, 1))
    e = limit_energy(FlatIsometry.cylinder(om), None, QuadraticForm3.isotropic(1, 1), Norm3.euclidean()).total
    out.append(("cylinder_limit_energy", abs(e - 1 / 9), 1e-10, abs(e - 1 / 9) <= 1e-10))
    # void limit energy
    e = limit_energy(FlatIsometry.identity(om), Disk((0.5, 0.5), 0.25), QuadraticForm3.isotropic(1, 1),
                     Norm3.euclidean()).total
    out.append(("disk_void_limit_energy", abs(e - math.pi / 2), 1e-9, abs(e - math.pi / 2) <= 1e-9))
    # sphere area and clipped ball tube volume
    a = surface_energy(Ball((0.5, 0.5, 0.5), 0.2), Norm3.euclidean())
    err = abs(a - 4 * math.pi * 0.04) / (4 * math.pi * 0.04)
    out.append(("sphere_area", err, 1e-8, err <= 1e-8))
    h = 0.125
    v = tube_volume(Ball((0.5, 0.5, h / 2), h), 0.5 * h, Norm3.euclidean(), None)
    ex = 4 * math.pi / 3 * ((1.5 * h) ** 3 - h**3)
    out.append(("ball_tube_volume", abs(v - ex) / ex, 1e-12, abs(v - ex) <= 1e-12 * ex))
    # rescaled film energy of a rest plate with a ball void
    W = ElasticDensity.isotropic(1, 1)
    sc = FilmScene(om, h, Deformation3.rest(h), Ball((0.5, 0.5, 0.5), 0.25), W, Norm3.euclidean())
    en = film_energy(sc)
    v, A = unrescaled_scene(sc)
    J = unrescaled_energy(v, A, h, W, Norm3.euclidean(), om)
    rel = abs(J / h**3 - en.total) / en.total
    out.append(("rescaling_identity", rel, 1e-6, rel <= 1e-6))
    return out


def cmd_selftest(args):
    checks = _selftest_checks(args.seed)
    rows = [(n, v, t, int(ok)) for n, v, t, ok in checks]
    return rows, {"passed": all(ok for *_, ok in checks), "checks": len(checks)}


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bzkplate", description="Plate energies, recovery sequences and diagnostics.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["selftest"]:
        p = sub.add_parser(name, help=f"CSV columns: {','.join(HEADERS[name])}")
        if name != "selftest":
            p.add_argument("scenario", help="scenario YAML file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--grid", type=int, default=192, help="voxel resolution for tube volumes")
        p.add_argument("--out", default=None, help="CSV path; a JSON summary is written beside it")
        p.add_argument("--tol", type=float, default=1e-5, help="relative volume-quadrature tolerance")
        p.add_argument("--h", default=None, help="comma-separated heights, e.g. 1/8,1/16")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            rows, summary = cmd_selftest(args)
            _emit(args, "selftest", rows, summary)
            if not args.out:
                width = max(len(r[0]) for r in rows)
                for r in rows:
                    print(f"{'PASS' if r[3] else 'FAIL'}  {r[0]:<{width}}  {r[1]:.3e} (tol {r[2]:.0e})", file=sys.stderr)
            return 0 if summary["passed"] else 1
        scn = load_scenario(args.scenario)
        rows, summary = COMMANDS[args.command](args, scn)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        name = getattr(args, "scenario", "")
        print(f"error in {name} ({args.command}): {exc}", file=sys.stderr)
        return 1
    _emit(args, args.command, rows, summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
