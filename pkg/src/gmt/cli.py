"""Command-line entry point: run a pipeline, write a JSON report, optionally CSV/SVG.

Exit codes: 0 ran, 1 hypothesis violated, 2 resolution error, 3 invalid input.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field

import click
import numpy as np

from . import __version__
from .errors import GMTError, HypothesisViolated, InvalidInput, ResolutionError
from .scene import Ball, BoundarySample, Scene, make_scene

COMMANDS = ("check", "visibility", "porosity", "cone-verify", "build-lipschitz", "tangents")
CHECK_KINDS = ("two-ball", "corkscrew", "regularity")


# --------------------------------------------------------------------------
# config and report


@dataclass
class RunConfig:
    command: str
    scene: str | None = None
    params: dict = field(default_factory=dict)
    ledger: dict = field(default_factory=dict)  # C, M, delta, eta, upsilon
    resolutions: dict = field(default_factory=dict)  # grid_n, step, resolution
    seed: int = 0
    outputs: dict = field(default_factory=dict)  # out, svg, csv
    scene_data: dict | None = None

    def validate(self):
        bad = []
        if self.command not in COMMANDS:
            bad.append(f"command {self.command!r} not in {COMMANDS}")
        if self.command == "check" and self.params.get("kind") not in CHECK_KINDS:
            bad.append(f"check kind must be one of {CHECK_KINDS}")
        if self.command != "porosity" and self.scene is None and self.scene_data is None:
            bad.append("a scene is required")
        L = self.ledger
        if "C" in L and not L["C"] >= 2:
            bad.append(f"C = {L['C']} must be >= 2")
        if L.get("M") is not None and not L["M"] > 0:
            bad.append(f"M = {L['M']} must be positive")
        if L.get("upsilon") is not None and not 0 < L["upsilon"] < 0.25:
            bad.append(f"upsilon = {L['upsilon']} must lie in (0, 1/4)")
        if L.get("eta") is not None:
            ups = L.get("upsilon") or 0.24
            if not 0 < 4 * L.get("C", 3.0) * L["eta"] < ups:
                bad.append(f"eta = {L['eta']} violates 0 < 4C eta < upsilon")
        if L.get("delta") is not None and not 0 < L["delta"] < 0.2:
            bad.append(f"delta = {L['delta']} must lie in (0, 0.2)")
        for k in ("grid_n",):
            v = self.resolutions.get(k)
            if v is not None and (int(v) != v or v < 8):
                bad.append(f"{k} = {v} must be an integer >= 8")
        for k in ("step", "resolution"):
            v = self.resolutions.get(k)
            if v is not None and not v > 0:
                bad.append(f"{k} = {v} must be positive")
        if bad:
            raise InvalidInput("invalid config: " + "; ".join(bad))
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidInput(f"unknown config fields {sorted(extra)}")
        return cls(**d)


@dataclass
class RunReport:
    version: str
    config: dict
    status: dict
    results: dict
    timings: dict

    def to_json(self):
        return json.dumps(clean(asdict(self)), sort_keys=True, indent=1, allow_nan=False)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"report is not valid JSON: {exc}") from None
        try:
            return cls(d["version"], d["config"], d["status"], d["results"], d["timings"])
        except (KeyError, TypeError):
            raise InvalidInput("report lacks version/config/status/results/timings") from None

    @property
    def exit_code(self):
        return int(self.status.get("code", 0))


def clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, np.generic):
        return clean(obj.item())
    if isinstance(obj, float):
        if math.isfinite(obj):
            return obj
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "to_dict"):
        return clean(obj.to_dict())
    return obj


def split_timings(obj, path=""):
    """Remove every 'timings' entry (recursively); returns them keyed by path."""
    found = {}
    if isinstance(obj, dict):
        if "timings" in obj:
            found[path or "."] = obj.pop("timings")
        for k, v in obj.items():
            found.update(split_timings(v, f"{path}/{k}"))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            found.update(split_timings(v, f"{path}/{i}"))
    return found


# --------------------------------------------------------------------------
# inputs


def parse_vector(text, n=None, name="vector"):
    if isinstance(text, (list, tuple, np.ndarray)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",")]
        except ValueError:
            raise InvalidInput(f"{name} must be comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) not in (n if isinstance(n, tuple) else (n,)):
        raise InvalidInput(f"{name} needs {n} components, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise InvalidInput(f"{name} has non-finite entries")
    return vals


def parse_ball(text):
    v = parse_vector(text, (3, 4), "ball")
    if v[-1] <= 0:
        raise InvalidInput("ball radius must be positive")
    return Ball(np.array(v[:-1]), v[-1])


def _coerce(v):
    for f in (int, float):
        try:
            return f(v)
        except ValueError:
            pass
    return v


def scene_reference(spec):
    """'catalog:name[:k=v,...]' or a JSON path -> embeddable scene data."""
    if spec.startswith("catalog:"):
        parts = spec.split(":", 2)
        params = {}
        if len(parts) == 3 and parts[2]:
            for kv in parts[2].split(","):
                if "=" not in kv:
                    raise InvalidInput(f"catalog parameter {kv!r} must be key=value")
                k, v = kv.split("=", 1)
                params[k] = _coerce(v)
        return {"catalog": {"name": parts[1], "params": params}}
    try:
        with open(spec) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InvalidInput(f"cannot read scene {spec!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"scene {spec!r} is not valid JSON: {exc}") from None
    if d.get("catalog"):
        return {"catalog": d["catalog"]}
    return d


def load_scene(config: RunConfig) -> Scene:
    data = config.scene_data
    if data is None:
        data = scene_reference(config.scene)
        config.scene_data = data
    try:
        return Scene.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"malformed scene description: {exc}") from None


# --------------------------------------------------------------------------
# pipelines; each returns (results, svg canvas or None, csv text or None)


def _run_check(cfg, scene):
    from .conditions import check_corkscrew, check_two_ball, estimate_regularity, sample_pairs

    p = cfg.params
    C = cfg.ledger.get("C", 4.0)
    if p.get("xi") is not None:
        if p.get("r") is None:
            raise InvalidInput("--xi needs --r")
        pairs = [(np.array(parse_vector(p["xi"], scene.dimension, "xi")), float(p["r"]))]
    else:
        pairs = sample_pairs(scene, int(p.get("samples", 64)))
    kind = p["kind"]
    res = cfg.resolutions.get("resolution")
    if kind == "regularity":
        v = estimate_regularity(scene, pairs, res)
        out = {"kind": kind, "holds": v.holds, "verdict": v.to_dict(), "pairs": len(pairs),
               "resolution": res if res is not None else "r/200"}
        return out, None, None
    verdicts = []
    for xi, r in pairs:
        if kind == "two-ball":
            v = check_two_ball(scene, xi, r, C)
        else:
            labels = [p["label"]] if p.get("label") else list(scene.labels)
            v = None
            for lab in labels:
                v = check_corkscrew(scene, lab, xi, r, C, side=p.get("side", "interior"))
                if not v.holds:
                    break
        verdicts.append(v)
    holds = all(v.holds for v in verdicts)
    out = {"kind": kind, "C": C, "holds": holds, "pairs": len(pairs),
           "constant": max(v.constant for v in verdicts),
           "verdicts": [v.to_dict() for v in verdicts],
           "resolution": {"lattice_spacing": "r/(4C)"}}
    return out, None, None


def _run_visibility(cfg, scene):
    from .visibility import build_grid, fubini_check, visible_table

    p = cfg.params
    D = scene.dimension
    theta0 = np.array(parse_vector(p["theta0"], D, "theta0")) if p.get("theta0") else -np.eye(D)[-1]
    theta0 = theta0 / np.linalg.norm(theta0)
    region = parse_ball(p["ball"]) if p.get("ball") else scene.window
    res = cfg.resolutions.get("resolution") or region.radius / 200
    grid = build_grid(theta0, float(p.get("delta", 0.1)), int(cfg.resolutions.get("grid_n", 64)))
    S = scene.sample_boundary(region, res)
    if len(S) == 0:
        raise InvalidInput("no boundary samples in the region")
    tab = visible_table(scene, S, grid, gaps=bool(p.get("gaps")))
    fub = fubini_check(tab)
    vis = tab.visible_weight()
    out = {"table": tab.to_dict(), "fubini": fub, "samples": len(S), "nodes": len(grid),
           "resolution": {"boundary": res, "grid_n": grid.n, "spacing": grid.spacing},
           "visible_weight": vis.tolist()}
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["index", *[f"x{i}" for i in range(D)], "weight", "visible_weight"])
    for j in range(len(S)):
        w.writerow([j, *S.points[j].tolist(), S.weights[j], vis[j]])
    cv = None
    if D == 2:
        from .svg import Canvas, draw_scene

        cv = draw_scene(Canvas(scene.window), scene)
        for j in range(len(S)):
            cv.dot(f"sample-{j}", f"results.table.boundary.points[{j}]", S.points[j], "sample", 1.0)
    return out, cv, buf.getvalue()


def _run_porosity(cfg, scene):
    from .porosity import find_dense_cap
    from .visibility import VisibilityTable

    p = cfg.params
    try:
        with open(p["table"]) as fh:
            raw = json.load(fh)
    except (OSError, KeyError) as exc:
        raise InvalidInput(f"cannot read visibility table: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"visibility table is not valid JSON: {exc}") from None
    raw = raw.get("results", {}).get("table", raw)
    tab = VisibilityTable.from_dict(raw)
    vis = tab.visible_weight()
    j = int(p["sample"]) if p.get("sample") is not None else int(np.argmax(vis))
    if not 0 <= j < len(tab.boundary):
        raise InvalidInput(f"sample index {j} out of range")
    A = tab.bits[:, j]
    if not A.any():
        raise HypothesisViolated(f"sample {j} sees no direction of the cap", stage="porosity")
    grid = tab.grid
    kappa = p.get("kappa")
    kappa = float(grid.weights[A].sum() / grid.cap_measure) * (1 - 1e-12) if kappa is None else kappa
    res = find_dense_cap(A, grid, float(p.get("eta", 0.05)), kappa,
                         check_resolution=not p.get("no_resolution_check"))
    out = {"sample": j, "xi": tab.boundary.points[j].tolist(), "porosity": res.to_dict(),
           "resolution": {"grid_n": grid.n, "spacing": grid.spacing,
                          "boundary": tab.boundary.resolution}}
    return out, None, res.ledger.to_csv()


def _run_cone(cfg, scene):
    from .cones import Cone, verify_cone

    p = cfg.params
    D = scene.dimension
    apex = np.array(parse_vector(p["apex"], D, "apex"))
    axis = np.array(parse_vector(p["axis"], D, "axis"))
    n = np.linalg.norm(axis)
    if n == 0:
        raise InvalidInput("axis must be nonzero")
    c = Cone(apex, axis / n, float(p["alpha"]), float(p["t"]))
    step = cfg.resolutions.get("step") or c.alpha * c.height / 8
    C = cfg.ledger.get("C", 4.0)
    certs = [verify_cone(scene, p.get("label"), c, step, C)]
    if p.get("two_sided"):
        certs.append(verify_cone(scene, p.get("label"), c.flipped(), step, C))
    out = {"contained": all(x.contained for x in certs),
           "certificates": [x.to_dict() for x in certs], "resolution": {"step": step}}
    cv = None
    if D == 2:
        from .svg import Canvas, draw_scene

        cv = draw_scene(Canvas(scene.window), scene)
        for k, x in enumerate(certs):
            cv.cone(f"cone-{k}", f"results.certificates[{k}].cone", x.cone.apex, x.cone.axis,
                    x.cone.alpha, x.cone.height)
            if x.witness is not None:
                cv.dot(f"zeta-{k}", f"results.certificates[{k}].witness.zeta", x.witness["zeta"])
    return out, cv, None


def _lipschitz_svg(scene, rep):
    from .svg import Canvas, draw_scene

    cv = draw_scene(Canvas(scene.window), scene)
    path = "results"
    while "sub" in rep:
        rep, path = rep["sub"], path + ".sub"
    spec, norm = rep["_spec"], rep["_norm"]
    h = spec.hull
    cv.circle("hull-1", f"{path}.domain.hull.c1", norm.backward(h.c1)[0], h.r1, "hull")
    cv.circle("hull-2", f"{path}.domain.hull.c2", norm.backward(h.c2)[0], h.r2, "hull")
    axis = spec.axis @ norm.R
    ap = norm.backward(spec.apexes) if len(spec.apexes) else spec.apexes
    for k, a in enumerate(ap):
        cv.cone(f"cone-{k}", f"{path}.domain.apexes[{k}]", a, axis, spec.alpha, spec.height)
    E = norm.backward(spec.E.points) if len(spec.E) else spec.E.points
    for k, e in enumerate(E):
        cv.dot(f"E-{k}", f"{path}.domain.E[{k}]", e, "point", 1.2)
    return cv


def _run_build(cfg, scene):
    from .builder import public_report, run_proposition

    p = cfg.params
    B = parse_ball(p["ball"])
    L = cfg.ledger
    over = {k: L[k] for k in ("delta", "eta", "upsilon") if L.get(k) is not None}
    rep = run_proposition(scene, B, L.get("C", 3.0), L.get("M"), p.get("label"),
                          cfg.resolutions.get("grid_n"), cfg.resolutions.get("resolution"),
                          cfg.seed, not p.get("no_stability"), over)
    cv = _lipschitz_svg(scene, rep) if scene.dimension == 2 else None
    out = public_report(rep)
    E_pts = rep
    while "sub" in E_pts:
        E_pts = E_pts["sub"]
    spec, norm = E_pts["_spec"], E_pts["_norm"]
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["kind", *[f"x{i}" for i in range(scene.dimension)]])
    for a in (norm.backward(spec.apexes) if len(spec.apexes) else []):
        w.writerow(["apex", *a.tolist()])
    return out, cv, buf.getvalue()


def _run_tangents(cfg, scene):
    from .tangents import THRESHOLD, detect

    p = cfg.params
    B = parse_ball(p["ball"])
    R = detect(scene, B, cfg.ledger.get("C", 3.0), cfg.resolutions.get("grid_n"),
               cfg.resolutions.get("resolution"), float(p.get("threshold", THRESHOLD)))
    out = R.to_dict()
    out["resolution"] = {"boundary": R.params["resolution"], "grid_n": R.params["grid_n"],
                         "radii": R.params["radii"]}
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["index", *[f"x{i}" for i in range(scene.dimension)], "weight", "classified"])
    for rep in R.reports:
        w.writerow([rep.index, *np.asarray(rep.xi).tolist(), rep.extra.get("weight"),
                    rep.classified])
    cv = None
    if scene.dimension == 2:
        from .svg import Canvas, draw_scene

        cv = draw_scene(Canvas(scene.window), scene)
        shown = False
        for rep in R.reports:
            if rep.classified != "tangent-candidate":
                continue
            cv.dot(f"flagged-{rep.index}", f"results.reports[{rep.index}]", rep.xi, "point", 1.2)
            if not shown and rep.cone is not None:
                c = rep.cone
                ax = np.asarray(c["axis"])
                cv.cone("cone-pair-0", f"results.reports[{rep.index}].cone", rep.xi, ax,
                        c["alpha"], c["height"])
                cv.cone("cone-pair-1", f"results.reports[{rep.index}].cone", rep.xi, -ax,
                        c["alpha"], c["height"])
                shown = True
    return out, cv, buf.getvalue()


PIPELINES = {"check": _run_check, "visibility": _run_visibility, "porosity": _run_porosity,
             "cone-verify": _run_cone, "build-lipschitz": _run_build, "tangents": _run_tangents}


def run(config: RunConfig, write=True) -> RunReport:
    """Dispatch, collect results and failures, write outputs once at the end."""
    t0 = time.perf_counter()
    status = {"code": 0, "error": None, "stage": None, "kind": None}
    results, cv, table = {}, None, None
    try:
        config.validate()
        scene = load_scene(config) if config.command != "porosity" else None
        results, cv, table = PIPELINES[config.command](config, scene)
        if scene is not None:
            # Sigma is clipped to the window; features on its rim may be artefacts
            results["window"] = {"center": scene.window.center, "radius": scene.window.radius,
                                 "clipped": True}
        if config.command == "check" and not results.get("holds", True):
            status.update(code=HypothesisViolated.exit_code, kind="HypothesisViolated",
                          stage=config.params.get("kind"),
                          error="the checked condition fails on at least one sample")
    except GMTError as exc:
        status.update(code=exc.exit_code, error=str(exc), kind=type(exc).__name__,
                      stage=getattr(exc, "stage", None))
        wit = getattr(exc, "witness", None)
        if wit is not None:
            results = {"witness": wit}
    results = clean(results)
    timings = split_timings(results)
    timings["wall"] = round(time.perf_counter() - t0, 3)
    report = RunReport(__version__, clean(config.to_dict()), status, results, timings)
    if write:
        outs = config.outputs
        if outs.get("out"):
            report.write(outs["out"])
        if outs.get("svg") and cv is not None:
            report.results.setdefault("svg_ids", dict(cv.ids))
            cv.write(outs["svg"])
            if outs.get("out"):
                report.write(outs["out"])
        if outs.get("csv") and table is not None:
            with open(outs["csv"], "w") as fh:
                fh.write(table)
    return report


def certificate_view(results):
    """Results without volatile entries (used to compare runs)."""
    return json.loads(json.dumps(clean(results), sort_keys=True))


def diff(a, b, path=""):
    """Paths where two JSON trees differ."""
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append(f"{path}/{k}")
            else:
                out += diff(a[k], b[k], f"{path}/{k}")
        return out
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return [f"{path} (length {len(a)} != {len(b)})"]
        out = []
        for i, (x, y) in enumerate(zip(a, b)):
            out += diff(x, y, f"{path}/{i}")
        return out
    return [] if a == b else [path or "/"]


def replay(path, overrides=None, write_to=None) -> tuple[RunReport, dict]:
    """Re-run the echoed config; returns the new report and a comparison summary."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInput(f"cannot read report: {exc}") from None
    old = RunReport.from_json(text)
    major = str(old.version).split(".")[0]
    if major != __version__.split(".")[0]:
        raise InvalidInput(f"report version {old.version} incompatible with {__version__}")
    cfg = RunConfig.from_dict(dict(old.config))
    cfg.outputs = {"out": write_to} if write_to else {}
    for k, v in (overrides or {}).items():
        cfg.resolutions[k] = v
    new = run(cfg, write=bool(write_to))
    old_r = dict(old.results)
    old_r.pop("svg_ids", None)
    new_r = dict(new.results)
    new_r.pop("svg_ids", None)
    paths = diff(certificate_view(old_r), certificate_view(new_r))
    if old.status.get("code") != new.status.get("code"):
        paths.insert(0, "/status/code")
    summary = {"identical": not paths, "differences": paths[:200], "count": len(paths),
               "overrides": overrides or {}}
    return new, summary


# --------------------------------------------------------------------------
# click wiring


def _finish(cfg):
    rep = run(cfg)
    st = rep.status
    tag = "ok" if st["code"] == 0 else f"{st['kind']} ({st['stage']}): {st['error']}"
    click.echo(f"gmt {cfg.command}: {tag}", err=st["code"] != 0)
    if not cfg.outputs.get("out"):
        click.echo(rep.to_json())
    sys.exit(rep.exit_code)


def _out_opts(f):
    f = click.option("--csv", "csv_path", default=None, help="CSV table output")(f)
    f = click.option("--svg", default=None, help="SVG figure (planar scenes)")(f)
    f = click.option("--out", default=None, help="JSON report path (stdout if omitted)")(f)
    return f


def _outs(out, svg, csv_path):
    return {k: v for k, v in (("out", out), ("svg", svg), ("csv", csv_path)) if v}


@click.group()
@click.version_option(__version__, prog_name="gmt")
def main():
    """Geometric measure-theory toolkit on discretized scenes."""


@main.command()
@click.argument("kind", type=click.Choice(CHECK_KINDS))
@click.option("--scene", required=True, help="scene JSON or catalog:name[:k=v,...]")
@click.option("--C", "C", type=float, default=4.0, show_default=True)
@click.option("--samples", type=int, default=64, show_default=True)
@click.option("--xi", default=None, help="single boundary point x,y[,z]")
@click.option("--r", type=float, default=None)
@click.option("--label", default=None)
@click.option("--side", type=click.Choice(["interior", "exterior"]), default="interior")
@click.option("--resolution", type=float, default=None)
@_out_opts
def check(kind, scene, C, samples, xi, r, label, side, resolution, out, svg, csv_path):
    """Two-ball, corkscrew or Ahlfors-regularity checks."""
    _finish(RunConfig("check", scene, {"kind": kind, "samples": samples, "xi": xi, "r": r,
                                        "label": label, "side": side},
                      {"C": C}, {"resolution": resolution}, outputs=_outs(out, svg, csv_path)))


@main.command()
@click.option("--scene", required=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--n", "n", type=int, default=64, show_default=True)
@click.option("--theta0", default=None)
@click.option("--ball", default=None, help="sampling region cx,cy,r")
@click.option("--resolution", type=float, default=None)
@click.option("--gaps/--no-gaps", default=False)
@_out_opts
def visibility(scene, delta, n, theta0, ball, resolution, gaps, out, svg, csv_path):
    """Visibility table of boundary samples against a direction cap."""
    _finish(RunConfig("visibility", scene, {"delta": delta, "theta0": theta0, "ball": ball,
                                             "gaps": gaps},
                      {}, {"grid_n": n, "resolution": resolution},
                      outputs=_outs(out, svg, csv_path)))


@main.command()
@click.option("--table", required=True, help="visibility table JSON (or report)")
@click.option("--eta", type=float, default=0.05, show_default=True)
@click.option("--kappa", type=float, default=None)
@click.option("--sample", type=int, default=None, help="boundary sample index")
@click.option("--no-resolution-check", is_flag=True, default=False)
@_out_opts
def porosity(table, eta, kappa, sample, no_resolution_check, out, svg, csv_path):
    """Dyadic stopping-time search for a dense cap."""
    _finish(RunConfig("porosity", None, {"table": table, "eta": eta, "kappa": kappa,
                                          "sample": sample,
                                          "no_resolution_check": no_resolution_check},
                      outputs=_outs(out, svg, csv_path)))


@main.command("cone-verify")
@click.option("--scene", required=True)
@click.option("--apex", required=True)
@click.option("--axis", required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--t", "t", type=float, required=True)
@click.option("--step", type=float, default=None)
@click.option("--label", default=None)
@click.option("--C", "C", type=float, default=4.0, show_default=True)
@click.option("--two-sided", is_flag=True, default=False)
@_out_opts
def cone_verify(scene, apex, axis, alpha, t, step, label, C, two_sided, out, svg, csv_path):
    """Ray-cast a truncated cone against the boundary."""
    _finish(RunConfig("cone-verify", scene, {"apex": apex, "axis": axis, "alpha": alpha, "t": t,
                                              "label": label, "two_sided": two_sided},
                      {"C": C}, {"step": step}, outputs=_outs(out, svg, csv_path)))


@main.command("build-lipschitz")
@click.option("--scene", required=True)
@click.option("--ball", required=True, help="cx,cy,r on the boundary")
@click.option("--C", "C", type=float, default=3.0, show_default=True)
@click.option("--M", "M", type=float, default=None)
@click.option("--label", default=None)
@click.option("--delta", type=float, default=None)
@click.option("--eta", type=float, default=None)
@click.option("--upsilon", type=float, default=None)
@click.option("--grid-n", type=int, default=None)
@click.option("--resolution", type=float, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--no-stability", is_flag=True, default=False)
@_out_opts
def build_lipschitz(scene, ball, C, M, label, delta, eta, upsilon, grid_n, resolution, seed,
                    no_stability, out, svg, csv_path):
    """Build a Lipschitz subdomain with large boundary overlap."""
    _finish(RunConfig("build-lipschitz", scene, {"ball": ball, "label": label,
                                                  "no_stability": no_stability},
                      {"C": C, "M": M, "delta": delta, "eta": eta, "upsilon": upsilon},
                      {"grid_n": grid_n, "resolution": resolution}, seed,
                      _outs(out, svg, csv_path)))


@main.command()
@click.option("--scene", required=True)
@click.option("--ball", required=True)
@click.option("--C", "C", type=float, default=3.0, show_default=True)
@click.option("--grid-n", type=int, default=None)
@click.option("--resolution", type=float, default=None)
@click.option("--threshold", type=float, default=0.05, show_default=True)
@_out_opts
def tangents(scene, ball, C, grid_n, resolution, threshold, out, svg, csv_path):
    """Detect tangent points of the boundary inside a ball."""
    _finish(RunConfig("tangents", scene, {"ball": ball, "threshold": threshold}, {"C": C},
                      {"grid_n": grid_n, "resolution": resolution},
                      outputs=_outs(out, svg, csv_path)))


@main.command("replay")
@click.argument("report", type=click.Path())
@click.option("--grid-n", type=int, default=None, help="override the grid resolution")
@click.option("--out", default=None)
def replay_cmd(report, grid_n, out):
    """Re-execute a report's config and compare certificates."""
    try:
        new, summary = replay(report, {"grid_n": grid_n} if grid_n else None, out)
    except GMTError as exc:
        click.echo(f"gmt replay: {type(exc).__name__}: {exc}", err=True)
        sys.exit(exc.exit_code)
    click.echo(json.dumps(summary, indent=1))
    sys.exit(new.exit_code)


if __name__ == "__main__":  # pragma: no cover
    main()
