"""Config-driven command line front end.

Usage::

    quasiparabolic {cluster,expand,spectrum,compare,selftest} [--config FILE] [--out DIR] [--svg]

The config is flat ``key = value`` text with dotted keys; see ``KEYS`` and the
README for the full list. Exit codes: 0 success, 2 invalid config,
3 hypothesis violation, 4 numerical failure (or a failing selftest).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import re
import sys
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, HypothesisViolation, NumericalError
from .halfline import HardyGrid, write_matrix_binary, write_matrix_csv
from .symbols import symbol_from_params

log = logging.getLogger("quasiparabolic")

MODES = ("cluster", "expand", "spectrum", "compare", "selftest")
EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NUMERICAL = 0, 2, 3, 4


# -- value types --------------------------------------------------------------


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_complex(s):
    txt = s.strip().replace(" ", "")
    # accept the engineering j as well as i: "2i", "1+i", "-i"
    txt = re.sub(r"(^|[+-])i$", r"\g<1>1j", txt)
    txt = re.sub(r"(?<=[0-9.])i$", "j", txt)
    return complex(txt)


def _parse_complex_list(s):
    parts = [p for p in s.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(_parse_complex(p) for p in parts)


def _fmt_float(x):
    return repr(float(x))


def _fmt_complex(z):
    z = complex(z)
    sign = "-" if np.signbit(z.imag) else "+"
    return f"{z.real!r}{sign}{abs(z.imag)!r}j"


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, complex):
        return _fmt_complex(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt_value(x) for x in v)
    return str(v)


# key -> (parser, default); a default of None means optional, REQUIRED means required
REQUIRED = object()

KEYS = {
    "mode": (str, None),
    "symbol.family": (str, REQUIRED),
    "symbol.eps_lower": (float, REQUIRED),
    "symbol.sup_norm_hint": (float, None),
    "grid.n_points": (int, 2048),
    "grid.spatial_halfwidth": (float, 200.0),
    "tol": (float, 1e-6),
    "p": (float, 1.0),
    "seed": (int, 42),
    "output_dir": (str, "out"),
    "emit_svg": (_parse_bool, False),
    "spectrum.mode": (str, "equality"),
    "spectrum.cloud": (str, "essential_range"),
    "spectrum.resolution": (float, 0.01),
    "spectrum.tolerance": (float, None),
    "spectrum.coarse_check": (_parse_bool, True),
    "compare.n_test_vectors": (int, 16),
    "expand.matrix_format": (str, "binary"),
}

FAMILY_PARAMS = {
    "constant": {"value": (_parse_complex, REQUIRED)},
    "moebius_decay": {"center": (_parse_complex, REQUIRED), "pole": (_parse_complex, REQUIRED),
                      "residue": (_parse_complex, 1 + 0j)},
    "log_oscillation": {"center": (_parse_complex, REQUIRED), "amplitude": (_parse_complex, REQUIRED),
                        "frequency": (float, 1.0)},
    "disc_transfer": {"coeffs": (_parse_complex_list, REQUIRED)},
    "sum": {},
}
TERM_RE = re.compile(r"^symbol\.terms\.(\d+)\.(\w+)$")


@dataclass(frozen=True)
class RunConfig:
    """Validated, typed, flat configuration (``values`` maps dotted keys to values)."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def grid(self):
        return HardyGrid(self["grid.n_points"], self["grid.spatial_halfwidth"])

    def symbol(self):
        return _build_symbol(self.values, "symbol.")

    def serialize(self):
        """Canonical text: sorted ``key = value`` lines, every default filled in."""
        return "".join(f"{k} = {_fmt_value(v)}\n" for k, v in sorted(self.values.items()))

    def sha256(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def _read_pairs(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = val
    return pairs


def _typed(key, parser, raw):
    try:
        return parser(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def _family_values(pairs, prefix, family, out):
    schema = FAMILY_PARAMS.get(family)
    if schema is None:
        raise ConfigError(f"{prefix}family: unknown family {family!r} (choose from {sorted(FAMILY_PARAMS)})")
    for name, (parser, default) in schema.items():
        key = prefix + name
        if key in pairs:
            out[key] = _typed(key, parser, pairs.pop(key))
        elif default is REQUIRED:
            raise ConfigError(f"{key}: required for family {family!r}")
        else:
            out[key] = default


def _build_symbol(values, prefix):
    family = values[prefix + "family"]
    if family == "sum":
        idx = sorted({int(m.group(1)) for k in values if (m := TERM_RE.match(k))})
        terms = []
        for i in idx:
            tp = f"{prefix}terms.{i}."
            params = {k[len(tp):]: v for k, v in values.items()
                      if k.startswith(tp) and k[len(tp):] not in ("family", "eps_lower")}
            terms.append((values[tp + "family"], params, values[tp + "eps_lower"]))
        params = {"terms": terms}
    else:
        params = {name: values[prefix + name] for name in FAMILY_PARAMS[family]}
    return symbol_from_params(family, params, values[prefix + "eps_lower"],
                              values.get(prefix + "sup_norm_hint"))


def parse_config(text, mode=None):
    """Parse and validate config text. Raises ConfigError before any computation."""
    pairs = _read_pairs(text)
    mode = mode or pairs.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}, got {mode!r}")
    if "mode" in pairs and pairs["mode"] != mode:
        raise ConfigError(f"mode: config says {pairs['mode']!r} but the subcommand is {mode!r}")
    pairs.pop("mode", None)
    values = {"mode": mode}
    # selftest ignores the symbol, but a config carrying one is still checked
    needs_symbol = mode != "selftest" or "symbol.family" in pairs

    for key, (parser, default) in KEYS.items():
        if key == "mode":
            continue
        if key in pairs:
            values[key] = _typed(key, parser, pairs.pop(key))
        elif default is REQUIRED:
            if needs_symbol:
                raise ConfigError(f"{key}: required")
        elif default is not None:
            values[key] = default

    if needs_symbol:
        family = values["symbol.family"]
        _family_values(pairs, "symbol.", family, values)
        if family == "sum":
            idx = sorted({int(m.group(1)) for k in pairs if (m := TERM_RE.match(k))})
            if not idx:
                raise ConfigError("sum: needs symbol.terms.<k>.family entries")
            for i in idx:
                tp = f"symbol.terms.{i}."
                if tp + "family" not in pairs or tp + "eps_lower" not in pairs:
                    raise ConfigError(f"{tp}family and {tp}eps_lower are required")
                tfam = pairs.pop(tp + "family")
                if tfam == "sum":
                    raise ConfigError(f"{tp}family: nested sums are not supported")
                values[tp + "family"] = tfam
                values[tp + "eps_lower"] = _typed(tp + "eps_lower", float, pairs.pop(tp + "eps_lower"))
                _family_values(pairs, tp, tfam, values)
    if pairs:
        raise ConfigError(f"unknown keys: {', '.join(sorted(pairs))}")
    cfg = RunConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg):
    n = cfg["grid.n_points"]
    if not (256 <= n <= 8192 and n & (n - 1) == 0):
        raise ConfigError(f"grid.n_points: must be a power of two in [256, 8192], got {n}")
    if not cfg["grid.spatial_halfwidth"] > 0:
        raise ConfigError("grid.spatial_halfwidth: must be > 0")
    if not 0 < cfg["tol"] <= 0.1:
        raise ConfigError(f"tol: must lie in (0, 0.1], got {cfg['tol']}")
    if not cfg["p"] > 0:
        raise ConfigError("p: must be > 0")
    if cfg["spectrum.mode"] not in ("equality", "containment"):
        raise ConfigError("spectrum.mode: expected 'equality' or 'containment'")
    if cfg["spectrum.cloud"] not in ("cluster", "essential_range"):
        raise ConfigError("spectrum.cloud: expected 'cluster' or 'essential_range'")
    if not 0 < cfg["spectrum.resolution"] < 1:
        raise ConfigError("spectrum.resolution: must lie in (0, 1)")
    if cfg["compare.n_test_vectors"] < 1:
        raise ConfigError("compare.n_test_vectors: must be >= 1")
    if cfg["expand.matrix_format"] not in ("binary", "csv"):
        raise ConfigError("expand.matrix_format: expected 'binary' or 'csv'")
    if "symbol.family" not in cfg.values:
        return
    for key, v in cfg.values.items():
        if key.endswith("eps_lower") and not v > 0:
            raise ConfigError(f"{key}: must be > 0, got {v}")
    if cfg["mode"] == "spectrum" and cfg["p"] != 1:
        raise ConfigError("p: spectrum predictions assume p = 1")
    try:
        cfg.symbol()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"symbol: {exc}") from None


def load_config(path, mode=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, mode)


# -- artifacts ----------------------------------------------------------------


def versions():
    return {"quasiparabolic": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_meta(path, cfg, extra=None):
    meta = {
        "artifact": os.path.basename(path),
        "config_sha256": cfg.sha256(),
        "config": cfg.serialize(),
        "versions": versions(),
    }
    if cfg["mode"] != "selftest":
        meta["grid"] = cfg.grid.metadata()
    if extra:
        meta.update(extra)
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_json(path, obj, cfg):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    _write_meta(path, cfg)
    return path


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


SVG_SIZE = 480
SVG_STYLE = {
    "predicted": ('circle', "#1f77b4"),
    "eigen": ('cross', "#d62728"),
}


def _svg_xy(z, scale, c):
    return c + scale * z.real, c - scale * z.imag


def emit_svg(series, path):
    """Deterministic SVG scatter of ``{"predicted": pts, "eigen": pts}`` plus the unit circle.

    Empty or missing series are omitted. The view is fixed to ``[-1.1, 1.1]^2``;
    points outside it are clipped by the viewport.
    """
    c = SVG_SIZE / 2
    scale = SVG_SIZE / 2.2
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f'<rect width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>',
        f'<circle class="unit-circle" cx="{c:.3f}" cy="{c:.3f}" r="{scale:.3f}" fill="none" '
        'stroke="#888888" stroke-width="1"/>',
    ]
    for name in ("predicted", "eigen"):
        pts = series.get(name)
        if pts is None:
            continue
        pts = np.asarray(getattr(pts, "points", pts), dtype=complex).ravel()
        if pts.size == 0:
            continue
        shape, color = SVG_STYLE[name]
        out.append(f'<g class="series-{name}" fill="{color}" stroke="{color}">')
        for z in pts:
            x, y = _svg_xy(z, scale, c)
            if shape == "circle":
                out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="1.2" stroke="none"/>')
            else:
                out.append(f'<path d="M{x - 2:.3f} {y - 2:.3f}L{x + 2:.3f} {y + 2:.3f}'
                           f'M{x - 2:.3f} {y + 2:.3f}L{x + 2:.3f} {y - 2:.3f}" stroke-width="0.8"/>')
        out.append("</g>")
    out.append("</svg>")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write SVG to {path}: {exc}") from exc
    return path


def _write_cloud_csv(path, cloud):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("re,im,weight\n")
        w = cloud.weights if cloud.weights is not None else np.ones(len(cloud))
        for z, wk in zip(cloud.points, w):
            fh.write(f"{float(z.real)!r},{float(z.imag)!r},{float(wk)!r}\n")


# -- modes --------------------------------------------------------------------


def _hypothesis_gate(symbol):
    from .symbols import verify_hypothesis

    rep = verify_hypothesis(symbol)
    if not rep.ok:
        raise HypothesisViolation(
            f"Im psi >= {symbol.eps_lower} fails on interior samples (min Im = {rep.min_im:.6g})")
    return rep


def run_cluster(cfg, out):
    from .symbols import estimate_cluster_set_at_infinity, estimate_essential_range_at_infinity

    sym = cfg.symbol()
    _hypothesis_gate(sym)
    cl = estimate_cluster_set_at_infinity(sym)
    er = estimate_essential_range_at_infinity(sym)
    files = []
    for name, cloud in (("cluster_set", cl), ("essential_range", er)):
        path = os.path.join(out, f"{name}.csv")
        _write_cloud_csv(path, cloud)
        _write_meta(path, cfg, {"cloud_metadata": cloud.metadata})
        files.append(path)
    summary = {
        "cluster_set": {"n_points": len(cl), "diameter": cl.diameter(), "metadata": cl.metadata},
        "essential_range": {"n_points": len(er), "diameter": er.diameter() if len(er) else 0.0,
                            "metadata": er.metadata},
    }
    files.append(_write_json(os.path.join(out, "cluster.json"), summary, cfg))
    return files


def run_expand(cfg, out):
    from .expansion import finite_section

    sym = cfg.symbol()
    plan, A = finite_section(sym, cfg.grid, cfg["tol"], p=cfg["p"])
    files = [_write_json(os.path.join(out, "plan.json"), plan.to_dict(), cfg)]
    if cfg["expand.matrix_format"] == "binary":
        path = os.path.join(out, "matrix.bin")
        write_matrix_binary(path, A)
    else:
        path = os.path.join(out, "matrix.csv")
        write_matrix_csv(path, A)
    _write_meta(path, cfg, {"shape": list(A.shape), "format": cfg["expand.matrix_format"]})
    files.append(path)
    return files


def _spectrum_once(cfg, sym, grid):
    from .expansion import finite_section
    from .spectra import compare, predict_essential_spectrum
    from .symbols import estimate_cluster_set_at_infinity, estimate_essential_range_at_infinity

    plan, A = finite_section(sym, grid, cfg["tol"])
    if cfg["spectrum.cloud"] == "cluster":
        cloud = estimate_cluster_set_at_infinity(sym)
    else:
        cloud = estimate_essential_range_at_infinity(sym)
    pred = predict_essential_spectrum(cloud, sym.eps_lower, cfg["spectrum.resolution"])
    qc = sym.family in ("constant", "moebius_decay")
    rep = compare(pred, A, cfg["spectrum.mode"], tolerance=cfg.get("spectrum.tolerance"), qc_certified=qc)
    rep.metadata["plan"] = plan.to_dict()
    rep.metadata["cloud"] = cfg["spectrum.cloud"]
    return rep


def run_spectrum(cfg, out):
    from .spectra import write_points_csv

    sym = cfg.symbol()
    _hypothesis_gate(sym)
    rep = _spectrum_once(cfg, sym, cfg.grid)
    if cfg["spectrum.coarse_check"]:
        coarse = HardyGrid(cfg["grid.n_points"] // 2, cfg["grid.spatial_halfwidth"])
        crep = _spectrum_once(cfg, sym, coarse)
        rep.metadata["coarse_grid"] = {"n_points": coarse.n_points, "hausdorff": crep.hausdorff,
                                       "containment_margin": crep.containment_margin,
                                       "status": crep.status}
    report_path = os.path.join(out, "spectrum_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(rep.to_json() + "\n")
    _write_meta(report_path, cfg)
    pts_path = os.path.join(out, "spectrum_points.csv")
    write_points_csv(pts_path, rep.predicted, rep.eigenvalues)
    _write_meta(pts_path, cfg)
    files = [report_path, pts_path]
    if cfg["emit_svg"]:
        svg = emit_svg({"predicted": rep.predicted, "eigen": rep.eigenvalues},
                       os.path.join(out, "spectrum.svg"))
        _write_meta(svg, cfg)
        files.append(svg)
    if rep.status == "fail":
        log.warning("spectrum comparison exceeded spectrum.tolerance (%s)", rep.status)
    return files


def run_compare(cfg, out):
    from .expansion import oracle_vs_series_report

    sym = cfg.symbol()
    rep = oracle_vs_series_report(sym, cfg.grid, cfg["tol"], n_test_vectors=cfg["compare.n_test_vectors"],
                                  seed=cfg["seed"], p=cfg["p"])
    return [_write_json(os.path.join(out, "oracle_report.json"), rep.to_dict(), cfg)]


def run_selftest(cfg, out):
    from .acceptance import run_all

    results = run_all(echo=print)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    path = _write_json(os.path.join(out, "selftest.json"), [r.to_dict() for r in results], cfg)
    if not all(r.passed for r in results):
        raise SelftestFailed([r.number for r in results if not r.passed], [path])
    return [path]


class SelftestFailed(Exception):
    def __init__(self, failed, files):
        super().__init__(f"criteria failed: {failed}")
        self.files = files


RUNNERS = {"cluster": run_cluster, "expand": run_expand, "spectrum": run_spectrum,
           "compare": run_compare, "selftest": run_selftest}


def run(cfg, out_dir=None, emit=None):
    """Execute ``cfg``; returns ``(exit_code, files)``. Errors are logged with their stage."""
    if emit is not None:
        cfg = RunConfig({**cfg.values, "emit_svg": bool(emit)})
    out = out_dir or cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    stage = cfg["mode"]
    try:
        return EXIT_OK, RUNNERS[stage](cfg, out)
    except SelftestFailed as exc:
        log.error("selftest: %s", exc)
        return EXIT_NUMERICAL, exc.files
    except HypothesisViolation as exc:
        log.error("%s: hypothesis violation: %s", stage, exc)
        return EXIT_HYPOTHESIS, []
    except NumericalError as exc:
        log.error("%s: numerical failure (%s): %s", stage, type(exc).__name__, exc)
        return EXIT_NUMERICAL, []


def build_parser():
    ap = argparse.ArgumentParser(prog="quasiparabolic", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="mode", required=True)
    for m in MODES:
        sp = sub.add_parser(m)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--svg", action="store_true", default=None, help="also emit SVG plots")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config, args.mode)
        elif args.mode == "selftest":
            cfg = parse_config("", "selftest")
        else:
            raise ConfigError("--config is required for this mode")
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    code, files = run(cfg, args.out, args.svg)
    for f in files:
        print(f)
    return code


if __name__ == "__main__":
    sys.exit(main())
