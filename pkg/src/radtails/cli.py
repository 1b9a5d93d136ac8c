"""Batch front end: ``radtails {evolve,perturb,predict,verify,huygens} CONFIG``.

The configuration is an INI-style key-value file with the sections
[model], [profile], [evolve], [perturb], [analysis] and [output].  Unknown
sections or keys are errors.  Every command writes the fully resolved
configuration (``resolved.ini``) next to its outputs; re-running from that
file reproduces them.

Exit codes: 0 success/pass, 1 config error, 2 numerical blowup, 3 quadrature
non-convergence, 4 verification failed, 5 inconclusive.

Environment: RADTAILS_PRECISION overrides [evolve] and [perturb] precision;
RADTAILS_THREADS sets the numba thread count.
"""
from __future__ import annotations

import argparse
import configparser
import inspect
import logging
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, evolve, models, perturb
from .freewave import FreeWave
from .numerics import Precision
from .profiles import Profile

logger = logging.getLogger("radtails")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_QUADRATURE, EXIT_FAIL, EXIT_INCONCLUSIVE = range(6)

ENV_PRECISION = "RADTAILS_PRECISION"
ENV_THREADS = "RADTAILS_THREADS"


class ConfigError(ValueError):
    """Invalid configuration (unknown key, bad value, inconsistent settings)."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _points(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            t, r = _floats(chunk)
            out.append((t, r))
    return tuple(out)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


# section -> key -> (parser, default as text)
SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {"preset": (str, "free")},  # preset parameters are checked separately
    "profile": {"u0": (float, "0.0"), "u1": (float, "2.0"), "m": (int, "8"),
                "m_right": (_opt_int, "none"), "amplitude": (float, "1.0")},
    "evolve": {"t_final": (float, "100.0"), "h": (float, "0.03125"), "stencil_order": (int, "6"),
               "cfl": (float, "0.25"), "boundary": (str, "causal"),
               "observation_radii": (_floats, "5.0"), "sample_interval": (float, "0.5"),
               "precision": (str, "extended"), "dissipation": (float, "0.0"),
               "pad": (float, "2.0")},
    "perturb": {"kind": (str, "linear"), "order": (str, "1"), "quad_n": (int, "16"),
                "tol": (_opt_float, "none"), "precision": (str, "standard"),
                "max_panel": (float, "2.0"), "eval_points": (_points, "40 2; 80 2"),
                "table_du": (float, "0.05"), "table_dv": (float, "0.5")},
    "analysis": {"tol_gamma": (float, "0.02"), "tol_coeff": (_opt_float, "none"),
                 "t_lo": (_opt_float, "none"), "check_coefficient": (_bool, "true"),
                 "convention": (str, "reference")},
    "output": {"directory": (str, "out")},
}


def _preset_params(name: str) -> dict[str, inspect.Parameter]:
    try:
        factory = models.PRESETS[name]
    except KeyError:
        raise ConfigError(f"[model] preset: unknown preset {name!r}; choose from "
                          f"{sorted(models.PRESETS)}") from None
    return dict(inspect.signature(factory).parameters)


def load_config(path) -> dict[str, dict]:
    """Parse and validate a config file into typed, fully resolved sections."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"))
    cp.optionxform = str  # keys are case sensitive
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return resolve(cp)


def resolve(cp: configparser.ConfigParser) -> dict[str, dict]:
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
    out: dict[str, dict] = {}
    for sec, keys in SCHEMA.items():
        given = dict(cp.items(sec)) if cp.has_section(sec) else {}
        vals = {}
        extra = {}
        for k, text in given.items():
            if k not in keys:
                if sec == "model":
                    extra[k] = text
                    continue
                raise ConfigError(f"[{sec}] unknown key {k!r}")
        for k, (parse, default) in keys.items():
            text = given.get(k, default)
            try:
                vals[k] = parse(text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{sec}] {k}: bad value {text!r} ({exc})") from None
        if sec == "model":
            params = _preset_params(vals["preset"])
            for k, text in extra.items():
                if k not in params:
                    raise ConfigError(f"[model] unknown key {k!r} for preset {vals['preset']!r} "
                                      f"(allowed: {sorted(params)})")
            for k, prm in params.items():
                default = prm.default
                text = extra.get(k)
                if text is None:
                    vals[k] = default
                    continue
                try:
                    vals[k] = type(default)(text) if not isinstance(default, bool) else _bool(text)
                except (ValueError, TypeError):
                    raise ConfigError(f"[model] {k}: bad value {text!r}") from None
        out[sec] = vals
    env = os.environ.get(ENV_PRECISION)
    if env:
        for sec in ("evolve", "perturb"):
            out[sec]["precision"] = env
    for sec in ("evolve", "perturb"):
        try:
            Precision(out[sec]["precision"])
        except ValueError:
            raise ConfigError(f"[{sec}] precision: must be 'standard' or 'extended'") from None
    return out


def _fmt(v) -> str:
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(" ".join(repr(x) for x in p) for p in v)
        return " ".join(repr(x) for x in v)
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg: dict[str, dict]) -> str:
    lines = []
    for sec, vals in cfg.items():
        lines.append(f"[{sec}]")
        for k, v in vals.items():
            lines.append(f"{k} = {_fmt(v)}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_model(cfg) -> models.ModelSpec:
    params = {k: v for k, v in cfg["model"].items() if k != "preset"}
    try:
        return models.preset(cfg["model"]["preset"], **params)
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None


def build_profile(cfg) -> Profile:
    p = cfg["profile"]
    try:
        return Profile(p["u0"], p["u1"], p["m"], p["amplitude"], m_right=p["m_right"])
    except ValueError as exc:
        raise ConfigError(f"[profile] {exc}") from None


def build_evolve(cfg) -> evolve.EvolveConfig:
    e = cfg["evolve"]
    try:
        return evolve.EvolveConfig(t_final=e["t_final"], h=e["h"], stencil_order=e["stencil_order"],
                                   cfl=e["cfl"], boundary=e["boundary"],
                                   observation_radii=e["observation_radii"],
                                   sample_interval=e["sample_interval"], precision=e["precision"],
                                   dissipation=e["dissipation"], pad=e["pad"])
    except ValueError as exc:
        raise ConfigError(f"[evolve] {exc}") from None


def _outdir(cfg) -> Path:
    d = Path(cfg["output"]["directory"])
    d.mkdir(parents=True, exist_ok=True)
    (d / "resolved.ini").write_text(dump_config(cfg))
    return d


def _wave(cfg, model) -> FreeWave:
    try:
        return FreeWave(build_profile(cfg), model.l)
    except ValueError as exc:
        raise ConfigError(f"[profile] {exc}") from None


def _write_series(d: Path, result, cfg) -> list[Path]:
    meta = {k: v for k, v in result.metadata.items() if k != "wall_clock_s"}
    paths = []
    for s in result.series:
        path = d / f"series_r{s.r_obs:g}.csv"
        s.to_csv(path, meta)
        with open(path, "r+") as fh:
            body = fh.read()
            fh.seek(0)
            fh.write(f"# volatile wall_clock_s: {result.metadata['wall_clock_s']}\n" + body)
        paths.append(path)
    return paths


def _run_evolution(cfg):
    model = build_model(cfg)
    wave = _wave(cfg, model)
    ecfg = build_evolve(cfg)
    coeff = cfg["analysis"]["check_coefficient"]
    return model, wave, ecfg, evolve.run(model, wave, ecfg, coefficient_check=coeff)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_evolve(cfg) -> int:
    d = _outdir(cfg)
    _, _, _, result = _run_evolution(cfg)
    for p in _write_series(d, result, cfg):
        logger.info("wrote %s", p)
    return EXIT_OK


def cmd_perturb(cfg) -> int:
    d = _outdir(cfg)
    model = build_model(cfg)
    wave = _wave(cfg, model)
    pc = cfg["perturb"]
    kw = dict(quad_n=pc["quad_n"], tol=pc["tol"], precision=pc["precision"],
              max_panel=pc["max_panel"])
    pts = pc["eval_points"]
    if pc["kind"] == "linear":
        k = int(pc["order"])
        if k == 2:
            t = np.array([p[0] for p in pts])
            r = np.array([p[1] for p in pts])
            un, vn = perturb.past_lattice(wave, float(np.max(t - r)), float(np.max(t + r)),
                                          fine=pc["table_du"], coarse=pc["table_dv"])
            first = perturb.build_table(perturb.linear_source(model, wave), model.l, un, vn,
                                        order=1, model_name=model.name, quad_n=pc["quad_n"],
                                        max_panel=pc["max_panel"])
            table = perturb.iterate_linear(model, wave, 2, pts, first=first, **kw)
        else:
            table = perturb.iterate_linear(model, wave, k, pts, **kw)
    elif pc["kind"] == "nonlinear":
        table = perturb.iterate_nonlinear(model, wave, pc["order"], pts, du=pc["table_du"],
                                          dv=pc["table_dv"], **kw)
    else:
        raise ConfigError("[perturb] kind must be 'linear' or 'nonlinear'")
    table.to_csv(d / "iterates.csv", {"model": model.name, "l": model.l})
    return EXIT_OK


def _prediction(cfg, model, prof):
    try:
        return analysis.predict(model, prof, cfg["analysis"]["convention"])
    except ValueError as exc:
        raise ConfigError(f"[model] cannot predict: {exc}") from None


def cmd_predict(cfg) -> int:
    d = _outdir(cfg)
    model = build_model(cfg)
    prof = build_profile(cfg)
    pred = _prediction(cfg, model, prof)
    lines = [f"gamma = {pred.gamma!r}", f"coefficient = {_fmt(pred.coefficient)}",
             f"order_in_small_param = {pred.order_in_small_param}",
             f"anomalous = {_fmt(pred.anomalous)}", f"source = {pred.source}"]
    for i, c in enumerate(pred.candidates):
        lines.append(f"candidate_{i} = {c.source}: gamma {c.gamma!r}, coefficient {_fmt(c.coefficient)}")
    text = "\n".join(lines) + "\n"
    (d / "prediction.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(cfg) -> int:
    d = _outdir(cfg)
    model = build_model(cfg)
    prof = build_profile(cfg)
    pred = _prediction(cfg, model, prof)
    ac = cfg["analysis"]
    check = ac["check_coefficient"]
    if check and model.name == "skyrme_pert":
        warnings.warn("skyrme_pert uses a model potential; only the rate is verified", stacklevel=2)
        check = False
    model, wave, ecfg, result = _run_evolution(cfg)
    _write_series(d, result, cfg)
    s = result.series[0]
    t_lo = ac["t_lo"] if ac["t_lo"] is not None else ecfg.t_final / 10
    rep = analysis.compare(s, pred, ac["tol_gamma"], ac["tol_coeff"], t_lo=t_lo,
                           check_coefficient=check)
    rep.write(d)
    sys.stdout.write(rep.to_text())
    if rep.verdict == "inconclusive" and rep.recommended_t_final:
        logger.warning("inconclusive; try t_final >= %.0f", rep.recommended_t_final)
    return {"pass": EXIT_OK, "fail": EXIT_FAIL}.get(rep.verdict, EXIT_INCONCLUSIVE)


def cmd_huygens(cfg) -> int:
    d = _outdir(cfg)
    model = build_model(cfg)
    if not model.is_free:
        raise ConfigError("[model] huygens needs the free preset")
    wave = _wave(cfg, model)
    r_obs = cfg["evolve"]["observation_radii"][0]
    t_after = r_obs + wave.profile.u1 + 1.0
    exact = wave.huygens_check(r_obs, t_after)
    ecfg = replace(build_evolve(cfg), observation_radii=(r_obs,))
    result = evolve.run(model, wave, ecfg)
    s = result.series[0]
    peak = float(np.max(np.abs(s.values)))
    after = s.times > r_obs + wave.profile.u1
    resid = float(np.max(np.abs(s.values[after]))) if np.any(after) else float("nan")
    text = (f"exact_value = {float(exact)!r}\nr_obs = {r_obs!r}\nt_after = {t_after!r}\n"
            f"evolved_peak = {peak!r}\nevolved_post_passage_max = {resid!r}\n"
            f"relative_floor = {resid / peak if peak else math.nan!r}\n")
    (d / "huygens.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"evolve": cmd_evolve, "perturb": cmd_perturb, "predict": cmd_predict,
            "verify": cmd_verify, "huygens": cmd_huygens}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="radtails", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="key-value configuration file")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    threads = os.environ.get(ENV_THREADS)
    try:
        if threads:
            import numba

            numba.set_num_threads(int(threads))
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except evolve.NumericalBlowup as exc:
        print(f"numerical blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except perturb.QuadratureNonConvergence as exc:
        print(f"quadrature failure: {exc}", file=sys.stderr)
        return EXIT_QUADRATURE


if __name__ == "__main__":
    sys.exit(main())
