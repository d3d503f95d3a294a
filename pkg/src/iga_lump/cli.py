"""``iga-lump <command> --config <file> [--out <dir>] [key=value ...]``.

Config files hold ``key = value`` lines (``#`` starts a comment); trailing
``key=value`` arguments override them. Every command writes
``<out>/<command>.csv``.

Exit codes: 0 success, 2 scientific-finding anomaly, 1 error.
"""
import argparse
import csv
import os
import sys

import numpy as np

from . import experiments
from .dynamics import ManufacturedSolution
from .quadrature import greville_sign_table
from .spectral import sem_rank1_check, sem_tensor_mass_ratios

EXIT_OK, EXIT_ERROR, EXIT_ANOMALY = 0, 1, 2


class ConfigError(ValueError):
    pass


def parse_config_text(text):
    cfg = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key = value" % n)
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


class Config:
    """Typed access to string settings."""

    def __init__(self, values):
        self.values = dict(values)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def int(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else int(v)

    def float(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else float(v)

    def ints(self, key, default=None):
        """``1-5``, ``1,2,8`` or a mix such as ``1-3,8``."""
        v = self.values.get(key)
        if v is None:
            if default is None:
                raise ConfigError("missing required setting %r" % key)
            return list(default)
        out = []
        for part in v.replace(" ", "").split(","):
            if "-" in part[1:]:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
        return out

    def strs(self, key, default):
        v = self.values.get(key)
        return list(default) if v is None else [s.strip() for s in v.split(",") if s.strip()]

    def smoothness(self):
        v = self.values.get("smoothness", "maximal")
        return None if v == "maximal" else int(v)

    def subinterval(self):
        v = self.values.get("subinterval")
        if v in (None, "", "full"):
            return None
        a, b = (float(s) for s in v.split(","))
        if not 0.0 <= a < b <= 1.0:
            raise ConfigError("subinterval must satisfy 0 <= a < b <= 1")
        return (a, b)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(rows, path, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in columns])


def _check_feasible(degrees, smoothness):
    for p in degrees:
        if p < 1:
            raise ConfigError("degree must be at least 1")
        if smoothness is not None and not 0 <= smoothness <= p - 1:
            raise ConfigError("smoothness %d infeasible for degree %d" % (smoothness, p))


def cmd_sign_table(cfg):
    degrees = cfg.ints("degrees", range(1, 13))
    _check_feasible(degrees, None)
    rows = greville_sign_table(degrees, cfg.int("n_elements", 32))
    for r in rows:
        r["mass_variant"] = "lagrange"
    cols = ["p", "k", "N", "point_kind", "mass_variant", "all_positive", "n_negative",
            "min_weight"]
    return rows, cols, EXIT_OK


def cmd_eig_convergence(cfg):
    degrees = cfg.ints("degrees", range(1, 6))
    smooth = cfg.smoothness()
    _check_feasible(degrees, smooth)
    levels = cfg.ints("levels", [8, 16, 32, 64, 128])
    bc = cfg.get("bc", "dirichlet")
    rows = []
    for variant in cfg.strs("mass_variant", ["consistent"]):
        if variant not in experiments.EIG_VARIANTS:
            raise ConfigError("unknown mass variant %r" % variant)
        rows += experiments.eig_convergence(degrees, levels, variant, cfg.int("mode", 4), bc,
                                            smooth)
    cols = ["p", "k", "N", "point_kind", "mass_variant", "definite", "n_negative", "n_infinite",
            "freq_error", "freq_rate", "freq_rate_fit", "eigf_error", "eigf_rate",
            "eigf_rate_fit"]
    return rows, cols, EXIT_OK


def cmd_dyn_convergence(cfg):
    degrees = cfg.ints("degrees", range(1, 6))
    smooth = cfg.smoothness()
    _check_feasible(degrees, smooth)
    levels = cfg.ints("levels", [8, 16, 32, 64, 128])
    solution = ManufacturedSolution(cfg.get("solution", "bump"))
    sub = cfg.subinterval()
    rows = []
    for variant in cfg.strs("mass_variant", experiments.DYN_VARIANTS):
        if variant not in experiments.DYN_VARIANTS:
            raise ConfigError("unknown mass variant %r" % variant)
        rows += experiments.dyn_convergence(degrees, levels, solution, variant,
                                            cfg.float("T", 1.5), cfg.get("bc", "dirichlet"),
                                            sub, smooth)
    for r in rows:
        r["subinterval"] = "full" if sub is None else "%g-%g" % sub
    cols = ["p", "k", "N", "point_kind", "mass_variant", "solution", "subinterval", "error",
            "rate", "rate_fit", "flagged"]
    return rows, cols, EXIT_OK


def cmd_demko_stress(cfg):
    if cfg.get("seed") is None:
        raise ConfigError("demko-stress needs an explicit seed")
    degrees = cfg.ints("degrees", range(2, 9))
    _check_feasible(degrees, None)
    rows = experiments.demko_stress(cfg.int("n_trials", 500), degrees,
                                    cfg.float("max_ratio", 1e4), cfg.int("seed"),
                                    cfg.int("max_elements", 24))
    bad = [r for r in rows if r["status"] == "ok" and r["n_negative"] > 0]
    for r in bad:
        print("negative Demko weight (min %.3e), p=%d, knots: %s"
              % (r["min_weight"], r["p"], r["knots"]), file=sys.stderr)
    ok = [r for r in rows if r["status"] == "ok"]
    print("demko-stress: %d trials, %d converged, %d with negative weights"
          % (len(rows), len(ok), len(bad)))
    cols = ["trial", "p", "k", "N", "point_kind", "mass_variant", "knot_hash", "status",
            "min_weight", "n_negative", "sup_minus_one", "knots", "note"]
    return rows, cols, EXIT_ANOMALY if bad else EXIT_OK


def cmd_sem_verify(cfg):
    qs = cfg.ints("q", range(1, 13))
    rows = []
    anomaly = False
    for q in qs:
        c = sem_rank1_check(q)
        holds = c.rank1_residual <= 1e-11 and c.min_eig_difference >= -1e-12 \
            and c.max_eig_gap <= 1e-10
        anomaly |= not holds
        rows.append({"p": q, "k": 0, "N": 1, "point_kind": "gauss_lobatto",
                     "mass_variant": "lobatto", "dim": 1, "alpha": c.alpha,
                     "rank1_residual": c.rank1_residual, "min_eig_difference": c.min_eig_difference,
                     "max_eig_gap": c.max_eig_gap, "ratio_min": np.nan, "ratio_max": np.nan,
                     "holds": holds})
    for q in cfg.ints("q2d", [2]):
        ratios = sem_tensor_mass_ratios(q, 2)
        holds = bool(ratios.min() > 0 and ratios.max() <= 1 + 1e-12)
        anomaly |= not holds
        rows.append({"p": q, "k": 0, "N": 1, "point_kind": "gauss_lobatto",
                     "mass_variant": "lobatto", "dim": 2, "ratio_min": ratios.min(),
                     "ratio_max": ratios.max(), "holds": holds})
    cols = ["p", "k", "N", "point_kind", "mass_variant", "dim", "alpha", "rank1_residual",
            "min_eig_difference", "max_eig_gap", "ratio_min", "ratio_max", "holds"]
    return rows, cols, EXIT_ANOMALY if anomaly else EXIT_OK


COMMANDS = {
    "sign-table": cmd_sign_table,
    "eig-convergence": cmd_eig_convergence,
    "dyn-convergence": cmd_dyn_convergence,
    "demko-stress": cmd_demko_stress,
    "sem-verify": cmd_sem_verify,
}


class _Parser(argparse.ArgumentParser):
    # usage errors are errors (1); 2 is reserved for scientific findings
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, "%s: error: %s\n" % (self.prog, message))


def build_parser():
    ap = _Parser(prog="iga-lump",
                                 description="Interpolatory-spline mass lumping experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key = value settings file")
    ap.add_argument("--out", default=".", help="output directory (default: current)")
    ap.add_argument("overrides", nargs="*", metavar="key=value")
    return ap


def main(argv=None):
    args = build_parser().parse_intermixed_args(argv)
    try:
        values = {}
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        values.update(parse_config_text("\n".join(args.overrides)))
        rows, cols, code = COMMANDS[args.command](Config(values))
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, args.command.replace("-", "_") + ".csv")
        write_csv(rows, path, cols)
    except (ValueError, OSError, ArithmeticError) as exc:
        print("iga-lump: error: %s" % exc, file=sys.stderr)
        return EXIT_ERROR
    print("wrote %d rows to %s" % (len(rows), path))
    return code


if __name__ == "__main__":
    sys.exit(main())
