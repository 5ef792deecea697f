"""``sgn-lab``: run SGN experiments from a flat ``key = value`` config file.

Subcommands: ``train``, ``stability``, ``bounds``, ``teacher-gen``.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bounds as bd
from .dataset import Dataset, normalize_inputs
from .losses import get_loss
from .network import NetworkConfig, gaussian_init, get_activation, make_geometry
from .optimizer import Hyperparams, SamplerSequence, ntk_teacher, reference_solution, symmetric_init, train
from .stability import make_neighbor, random_replacement, run_pair, stability_to_generalization

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

METRICS_COLUMNS = (
    "iteration", "train_risk", "minibatch_loss", "logdet_ratio", "lambda_min", "grad_norm",
    "proj_active", "delta_h_norm", "gap_bound_kappa", "wall_time_ms",
)
PAIR_COLUMNS = ("iteration", "batch", "j_star_in_batch", "delta_l2", "delta_h_norm", "h_diff_norm", "train_risk")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(conv):
    def parse(s):
        return [conv(t) for t in s.split(",") if t.strip()]
    return parse


# key -> (parser, default); a default of None means "optional, no default"
SCHEMA = {
    "network.depth": (int, 1),
    "network.width": (int, None),
    "network.input_dim": (int, None),
    "network.activation": (str, "tanh"),
    "network.init": (str, "symmetric"),
    "network.init_scale": (float, 1.0),
    "loss.name": (str, "square"),
    "loss.reg": (float, 0.1),
    "hyper.eta": (float, None),
    "hyper.xi": (float, None),
    "hyper.lambda": (float, None),
    "hyper.gamma": (float, None),
    "hyper.alpha": (float, 1.0),
    "hyper.batch": (int, None),
    "hyper.k_max": (int, None),
    "hyper.radius": (float, None),
    "data.source": (str, "teacher"),
    "data.path": (str, None),
    "data.header": (_bool, False),
    "data.n": (int, 64),
    "data.n_test": (int, 0),
    "data.v_c_bar": (float, 1.0),
    "data.v_W_bar": (float, 1.0),
    "data.noise": (float, 0.0),
    "data.m_teacher": (int, 100_000),
    "data.seed": (int, None),
    "run.seeds": (_list(int), [0]),
    "run.lambda_min_every": (int, 0),
    "run.reference_iters": (int, 300),
    "stability.j_star": (int, None),
    "stability.replacement_seed": (int, None),
    "stability.log_every": (int, 1),
    "stability.h_diff_every": (int, 0),
    "stability.lambda_scales": (_list(float), [1.0]),
    "stability.pe_every": (int, 10),
    "stability.pe_burn_in": (int, 0),
    "bounds.mu0_probes": (int, 50),
}
REQUIRED = ("network.width", "hyper.batch", "hyper.k_max")


def parse_config(text: str) -> dict:
    """Strict parse: unknown keys, duplicates, bad values and missing keys raise ConfigError."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, val = (t.strip() for t in s.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        raw[key] = val
    cfg = {}
    for key, (conv, default) in SCHEMA.items():
        if key in raw:
            try:
                cfg[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        else:
            cfg[key] = default
    for key in REQUIRED:
        if cfg[key] is None:
            raise ConfigError(f"missing required key {key!r}")
    if (cfg["hyper.eta"] is None) == (cfg["hyper.xi"] is None):
        raise ConfigError("give exactly one of 'hyper.eta' and 'hyper.xi'")
    if (cfg["hyper.lambda"] is None) == (cfg["hyper.gamma"] is None):
        raise ConfigError("give exactly one of 'hyper.lambda' and 'hyper.gamma'")
    if cfg["data.source"] not in ("teacher", "csv"):
        raise ConfigError("'data.source' must be 'teacher' or 'csv'")
    if cfg["data.source"] == "csv" and not cfg["data.path"]:
        raise ConfigError("'data.path' is required when data.source = csv")
    if cfg["data.source"] == "teacher" and cfg["network.input_dim"] is None:
        raise ConfigError("'network.input_dim' is required for teacher data")
    if cfg["network.init"] not in ("symmetric", "gaussian"):
        raise ConfigError("'network.init' must be 'symmetric' or 'gaussian'")
    if not cfg["run.seeds"]:
        raise ConfigError("'run.seeds' is empty")
    if cfg["data.noise"] < 0:
        raise ConfigError("'data.noise' must be nonnegative")
    try:
        get_activation(cfg["network.activation"])
        get_loss(cfg["loss.name"], cfg["loss.reg"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config(text)


def load_csv_dataset(path: str, header: bool = False):
    """Read ``d`` feature columns and a final label column; rescale inputs into the unit ball.

    Returns:
        ``(Dataset, scale)`` where inputs were divided by ``scale``.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            arr = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    except (OSError, ValueError, UserWarning) as exc:
        raise DataError(f"cannot read dataset {path!r}: {exc}") from None
    if arr.shape[0] == 0 or arr.shape[1] < 2:
        raise DataError(f"dataset {path!r} needs at least one row with a feature and a label column")
    X, scale = normalize_inputs(arr[:, :-1])
    try:
        data = Dataset(X, arr[:, -1])
        data.check_support()
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return data, scale


def _teacher_data(cfg, seed, n):
    d = cfg["network.input_dim"]
    rng = np.random.default_rng([seed, 1])
    if d == 1:
        X = rng.uniform(-1.0, 1.0, size=(n, 1))
    else:
        X = rng.standard_normal((n, d))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    f = ntk_teacher(d, cfg["data.v_c_bar"], cfg["data.v_W_bar"], [seed, 2], cfg["data.m_teacher"],
                    get_activation(cfg["network.activation"]))
    y = f(X)
    if cfg["data.noise"] > 0:
        y = y + cfg["data.noise"] * rng.standard_normal(n)
    if cfg["loss.name"] == "logistic":
        y = np.where(y >= 0, 1.0, -1.0)
    return X, y


@dataclass
class Setup:
    cfg: NetworkConfig
    act: object
    loss: object
    data: Dataset
    held_out: object
    geom: object
    init: object
    lip: object
    hyper: Hyperparams
    scale: float
    radius: float


def build(cfg: dict, seed: int) -> Setup:
    act = get_activation(cfg["network.activation"])
    loss = get_loss(cfg["loss.name"], cfg["loss.reg"])
    scale = 1.0
    held = None
    if cfg["data.source"] == "csv":
        data, scale = load_csv_dataset(cfg["data.path"], cfg["data.header"])
    else:
        dseed = seed if cfg["data.seed"] is None else cfg["data.seed"]
        n, nt = cfg["data.n"], cfg["data.n_test"]
        X, y = _teacher_data(cfg, dseed, n + nt)
        try:
            data = Dataset(X[:n], y[:n])
            data.check_support()
            if nt:
                held = Dataset(X[n:], y[n:])
                held.check_support()
        except ValueError as exc:
            raise DataError(f"teacher data: {exc}") from None
    d = data.d
    if cfg["network.input_dim"] is not None and cfg["network.input_dim"] != d:
        raise DataError(f"dataset has {d} features but network.input_dim = {cfg['network.input_dim']}")
    try:
        ncfg = NetworkConfig(cfg["network.depth"], cfg["network.width"], d)
        if cfg["network.init"] == "symmetric":
            init = symmetric_init(ncfg, seed)
        else:
            init = gaussian_init(ncfg, seed, cfg["network.init_scale"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    radius = cfg["hyper.radius"]
    if radius is None:
        if cfg["data.source"] != "teacher":
            raise ConfigError("'hyper.radius' is required for csv data")
        radius = bd.corollary1_constants(cfg["data.v_c_bar"], cfg["data.v_W_bar"])[1]
    geom = make_geometry(init, ncfg, radius)
    lip = bd.lipschitz_bounds(geom, act, loss)
    alpha = cfg["hyper.alpha"]
    B = cfg["hyper.batch"]
    eta = cfg["hyper.eta"] if cfg["hyper.eta"] is not None else cfg["hyper.xi"] * alpha
    lam = (cfg["hyper.lambda"] if cfg["hyper.lambda"] is not None
           else cfg["hyper.gamma"] * alpha * lip.lip_phi ** 2 * B)
    try:
        hyper = Hyperparams(eta=eta, alpha=alpha, lam=lam, batch=B, k_max=cfg["hyper.k_max"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if B > data.n:
        raise ConfigError(f"hyper.batch = {B} exceeds the dataset size {data.n}")
    return Setup(ncfg, act, loss, data, held, geom, init, lip, hyper, scale, radius)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _train_one(cfg: dict, seed: int, out: str) -> dict:
    su = build(cfg, seed)
    sampler = SamplerSequence(seed, su.data.n, su.hyper.batch)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rec = train(su.data, su.cfg, su.act, su.loss, su.hyper, su.geom, sampler, su.init,
                    track_lambda_min=cfg["run.lambda_min_every"], keep_iterates=False)
    arr = rec.as_arrays()
    kappa = bd.theorem1_series(arr["logdet_ratio"], su.hyper, su.lip, su.geom)
    K = su.hyper.k_max
    rows = []
    for k in range(K + 1):
        rows.append([k, arr["train_risk"][k], arr["minibatch_loss"][k], arr["logdet_ratio"][k],
                     arr["lambda_min"][k], arr["grad_norm"][k], bool(rec.proj_active[k]), math.nan,
                     kappa[k], arr["wall_time_ms"][k]])
    _write_csv(os.path.join(out, f"train_{seed}.csv"), METRICS_COLUMNS, rows)

    summary = {
        "seed": seed,
        "iterations": K,
        "initial_risk": float(arr["train_risk"][0]),
        "final_risk": float(arr["train_risk"][-1]),
        "input_scale": su.scale,
        "radius": su.radius,
        "hyper": {"eta": su.hyper.eta, "alpha": su.hyper.alpha, "lambda": su.hyper.lam,
                  "batch": su.hyper.batch, "xi": su.hyper.xi, "gamma": su.hyper.gamma(su.lip.lip_phi)},
        "lipschitz": {"lip_phi": su.lip.lip_phi, "lip_grad_phi": su.lip.lip_grad_phi,
                      "lip_loss": su.lip.lip_loss},
        "warnings": [str(w.message) for w in caught],
    }
    if K >= 1:
        _, ref = reference_solution(su.data, su.cfg, su.act, su.loss, su.geom, iters=cfg["run.reference_iters"])
        ref = min(ref, float(np.min(arr["train_risk"])))
        gap = np.cumsum(arr["train_risk"][:-1] - ref) / np.arange(1, K + 1)
        summary.update({
            "avg_iterate_risk": float(arr["avg_risk"][-1]),
            "reference_risk": ref,
            "mean_gap_final": float(gap[-1]),
            "kappa_final": float(kappa[-1]),
            "bound_satisfied": bool(np.all(gap <= kappa[1:])),
            "logdet_ratio_final": float(arr["logdet_ratio"][-1]),
            "prop1_worst_case_final": float(bd.prop1_bounds(su.hyper, su.lip, su.cfg.num_params, K - 1, None)[0]),
        })
    with open(os.path.join(out, f"summary_{seed}.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _pair_one(cfg: dict, seed: int, scale: float, out: str) -> dict:
    su = build(cfg, seed)
    hyper = Hyperparams(su.hyper.eta, su.hyper.alpha, su.hyper.lam * scale, su.hyper.batch, su.hyper.k_max)
    rng = np.random.default_rng([seed if cfg["stability.replacement_seed"] is None
                                 else cfg["stability.replacement_seed"], 3])
    j = cfg["stability.j_star"]
    if j is None:
        j = int(rng.integers(su.data.n))
    rep = random_replacement(su.data.d, rng, binary=su.loss.binary_labels)
    try:
        pair = make_neighbor(su.data, j, rep, seed, hyper.batch)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"stability pair: {exc}") from None
    pe_every = cfg["stability.pe_every"]
    lam_min_S = []

    log = run_pair(pair, su.cfg, su.act, su.loss, hyper, su.geom, su.init,
                   log_every=cfg["stability.log_every"], h_diff_every=cfg["stability.h_diff_every"],
                   risk_every=1)
    # the Gram sum of the S-run after each logged batch, for the excitation fit
    if pe_every:
        lam_min_S = _gram_lambda_min(pair, su, hyper, pe_every)

    tag = f"{seed}" if scale == 1.0 else f"{seed}_lam{scale:g}"
    for side, risks in (("S", log.train_risk), ("Sprime", log.train_risk_prime)):
        rows = []
        for k in range(log.k + 1):
            batch = ";".join(str(i) for i in log.batches[k - 1]) if k else ""
            jin = log.j_in_batch[k - 1] if k else False
            rows.append([k, batch, jin, log.delta_l2[k], log.delta_h[k], log.h_diff[k],
                         risks[k - 1] if k else math.nan])
        _write_csv(os.path.join(out, f"stability_{tag}_{side}.csv"), PAIR_COLUMNS, rows)
    res = {"seed": seed, "lambda_scale": scale, "lambda": hyper.lam, "j_star": j,
           "delta_h": [float(v) for v in log.delta_h], "h_diff_final": float(log.h_diff[-1]),
           "lambda_min_gram": lam_min_S, "pe_every": pe_every}
    if cfg["stability.log_every"] == 1 and log.k >= 1:
        res["lemma2_bound"] = stability_to_generalization(log, su.lip, hyper.lam)
    return res


def _gram_lambda_min(pair, su, hyper, every):
    """``lambda_min`` of the accumulated Gram sum along the S-trajectory, every ``every`` steps."""
    vals = []

    def cb(k, w, info, state):
        if (k + 1) % every == 0:
            S = (state.H - hyper.lam * np.eye(state.p)) / hyper.alpha
            vals.append(float(np.linalg.eigvalsh(S)[0]))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        train(pair.S, su.cfg, su.act, su.loss, hyper, su.geom, pair.sampler, su.init, callback=cb)
    return vals


def _run_jobs(fn, args_list, jobs):
    if jobs <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(fn, *a) for a in args_list]
        return [f.result() for f in futs]


def cmd_train(cfg: dict, out: str, jobs: int = 1) -> int:
    os.makedirs(out, exist_ok=True)
    results = _run_jobs(_train_one, [(cfg, s, out) for s in cfg["run.seeds"]], jobs)
    agg = {"seeds": cfg["run.seeds"], "runs": results}
    if all("bound_satisfied" in r for r in results):
        agg["bound_satisfied"] = all(r["bound_satisfied"] for r in results)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(agg, fh, indent=2)
    for r in results:
        for w in r["warnings"]:
            print(f"warning: {w}", file=sys.stderr)
        print(f"seed {r['seed']}: risk {r['initial_risk']:.6g} -> {r['final_risk']:.6g}"
              + (f", bound satisfied: {r['bound_satisfied']}" if "bound_satisfied" in r else ""))
    return EXIT_OK


def _slope(k, v):
    sel = (k > 0) & np.isfinite(v) & (v > 0)
    if sel.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(k[sel]), np.log(v[sel]), 1)[0])


def cmd_stability(cfg: dict, out: str, jobs: int = 1) -> int:
    os.makedirs(out, exist_ok=True)
    scales = cfg["stability.lambda_scales"]
    args = [(cfg, s, sc, out) for sc in scales for s in cfg["run.seeds"]]
    results = _run_jobs(_pair_one, args, jobs)
    agg = {"seeds": cfg["run.seeds"], "lambda_scales": scales, "sweep": []}
    for sc in scales:
        rs = [r for r in results if r["lambda_scale"] == sc]
        D = np.array([r["delta_h"] for r in rs], dtype=float)
        mean = np.nanmean(D, axis=0) if D.shape[0] else D
        ks = np.arange(D.shape[1], dtype=float)
        entry = {
            "lambda_scale": sc,
            "lambda": rs[0]["lambda"],
            "mean_delta_h": [None if not math.isfinite(v) else float(v) for v in mean],
            "final_mean_delta_h": float(mean[-1]),
            "final_se_delta_h": float(np.std(D[:, -1], ddof=1) / math.sqrt(len(rs))) if len(rs) > 1 else None,
            "growth_exponent": _slope(ks, mean),
            "mean_h_diff_final": float(np.mean([r["h_diff_final"] for r in rs])),
        }
        lm = rs[0]["lambda_min_gram"]
        every = rs[0]["pe_every"]
        pe = {"C": None, "q": None, "residual": None}
        if lm:
            try:
                # entry i is the Gram sum after batch t = (i + 1) * every - 1
                ts = np.arange(len(lm)) * every + every - 1
                fit = bd.pe_fit(lm, cfg["stability.pe_burn_in"], cfg["hyper.batch"], iterations=ts)
                pe = {"C": fit.C, "q": fit.q, "residual": fit.residual}
            except ValueError as exc:
                pe["error"] = str(exc)
        entry["pe_fit"] = pe
        agg["sweep"].append(entry)
    finals = [e["final_mean_delta_h"] for e in agg["sweep"]]
    agg["delta_monotone_decreasing_in_lambda"] = bool(all(a > b for a, b in zip(finals, finals[1:])))
    with open(os.path.join(out, "stability_aggregate.json"), "w") as fh:
        json.dump(agg, fh, indent=2)
    for e in agg["sweep"]:
        print(f"lambda x{e['lambda_scale']:g}: final mean ||Delta||_Hbar = {e['final_mean_delta_h']:.6g}, "
              f"growth exponent {e['growth_exponent']:.3f}")
    return EXIT_OK


def cmd_bounds(cfg: dict, out=None, jobs: int = 1) -> int:
    seed = cfg["run.seeds"][0]
    su = build(cfg, seed)
    h, lip = su.hyper, su.lip
    K = max(h.k_max, 1)
    p = su.cfg.num_params
    lines = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        h.check(su.loss, su.data.n)
        mu0 = bd.estimate_mu0(su.data, su.cfg, su.act, su.geom, cfg["bounds.mu0_probes"], seed)
        sc = bd.stability_constants(lip, h.batch, su.loss, mu0)
        worst, _ = bd.prop1_bounds(h, lip, p, K, None)
        t1 = bd.theorem1_bound(h, lip, su.geom, worst, K)
        t2 = bd.theorem2_bound(h, sc, lip, np.full(K, h.lam), K, su.data.n)
    rank = bd.prop1_bounds(h, lip, p, K, min(su.data.n, p))[1]
    lines += [
        f"p                      {p}",
        f"kappa0                 {su.geom.kappa0:.6g}",
        f"zeta0                  {su.geom.zeta0:.6g}",
        f"Lip_phi                {lip.lip_phi:.6g}",
        f"Lip_grad_phi           {lip.lip_grad_phi:.6g}",
        f"Lip_loss               {lip.lip_loss:.6g}",
        f"xi                     {h.xi:.6g}",
        f"gamma                  {h.gamma(lip.lip_phi):.6g}",
        f"prop1_worst_case(k)    {float(worst):.6g}",
        f"prop1_rank_aware(k)    {float(rank):.6g}   (r_bar = min(n, p))",
        f"kappa_km(k)            {float(t1.kappa):.6g}   (log det replaced by its worst case)",
        f"polyak_bound(k)        {float(t1.polyak):.6g}",
        f"thm2_nonexpansivity    {t2.non_expansivity:.6g}",
        f"thm2_precond_mismatch  {t2.preconditioner_mismatch:.6g}",
        f"thm2_grad_mismatch     {t2.gradient_mismatch:.6g}",
        f"thm2_total             {t2.total:.6g}",
        f"epsilon                {sc.epsilon:.6g}",
        f"Lambda                 {sc.Lambda:.6g}   (main-text variant {sc.Lambda_main:.6g})",
        f"mu0_estimate           {mu0:.6g}",
        f"M                      {sc.M:.6g}",
        f"eta/lambda             {h.eta / h.lam:.6g}   (max {1.0 / sc.Lambda:.6g})",
        f"alpha/eta              {h.alpha / h.eta:.6g}   (max {t2.conditions['appendix']['alpha_over_eta_max']:.6g})",
    ]
    if not t2.hypotheses_ok:
        lines.append("FLAG: Theorem 2 hypotheses unmet")
    for w in caught:
        msg = str(w.message)
        if "hypotheses unmet" not in msg:
            lines.append(f"warning: {msg}")
    text = "\n".join(lines)
    print(text)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "bounds.txt"), "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def cmd_teacher_gen(cfg: dict, out: str, jobs: int = 1) -> int:
    if cfg["network.input_dim"] is None:
        raise ConfigError("'network.input_dim' is required for teacher-gen")
    os.makedirs(out, exist_ok=True)
    for seed in cfg["run.seeds"]:
        dseed = seed if cfg["data.seed"] is None else cfg["data.seed"]
        n, nt = cfg["data.n"], cfg["data.n_test"]
        X, y = _teacher_data(cfg, dseed, n + nt)
        if np.any(np.abs(y) > 1.0):
            raise DataError(f"teacher labels exceed 1 in magnitude (max {np.max(np.abs(y)):.4g}); lower v_c_bar/v_W_bar")
        np.savetxt(os.path.join(out, f"teacher_{seed}.csv"), np.column_stack([X[:n], y[:n]]),
                   delimiter=",", fmt="%.17g")
        if nt:
            np.savetxt(os.path.join(out, f"teacher_{seed}_test.csv"), np.column_stack([X[n:], y[n:]]),
                       delimiter=",", fmt="%.17g")
        print(f"wrote {n} samples for seed {seed}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "stability": cmd_stability, "bounds": cmd_bounds, "teacher-gen": cmd_teacher_gen}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sgn-lab", description="Stochastic Gauss-Newton experiments")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("--out", default="sgn_out", help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="seeds run in parallel")
    ap.add_argument("--header", action="store_true", help="dataset CSV has a header line")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.header:
            cfg["data.header"] = True
        return COMMANDS[args.command](cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:  # NumericalAbort and NumericalBreakdown included
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
