"""Config-driven experiment runner.

Subcommands reproduce the desk-scale experiments end to end: channel checks
against Monte-Carlo oracles, visible-space audits, measurement campaigns,
bias-variance scans, lattice-gauge shot budgets, and phase classification.
Configs are flat ``key = value`` text; every artifact carries a metadata
header (seed, config hash, versions) and is byte-reproducible for a fixed
seed and config, independent of the thread count.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import pathlib
import sys

import numpy as np
import scipy

from . import __version__, biasvar, channels, ensembles, estimator, lgt
from . import phases, qcore, visible
from .errors import ConfigError, ReshadowError

CHANNEL_CHUNK = 20_000


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _float_list(text: str) -> tuple:
    if not text:
        return ()
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _int_list(text: str) -> tuple:
    if not text:
        return ()
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def coerce_config(raw: dict, schema: dict, subcommand: str) -> dict:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {subcommand}: "
                          + ", ".join(unknown))
    cfg = {}
    for key, (caster, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = caster(raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({exc})")
        else:
            cfg[key] = default
    return cfg


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def metadata_for(seed: int, cfg: dict) -> dict:
    return {
        "seed": seed,
        "config_hash": config_hash(cfg),
        "versions": f"reshadow={__version__} numpy={np.__version__} "
                    f"scipy={scipy.__version__}",
    }


def _write(out_dir: pathlib.Path, name: str, content: str) -> None:
    path = out_dir / name
    path.write_text(content)
    print(f"wrote {path}")


def _report_csv(rows: list, metadata: dict) -> str:
    lines = [f"# {k}={v}" for k, v in metadata.items()]
    lines.append("check,observed,reference,tolerance,pass")
    for name, observed, reference, tol, ok in rows:
        lines.append(f"{name},{observed!r},{reference!r},{tol!r},{ok}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Observable / state builders shared by estimate and bias-scan
# ---------------------------------------------------------------------------


def build_observable(spec: str, g: float, alpha: float) -> np.ndarray:
    """Named preset ('link', 'triangle') or a Pauli-sum like '0.5*XX+1*ZZ'."""
    name = spec.strip().lower()
    if name == "link":
        return lgt.link_local(g, alpha)
    if name == "triangle":
        return lgt.triangle_local(g)
    total = None
    for term in spec.replace("-", "+-").split("+"):
        term = term.strip()
        if not term:
            continue
        if "*" in term:
            coeff_text, word = term.split("*", 1)
            coeff = float(coeff_text)
        elif term.startswith("-"):
            coeff, word = -1.0, term[1:]
        else:
            coeff, word = 1.0, term
        word = word.strip().upper()
        dense = coeff * qcore.PauliString.from_word(word).to_dense()
        total = dense if total is None else total + dense
    if total is None:
        raise ConfigError(f"empty observable spec {spec!r}")
    return total


def build_state(kind: str, n: int) -> np.ndarray:
    name = kind.strip().lower()
    if name == "zero":
        return qcore.basis_state(n, 0)
    if name == "mixed":
        return np.eye(1 << n, dtype=complex) / (1 << n)
    if name == "ghz":
        psi = qcore.basis_state(n, 0) + qcore.basis_state(n, (1 << n) - 1)
        return psi / np.sqrt(2.0)
    raise ConfigError(f"unknown state {kind!r} (zero, mixed, ghz)")


def build_ensemble(kind: str, n: int, members: int, ensemble_seed: int,
                   targets=()) -> ensembles.Ensemble:
    name = kind.strip().lower()
    if name == "global_su2":
        return ensembles.global_su2(n)
    if name == "global_cl2":
        return ensembles.global_cl2(n)
    if name == "local_clifford":
        return ensembles.local_clifford(n)
    if name == "subsample_su2":
        rng = np.random.default_rng(ensemble_seed)
        return ensembles.subsample_su2(members, rng, targets=targets, n=n)
    raise ConfigError(f"unknown ensemble {kind!r}")


def solve_kernel(obs: np.ndarray, ens: ensembles.Ensemble) -> estimator.KernelTable:
    if ens.kind in (ensembles.KIND_GLOBAL_SU2, ensembles.KIND_GLOBAL_CL2):
        return estimator.kernel_cs(obs, ens)
    return estimator.kernel_least_squares(obs, ens)


# ---------------------------------------------------------------------------
# channel-check
# ---------------------------------------------------------------------------


def _mc_msu2(a: np.ndarray, samples: int, rng) -> tuple:
    """Monte-Carlo average of sum_b <b|VaV'|b> V'|b><b|V over Haar SU(2)."""
    n = qcore.num_qubits(a)
    dim = 1 << n
    s1 = np.zeros((dim, dim), dtype=complex)
    s2 = np.zeros((dim, dim, 2))
    done = 0
    while done < samples:
        count = min(CHANNEL_CHUNK, samples - done)
        thetas, _, psis = ensembles.haar_su2_angles(count, rng)
        u = estimator._su2_rotations(thetas, psis)
        big = u
        for _ in range(n - 1):
            big = np.einsum("nab,ncd->nacbd", big, u).reshape(
                count, big.shape[1] * 2, big.shape[2] * 2)
        diag = np.einsum("nbi,ij,nbj->nb", big, a, big.conj())
        contrib = np.einsum("nb,nbi,nbj->nij", diag, big.conj(), big)
        s1 += contrib.sum(axis=0)
        s2[..., 0] += (contrib.real**2).sum(axis=0)
        s2[..., 1] += (contrib.imag**2).sum(axis=0)
        done += count
    mean = s1 / samples
    var_r = s2[..., 0] / samples - mean.real**2
    var_i = s2[..., 1] / samples - mean.imag**2
    se = np.sqrt(np.clip(var_r + var_i, 0.0, None) / samples)
    return mean, se


def cmd_channel_check(cfg, seed, out_dir, threads) -> int:
    rng = np.random.default_rng(seed)
    rows = []

    z = qcore.PauliString.from_word("Z").to_dense()
    dev = np.abs(channels.apply_msu2(z) - z / 3.0).max()
    rows.append(("msu2_single_qubit_z_eigenvalue", float(dev), 0.0, 1e-12,
                 dev < 1e-12))

    xx = qcore.PauliString.from_word("XX").to_dense()
    dev = np.abs(channels.apply_mcl2(xx) - xx / 3.0).max()
    rows.append(("mcl2_xx_eigenvalue", float(dev), 0.0, 1e-12, dev < 1e-12))

    n = cfg["n"]
    g = rng.normal(size=(1 << n, 1 << n)) + 1j * rng.normal(size=(1 << n, 1 << n))
    a = 0.5 * (g + g.conj().T)
    mc, se = _mc_msu2(a, cfg["mc_samples"], rng)
    exact = channels.apply_msu2(a)
    ratio = np.abs(exact - mc) / np.maximum(se, 1e-30)
    rows.append((f"msu2_vs_monte_carlo_n{n}_max_sigma", float(ratio.max()),
                 0.0, 5.0, bool(ratio.max() < 5.0)))

    _write(out_dir, "channel_check.csv",
           _report_csv(rows, metadata_for(seed, cfg)))
    return 0 if all(r[4] for r in rows) else 3


# ---------------------------------------------------------------------------
# basis-audit
# ---------------------------------------------------------------------------


def cmd_basis_audit(cfg, seed, out_dir, threads) -> int:
    rng = np.random.default_rng(seed)
    rows = []
    for m in range(1, 5):
        expected = visible.expected_set_count(m)
        got = len(visible.enumerate_sets(m))
        rows.append((f"set_count_n{m}", got, expected, 0, got == expected))

    n = cfg["n"]
    sets_n = visible.enumerate_sets(n)
    mats = [visible.build_B(s) for s in sets_n]
    gram = np.array([[np.trace(a.conj().T @ b).real for b in mats] for a in mats])
    dev = np.abs(gram - np.eye(len(mats))).max()
    rows.append((f"orthonormal_n{n}", float(dev), 0.0, 1e-10, dev < 1e-10))

    worst = 0.0
    perps = [visible.build_Bperp(s, k)
             for s in sets_n if s.size > 1 for k in range(1, s.size)]
    for _ in range(cfg["draws"]):
        theta, phi, psi = (float(x[0]) for x in ensembles.haar_su2_angles(1, rng))
        v = ensembles.realize(ensembles.SampledUnitary(
            ensembles.KIND_GLOBAL_SU2, n, theta=theta, phi=phi, psi=psi))
        b = int(rng.integers(1 << n))
        row = v[b, :]
        for bp in perps:
            worst = max(worst, abs(row.conj() @ (bp @ row)))
    rows.append((f"invisibility_n{n}_{cfg['draws']}draws", float(worst), 0.0,
                 1e-10, worst < 1e-10))

    _write(out_dir, "basis_audit.csv", _report_csv(rows, metadata_for(seed, cfg)))
    return 0 if all(r[4] for r in rows) else 3


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def cmd_estimate(cfg, seed, out_dir, threads) -> int:
    rng = np.random.default_rng(seed)
    obs = build_observable(cfg["observable"], cfg["g"], cfg["alpha"])
    n = qcore.num_qubits(obs)
    if cfg["n"] and cfg["n"] != n:
        raise ConfigError(f"observable acts on {n} qubits, config says {cfg['n']}")
    ens = build_ensemble(cfg["ensemble"], n, cfg["members"],
                         cfg["ensemble_seed"], targets=(obs,))
    kernel = solve_kernel(obs, ens)
    state = build_state(cfg["state"], n)
    records = estimator.run_campaign(state, ens, cfg["shots"], rng,
                                     threads=threads)
    value = estimator.estimate(records, kernel, method=cfg["method"],
                               m_observables=cfg["m_observables"],
                               delta=cfg["delta"])
    rho = state if state.ndim == 2 else np.outer(state, state.conj())
    meta = metadata_for(seed, cfg)
    summary = dict(meta)
    summary.update({
        "estimate": value,
        "exact": float(np.trace(rho @ obs).real),
        "var_max_bound": estimator.var_max_bound(kernel),
        "shots": cfg["shots"],
        "method": cfg["method"],
        "batches": estimator.default_batches(cfg["m_observables"], cfg["delta"]),
        "ensemble": ens.kind,
    })
    _write(out_dir, "records.csv", estimator.records_to_csv(records, meta))
    _write(out_dir, "estimate.json",
           json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"estimate {value:+.6f} (exact {summary['exact']:+.6f})")
    return 0


# ---------------------------------------------------------------------------
# bias-scan
# ---------------------------------------------------------------------------


def cmd_bias_scan(cfg, seed, out_dir, threads) -> int:
    obs = build_observable(cfg["observable"], cfg["g"], cfg["alpha"])
    n = qcore.num_qubits(obs)
    ens = build_ensemble(cfg["ensemble"], n, cfg["members"],
                         cfg["ensemble_seed"], targets=(obs,))
    if cfg["mode"] == "lambda":
        grid = cfg["lambda_grid"] or tuple(biasvar.default_lambda_grid())
        rows = biasvar.ridge_scan(obs, ens, grid, cfg["shots"],
                                  cfg["m_observables"], cfg["delta"])
    elif cfg["mode"] == "alpha":
        grid = cfg["alpha_grid"] or tuple(np.logspace(-2, 2, 9))
        rows = list(biasvar.alpha_scan(obs, ens, cfg["shots"],
                                       cfg["m_observables"], cfg["delta"],
                                       grid).scan)
    else:
        raise ConfigError(f"unknown mode {cfg['mode']!r} (lambda, alpha)")
    csv = biasvar.scan_to_csv(rows, cfg["epsilon"], cfg["delta"],
                              cfg["m_observables"], metadata_for(seed, cfg),
                              q_variant=cfg["q_variant"])
    _write(out_dir, "bias_scan.csv", csv)
    best = min(rows, key=lambda r: r.error_bound)
    print(f"best {cfg['mode']}={best.lambda_or_alpha:g} "
          f"error_bound={best.error_bound:.6f} bias={best.bias:.6f}")
    return 0


# ---------------------------------------------------------------------------
# lgt-energy
# ---------------------------------------------------------------------------


def cmd_lgt_energy(cfg, seed, out_dir, threads) -> int:
    lats = [lgt.TriLattice(t, cfg["s_max"]) for t in cfg["triangles"]]
    link = lgt.link_local(cfg["g"], cfg["alpha"])
    tri = lgt.triangle_local(cfg["g"])
    ens = build_ensemble(cfg["ensemble"], 3, cfg["members"],
                         cfg["ensemble_seed"], targets=(link, tri))
    rows = lgt.energy_budget_comparison(
        lats, ens, epsilon=cfg["epsilon"], delta=cfg["delta"], g=cfg["g"],
        alpha=cfg["alpha"], q_variant=cfg["q_variant"])
    _write(out_dir, "lgt_budget.csv",
           lgt.budget_to_csv(rows, metadata_for(seed, cfg)))
    for r in rows:
        print(f"{r.strategy:10s} n={r.n_qubits:3d} M={r.m_terms:3d} "
              f"N_shots={r.n_shots}")
    return 0


# ---------------------------------------------------------------------------
# phase-classify
# ---------------------------------------------------------------------------


def cmd_phase_classify(cfg, seed, out_dir, threads) -> int:
    rng = np.random.default_rng(seed)
    res = phases.run_phase_classification(
        L=cfg["L"], depth=cfg["depth"], states_per_phase=cfg["states_per_phase"],
        n_rp=cfg["n_rp"], n_su2=cfg["n_su2"], rng=rng, threads=threads,
        lam=cfg["lam"] if cfg["lam"] > 0 else None)
    margin = phases.separation_margin(res.coords, res.labels)
    meta = metadata_for(seed, cfg)
    meta["separation_margin"] = float(margin)
    _write(out_dir, "phase_points.json", phases.result_to_json(res, meta))
    _write(out_dir, "phase_kernel.csv", phases.kernel_to_csv(res.kernel, meta))
    print(f"depth {cfg['depth']}: margin {margin:+.4f} "
          f"({'separable' if margin > 0 else 'overlapping'})")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


SCHEMAS = {
    "channel-check": {
        "n": (int, 2),
        "mc_samples": (int, 200_000),
    },
    "basis-audit": {
        "n": (int, 2),
        "draws": (int, 200),
    },
    "estimate": {
        "observable": (str, "link"),
        "g": (float, 1.0),
        "alpha": (float, 1.0),
        "n": (int, 0),
        "state": (str, "zero"),
        "ensemble": (str, "subsample_su2"),
        "members": (int, 25),
        "ensemble_seed": (int, 0),
        "shots": (int, 10_000),
        "method": (str, "median_of_means"),
        "m_observables": (int, 1),
        "epsilon": (float, 0.1),
        "delta": (float, 0.1),
    },
    "bias-scan": {
        "observable": (str, "link"),
        "g": (float, 1.0),
        "alpha": (float, 1.0),
        "ensemble": (str, "subsample_su2"),
        "members": (int, 6),
        "ensemble_seed": (int, 0),
        "mode": (str, "lambda"),
        "lambda_grid": (_float_list, ()),
        "alpha_grid": (_float_list, ()),
        "shots": (int, 1000),
        "m_observables": (int, 1),
        "epsilon": (float, 0.1),
        "delta": (float, 0.1),
        "q_variant": (str, "theorem"),
    },
    "lgt-energy": {
        "triangles": (_int_list, (2,)),
        "s_max": (int, 2),
        "ensemble": (str, "subsample_su2"),
        "members": (int, 25),
        "ensemble_seed": (int, 1),
        "epsilon": (float, 0.1),
        "delta": (float, 0.1),
        "g": (float, 1.0),
        "alpha": (float, 1.0),
        "q_variant": (str, "max_abs_k"),
    },
    "phase-classify": {
        "L": (int, 2),
        "depth": (int, 0),
        "states_per_phase": (int, 10),
        "n_rp": (int, 10_000),
        "n_su2": (int, 1000),
        "lam": (float, 0.0),
    },
}

HANDLERS = {
    "channel-check": cmd_channel_check,
    "basis-audit": cmd_basis_audit,
    "estimate": cmd_estimate,
    "bias-scan": cmd_bias_scan,
    "lgt-energy": cmd_lgt_energy,
    "phase-classify": cmd_phase_classify,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="reshadow", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        raw = {}
        if args.config is not None:
            path = pathlib.Path(args.config)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            raw = parse_config_text(path.read_text())
        cfg = coerce_config(raw, SCHEMAS[args.subcommand], args.subcommand)
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        out_dir = pathlib.Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.subcommand](cfg, args.seed, out_dir, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ReshadowError, ValueError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
