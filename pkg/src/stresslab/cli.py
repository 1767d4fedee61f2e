"""``stresslab`` command line: synth, eda, pca, ae, vae and report subcommands."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import diagnostics, reporting
from . import neural_nets as nn
from . import pipelines as pl
from .config import ConfigError, RunConfig, parse_config
from .factor_pca import dump_model_csv
from .market_data import DataError, compute_returns, generate_synthetic, ingest_prices, load_synth_spec, write_prices
from .risk_metrics import PortfolioSpec

log = logging.getLogger("stresslab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PIPELINE, EXIT_IO, EXIT_VERIFY = 0, 2, 3, 4, 5, 6


class PipelineFailure(RuntimeError):
    pass


def _stress_spec(cfg: RunConfig) -> pl.StressSpec:
    if cfg.stress == "none":
        return pl.StressSpec.null(cfg.d)
    if cfg.stress == "single":
        return pl.StressSpec.single(cfg.factor - 1, cfg.d, cfg.k, cfg.sign)
    default = pl.PCA_MULTI_DELTA if cfg.pipeline == "pca" else pl.AE_MULTI_DELTA
    delta = cfg.delta if cfg.delta is not None else default
    if len(delta) != cfg.d:
        raise ConfigError(f"default multi-factor vector has {len(delta)} entries; set delta for d = {cfg.d}")
    return pl.StressSpec.multi(delta)


def _train_config(cfg: RunConfig) -> nn.TrainConfig:
    return nn.TrainConfig(
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        val_fraction=cfg.val_fraction,
        patience=cfg.patience,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
    )


def _crisis(cfg: RunConfig, r, w: int):
    if cfg.crisis == "latest":
        return None
    if cfg.crisis == "auto":
        try:
            pl.crisis_window(r, w, "gfc2008")
            return "gfc2008"
        except DataError:
            return None
    if ":" in cfg.crisis:
        lo, hi = cfg.crisis.split(":", 1)
        return (lo, hi)
    return cfg.crisis


def _run_synth(cfg: RunConfig, out: Path) -> tuple[list, list]:
    spec_path = Path(cfg.synth_spec) if cfg.synth_spec else None
    if spec_path is None:
        with resources.as_file(resources.files("stresslab") / "data" / "demo_synth.toml") as p:
            spec = load_synth_spec(p)
    else:
        spec = load_synth_spec(spec_path)
    table = generate_synthetic(spec)
    write_prices(table, out / "prices.csv", out / "sectors.csv")
    return ([spec_path] if spec_path else []), []


def _run_eda(cfg: RunConfig, r, out: Path) -> list:
    adf = {t: diagnostics.adf_test(r.values[:, j], cfg.max_lag) for j, t in enumerate(r.tickers)}
    garch = {t: diagnostics.garch_fit(r.values[:, j]) for j, t in enumerate(r.tickers)}
    reporting.write_eda(diagnostics.descriptive_stats(r), diagnostics.sector_correlation(r), adf, garch, out)
    return [{"ticker": t, "status": "ok" if g.converged else "not_converged"} for t, g in garch.items()]


def _window_status(results) -> list[dict]:
    return [{"window": x.index, "status": "ok" if x.ok else "skipped", "error": x.error} for x in results]


def _run_stress(cfg: RunConfig, r, out: Path, portfolio: PortfolioSpec) -> list:
    spec = _stress_spec(cfg) if cfg.pipeline != "vae" else None  # the MC pipeline applies no shock
    tcfg = _train_config(cfg)
    w = cfg.window_length

    def dump(i, m):
        if cfg.pipeline == "pca":
            dump_model_csv(m, r.tickers, out / f"pca_model_w{i:04d}.csv")
        else:
            nets = [m.params] if cfg.pipeline == "ae" else m.networks()
            nn.dump_networks(nets, out / f"{cfg.pipeline}_model_w{i:04d}.slnn")

    on_model = dump if cfg.dump_models else None

    if cfg.pipeline == "vae":
        results = pl.run_vae_mc(r, w, cfg.d, cfg.samples, tcfg, portfolio, cfg.stride, cfg.seed,
                                cfg.threads, cfg.kl_weight, on_model)
        reporting.write_mc(results, out)
    else:
        if cfg.pipeline == "pca":
            results = pl.run_pca_stress(r, w, cfg.d, spec, portfolio, cfg.stride, cfg.threads, cfg.confidence, on_model)
        else:
            results = pl.run_ae_stress(r, w, cfg.d, spec, tcfg, portfolio, cfg.stride, cfg.threads, cfg.confidence, on_model)
        reporting.write_window_results(results, out)
        if cfg.attribution:
            view = pl.crisis_window(r, w, _crisis(cfg, r, w))
            ctx = pl.StressContext(portfolio, r.sector_columns(), cfg.confidence)
            rows = pl.attribution_for_window(view, cfg.pipeline, ctx, cfg.d, cfg.k, tcfg, r.tickers)
            reporting.write_attribution(rows, str(view.dates[0]), str(view.dates[-1]), out)
    if not any(x.ok for x in results):
        raise PipelineFailure(f"every window failed; first error: {results[0].error}")
    return _window_status(results)


def run(cfg: RunConfig) -> int:
    out = cfg.out_dir
    started = reporting._timestamp()
    try:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.pipeline == "synth":
            inputs, windows = _run_synth(cfg, out)
        else:
            table = ingest_prices(cfg.prices, cfg.sectors)
            r = compute_returns(table)
            inputs = [cfg.prices, cfg.sectors]
            if cfg.pipeline == "eda":
                windows = _run_eda(cfg, r, out)
            else:
                n = len(r.tickers)
                portfolio = PortfolioSpec(np.asarray(cfg.weights)) if cfg.weights else PortfolioSpec.equal(n)
                windows = _run_stress(cfg, r, out, portfolio)
        reporting.write_manifest(out, cfg.snapshot(), inputs, windows, started)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, ValueError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (PipelineFailure, nn.TrainingDivergence, np.linalg.LinAlgError) as exc:
        log.error("pipeline error: %s", exc)
        return EXIT_PIPELINE
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    log.info("wrote %s", out)
    return EXIT_OK


def report(out: Path) -> int:
    """Verify a run directory against its manifest and print a summary."""
    if not (out / "manifest.json").exists():
        log.error("%s has no manifest.json", out)
        return EXIT_IO
    problems = reporting.verify_manifest(out)
    for p in problems:
        print(f"MISMATCH {p}")
    wr = out / "window_results.csv"
    if wr.exists():
        with open(wr) as fh:
            rows = [row for row in csv.DictReader(fh) if row["status"] == "ok"]
        if rows:
            d_var = np.array([float(x["d_var"]) for x in rows])
            worst = rows[int(np.argmax(d_var))]
            print(f"windows: {len(rows)}  mean d_var: {d_var.mean():.6g}  max d_var: {d_var.max():.6g} "
                  f"(window {worst['window']}, {worst['start_date']}..{worst['end_date']})")
    mc = out / "mc_summary.csv"
    if mc.exists():
        with open(mc) as fh:
            for row in csv.DictReader(fh):
                print(f"window {row['window']} {row['start_date']}..{row['end_date']}: mean {row['mean']} "
                      f"std {row['std']} q05 {row['q05']}")
    print("manifest OK" if not problems else f"{len(problems)} manifest problem(s)")
    return EXIT_OK if not problems else EXIT_VERIFY


# --- argument parsing -----------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--prices", help="price CSV (date,<TICKER>...)")
    p.add_argument("--sectors", help="sector map CSV (ticker,sector)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (falls back to $STRESSLAB_SEED)")
    p.add_argument("--threads", type=int, help="worker threads across windows")
    p.add_argument("-v", "--verbose", action="store_true")


def _stress_opts(p: argparse.ArgumentParser, neural: bool) -> None:
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--d", type=int, help="latent dimension")
    p.add_argument("--weights", type=_floats, help="portfolio weights, comma separated")
    p.add_argument("--dump-models", dest="dump_models", action="store_const", const=True)
    if neural:
        p.add_argument("--epochs", dest="max_epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--lr", dest="learning_rate", type=float)
        p.add_argument("--val-fraction", dest="val_fraction", type=float)


def _shock_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stress", choices=["single", "multi", "none"])
    p.add_argument("--factor", type=int, help="1-based latent index for --stress single")
    p.add_argument("--k", type=float, help="shock size in standard deviations")
    p.add_argument("--sign", type=int, choices=[1, -1])
    p.add_argument("--delta", type=_floats, help="multi-factor sigma multiples, comma separated")
    p.add_argument("--confidence", type=float)
    p.add_argument("--crisis", help="attribution window: auto, latest, gfc2008, covid2020 or START:END")
    p.add_argument("--no-attribution", dest="attribution", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stresslab", description="Latent-factor portfolio stress testing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic factor/GARCH market")
    _common(p)
    p.add_argument("--spec", dest="synth_spec", help="synthetic market TOML")

    p = sub.add_parser("eda", help="descriptive stats, sector correlation, ADF and GARCH(1,1)")
    _common(p)
    p.add_argument("--max-lag", dest="max_lag", type=int)

    p = sub.add_parser("pca", help="rolling PCA stress test")
    _common(p)
    _stress_opts(p, neural=False)
    _shock_opts(p)

    p = sub.add_parser("ae", help="rolling autoencoder stress test")
    _common(p)
    _stress_opts(p, neural=True)
    _shock_opts(p)

    p = sub.add_parser("vae", help="rolling VAE Monte Carlo")
    _common(p)
    _stress_opts(p, neural=True)
    p.add_argument("--samples", type=int, help="Monte Carlo draws per window")
    p.add_argument("--kl-weight", dest="kl_weight", type=float)

    p = sub.add_parser("report", help="verify a run directory and summarize it")
    p.add_argument("dir", type=Path, nargs="?", default=Path("out/pca"))
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "dir"}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        return report(args.dir)
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    overrides["pipeline"] = args.command
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"stresslab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
