"""Command-line surface: gen / train / eval / predict / gradcheck / ablate.

Every configuration key can come from a flat `key = value` file (--config)
or a `--key value` flag, flags winning. Errors exit nonzero with a single
`error: ...` line on stderr.

BLAS thread pools are pinned to one thread before numpy loads so that the
`--threads` flag (which only fans out dataset generation across worker
threads) can never change numerical results.
"""

from __future__ import annotations

import json
import os
import sys

_USAGE = """usage: lgmix <command> [--config FILE] [--key value ...]

commands:
  gen        generate a dataset        (requires --pde and --out)
  train      train a model             (requires --data; writes --out checkpoint)
  eval       evaluate a checkpoint     (requires --checkpoint and --data)
  predict    autoregressive rollout    (requires --checkpoint, --data; --steps N)
  gradcheck  finite-difference audit of every parameter gradient
  ablate     train variants under one seed/budget and tabulate test metrics

global keys: --seed N, --precision f32|f64, --threads N (never changes results)
"""


def main(argv=None) -> int:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    args = sys.argv[1:] if argv is None else list(argv)
    if not args or args[0] in ("-h", "--help", "help"):
        print(_USAGE, end="")
        return 0
    try:
        return _dispatch(args[0], args[1:])
    except Exception as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1


def _parse_tokens(tokens: list[str]) -> tuple[str | None, bool, dict[str, str]]:
    """Split argv into (--config path, --json flag, {key: value} overrides)."""
    config_path = None
    json_flag = False
    overrides: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ValueError(f"expected a --key, got {tok!r}")
        key = tok[2:].replace("-", "_")
        if key == "json":
            json_flag = True
            i += 1
            continue
        if i + 1 >= len(tokens):
            raise ValueError(f"flag {tok!r} is missing a value")
        value = tokens[i + 1]
        if key == "config":
            config_path = value
        else:
            overrides[key] = value
        i += 2
    return config_path, json_flag, overrides


def _dispatch(command: str, tokens: list[str]) -> int:
    config_path, json_flag, overrides = _parse_tokens(tokens)
    handlers = {
        "gen": lambda: _cmd_gen(config_path, overrides),
        "train": lambda: _cmd_train(config_path, overrides),
        "eval": lambda: _cmd_eval(config_path, overrides, json_flag),
        "predict": lambda: _cmd_predict(config_path, overrides),
        "gradcheck": lambda: _cmd_gradcheck(config_path, overrides),
        "ablate": lambda: _cmd_ablate(config_path, overrides, json_flag),
    }
    if command not in handlers:
        raise ValueError(f"unknown command {command!r} (try: {', '.join(handlers)})")
    return handlers[command]()


# --- helpers ------------------------------------------------------------------


def _build_fresh(cfg, ds):
    from .config import ConfigError
    from .model import ModelConfig, build_model

    d_u, _ = ds.model_channels()
    ndim = len(ds.spatial)
    modes = (cfg.modes,) if ndim == 1 else (cfg.modes, cfg.modes2)
    history = cfg.history
    if ds.is_pairs and history != 0:
        raise ConfigError("history must be 0 for coefficient->solution datasets")
    model_cfg = ModelConfig(
        d_u=d_u, spatial_ndim=ndim, d_m=cfg.d_m, depth=cfg.depth,
        n_linear=cfg.n_linear, n_nonlinear=cfg.n_nonlinear, modes=modes,
        history=history, activation=cfg.activation,
        final_activation=cfg.final_activation, spectral_diag=cfg.spectral_diag,
        consistency_target=cfg.consistency_target, variant=cfg.ablation,
    )
    return model_cfg, build_model(model_cfg, cfg.seed, cfg.precision)


def _restore(checkpoint_path: str):
    from . import serialization as ser
    from .model import ModelConfig, build_model

    ck = ser.load_checkpoint(checkpoint_path)
    model_cfg = ModelConfig.from_dict(ck["model_config"])
    model = build_model(model_cfg, ck["run_config"].get("seed", 0), ck["precision"])
    ser.restore_model_arrays(model, ck["arrays"])
    norm = ser.norm_from_arrays(ck["arrays"])
    return ck, model_cfg, model, norm


def _merged_config(base_dict: dict | None, config_path: str | None, overrides: dict[str, str]):
    from .config import RunConfig, apply_pairs, parse_flat_file

    cfg = RunConfig(**base_dict) if base_dict else RunConfig()
    if config_path:
        apply_pairs(cfg, parse_flat_file(config_path))
    apply_pairs(cfg, overrides)
    return cfg


def _print_table(rows: list[tuple], headers: tuple) -> None:
    cells = [tuple(str(c) for c in row) for row in [headers, *rows]]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    for r, row in enumerate(cells):
        print("  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip())
        if r == 0:
            print("  ".join("-" * w for w in widths))


# --- commands -----------------------------------------------------------------


def _cmd_gen(config_path: str | None, overrides: dict[str, str]) -> int:
    from .config import ConfigError, load_traj_spec
    from .dataset import TrajectoryDataset, assign_split
    from .serialization import save_dataset
    from .solvers import generate

    overrides = dict(overrides)
    out = overrides.pop("out", "")
    threads = int(overrides.pop("threads", "1"))
    if not out:
        raise ConfigError("dataset generation requires --out")
    spec = load_traj_spec(config_path, overrides)
    data = generate(spec, threads=threads)
    channels = ["a", "u"] if spec.pde == "darcy2d" else ["u"]
    ds = TrajectoryDataset(
        data=data, pde=spec.pde, channel_names=channels,
        split=assign_split(spec.n_traj, spec.split_frac), spec_echo=spec.to_dict(),
    )
    save_dataset(out, ds)
    n_train = ds.split.count("train")
    print(f"wrote {out}: pde={spec.pde} shape={data.shape} "
          f"split={n_train}/{len(ds.split) - n_train}")
    return 0


def _cmd_train(config_path: str | None, overrides: dict[str, str]) -> int:
    from . import serialization as ser
    from .training import AdamW, LossWeights, train

    resumed = None
    cfg = _merged_config(None, config_path, overrides)
    if cfg.resume:
        resumed = ser.load_checkpoint(cfg.resume)
        cfg = _merged_config(resumed["run_config"], config_path, overrides)
    cfg.validate(need_data=True)
    ds = ser.load_dataset(cfg.data)

    if resumed is not None:
        _, model_cfg, model, norm = _restore(cfg.resume)
        optimizer = AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        optimizer.load_state_arrays(resumed["arrays"], resumed["optimizer_step"])
        start_epoch = resumed["epoch"]
    else:
        model_cfg, model = _build_fresh(cfg, ds)
        norm = ds.fit_norm_stats()
        optimizer = None
        start_epoch = 0
    model.validate_spatial(ds.spatial)  # reject bad grids before training starts

    train_in, train_tg = ds.window_pairs("train", model_cfg.history, norm)
    test_in, test_tg = ds.window_pairs("test", model_cfg.history, norm)

    out = cfg.out or "checkpoint.dmxc"
    log_path = cfg.log or out + ".log"
    with open(log_path, "a" if resumed is not None else "w", encoding="utf-8") as logf:
        def emit(line: str) -> None:
            print(line)
            logf.write(line + "\n")

        history, optimizer = train(
            model, train_in, train_tg, test_in, test_tg,
            epochs=cfg.epochs, batch_size=cfg.batch, lr=cfg.lr, gamma=cfg.gamma,
            step_size=cfg.step_size, weight_decay=cfg.weight_decay,
            weights=LossWeights(cfg.alpha, cfg.beta), metric=cfg.metric,
            seed=cfg.seed, start_epoch=start_epoch, optimizer=optimizer,
            log_line=emit,
        )

    ser.save_checkpoint(
        out,
        model_config=model_cfg.to_dict(), precision=model.precision,
        run_config=cfg.to_dict(), epoch=start_epoch + cfg.epochs,
        optimizer_step=optimizer.step_count,
        arrays=ser.checkpoint_arrays(model, optimizer, norm),
    )
    print(f"wrote {out} (epoch {start_epoch + cfg.epochs}, "
          f"{model.parameter_count()} parameters)")
    return 0


def _eval_value(model, ds, norm, history: int, metric: str, batch: int,
                split: str, denormalized: bool) -> tuple[float, int]:
    from .training import evaluate

    inputs, targets = ds.window_pairs(split, history, norm)
    denorm = None
    if denormalized:
        idx = [1] if ds.is_pairs else list(range(len(ds.channel_names)))
        denorm = norm.select(idx)
    value = evaluate(model, inputs, targets, metric, batch, denorm_stats=denorm)
    return value, inputs.shape[0]


def _cmd_eval(config_path: str | None, overrides: dict[str, str], json_flag: bool) -> int:
    from . import serialization as ser
    from .config import ConfigError

    cfg = _merged_config(None, config_path, overrides)
    if not cfg.checkpoint:
        raise ConfigError("eval requires --checkpoint")
    ck = ser.load_checkpoint(cfg.checkpoint)
    cfg = _merged_config(ck["run_config"], config_path, overrides)
    cfg.validate(need_data=True)
    _, model_cfg, model, norm = _restore(cfg.checkpoint)
    ds = ser.load_dataset(cfg.data)
    value, n = _eval_value(model, ds, norm, model_cfg.history, cfg.metric,
                           cfg.batch, cfg.split, cfg.metric_denormalized)
    if json_flag:
        print(json.dumps({
            "split": cfg.split, "metric": cfg.metric, "value": value,
            "n_samples": n, "denormalized": cfg.metric_denormalized,
            "resolution": list(ds.spatial),
        }, sort_keys=True))
    else:
        _print_table(
            [(cfg.split, cfg.metric, f"{value:.6e}", n, "x".join(map(str, ds.spatial)))],
            ("split", "metric", "value", "samples", "resolution"),
        )
    return 0


def _cmd_predict(config_path: str | None, overrides: dict[str, str]) -> int:
    import numpy as np

    from . import serialization as ser
    from .config import ConfigError
    from .training import rollout

    cfg = _merged_config(None, config_path, overrides)
    if not cfg.checkpoint:
        raise ConfigError("predict requires --checkpoint")
    ck = ser.load_checkpoint(cfg.checkpoint)
    cfg = _merged_config(ck["run_config"], config_path, overrides)
    cfg.validate(need_data=True)
    if cfg.steps < 0:
        raise ConfigError("steps must be >= 0")
    _, model_cfg, model, norm = _restore(cfg.checkpoint)
    ds = ser.load_dataset(cfg.data)
    if ds.is_pairs:
        raise ConfigError("predict requires a time-dependent dataset")
    idx = ds.indices(cfg.split)
    if not idx:
        raise ConfigError(f"dataset has no {cfg.split!r} trajectories")
    traj = norm.normalize(ds.data[idx[0]], channel_axis=1)
    k = model_cfg.history
    if traj.shape[0] < k + 1:
        raise ConfigError(f"trajectory too short for history {k}")
    window = np.concatenate([traj[j] for j in range(k + 1)], axis=0)
    frames = rollout(model, window, cfg.steps)
    frames = norm.denormalize(frames, channel_axis=1)
    out = cfg.out or "prediction.dmxd"
    ser.save_trajectory(out, frames, meta={
        "pde": ds.pde, "steps": cfg.steps, "source": cfg.data,
        "trajectory_index": idx[0], "history": k,
    })
    print(f"wrote {out}: {cfg.steps} predicted frames")
    return 0


def _cmd_gradcheck(config_path: str | None, overrides: dict[str, str]) -> int:
    import numpy as np

    from .autodiff import grad_check
    from .model import ModelConfig, build_model
    from .training import LossWeights, compute_loss

    cfg = _merged_config(None, config_path, overrides)
    # the finite-difference audit is only meaningful in f64
    model_cfg = ModelConfig(
        d_u=1, spatial_ndim=1, d_m=cfg.d_m, depth=cfg.depth,
        n_linear=cfg.n_linear, n_nonlinear=cfg.n_nonlinear, modes=(cfg.modes,),
        history=cfg.history, activation=cfg.activation,
        final_activation=cfg.final_activation, spectral_diag=cfg.spectral_diag,
        consistency_target=cfg.consistency_target, variant=cfg.ablation,
    )
    model = build_model(model_cfg, cfg.seed, "f64")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(2,))))
    window = rng.uniform(-1.0, 1.0, size=(2, model_cfg.in_channels, cfg.grid))
    target = rng.uniform(-1.0, 1.0, size=(2, model_cfg.d_u, cfg.grid))
    weights = LossWeights(cfg.alpha, cfg.beta)

    def loss_fn():
        return compute_loss(model, window, target, weights, cfg.metric)

    report = grad_check(model.parameters(), loss_fn, tolerance=cfg.tolerance)
    print(report.format())
    return 0


def _cmd_ablate(config_path: str | None, overrides: dict[str, str], json_flag: bool) -> int:
    from . import serialization as ser
    from .config import ConfigError
    from .training import LossWeights, evaluate, train

    cfg = _merged_config(None, config_path, overrides)
    cfg.validate(need_data=True)
    ds = ser.load_dataset(cfg.data)
    variants = [v.strip() for v in cfg.variants.split(",") if v.strip()]
    if not variants:
        raise ConfigError("ablate requires at least one variant")
    norm = ds.fit_norm_stats()
    rows = []
    results = {}
    for variant in variants:
        vcfg = _merged_config(cfg.to_dict(), None, {"ablation": variant})
        model_cfg, model = _build_fresh(vcfg, ds)
        train_in, train_tg = ds.window_pairs("train", model_cfg.history, norm)
        test_in, test_tg = ds.window_pairs("test", model_cfg.history, norm)
        train(model, train_in, train_tg, test_in, test_tg,
              epochs=cfg.epochs, batch_size=cfg.batch, lr=cfg.lr, gamma=cfg.gamma,
              step_size=cfg.step_size, weight_decay=cfg.weight_decay,
              weights=LossWeights(cfg.alpha, cfg.beta), metric=cfg.metric,
              seed=cfg.seed)
        value = evaluate(model, test_in, test_tg, cfg.metric, cfg.batch)
        rows.append((variant, model.parameter_count(), f"{value:.6e}"))
        results[variant] = value
    if json_flag:
        print(json.dumps({"metric": cfg.metric, "epochs": cfg.epochs,
                          "seed": cfg.seed, "results": results}, sort_keys=True))
    else:
        _print_table(rows, ("variant", "parameters", f"test_{cfg.metric}"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
