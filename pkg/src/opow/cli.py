"""Command-line entry point.

Subcommands: heavyhash, mine, verify, chainsim, attack, photonic, econ.
Everything but `heavyhash` is driven by a key=value config file; results go
to --output (default stdout) as one JSON header record followed by one
record per result line.

Exit codes: 0 success, 1 verification failure, 2 configuration/usage error,
3 internal numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

import numpy as np

from . import configio, econ, netsim, photonic
from .configio import (
    ConfigError,
    as_bool,
    as_float,
    as_float_list,
    as_hex,
    as_int,
    as_str,
)
from .heavyhash import (
    DIGEST_SIZE,
    HeavyHashParams,
    generate_matrix,
    heavyhash,
    identity_matrix,
)
from .pow import (
    BlockHeader,
    RetargetParams,
    TARGET_SPACE,
    compact_from_target,
    deserialize_header,
    meets_target,
    mine,
    serialize_header,
    simulate_retarget_chain,
    target_from_compact,
    window_mean_intervals,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_ZERO_SEED = bytes(DIGEST_SIZE)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opow",
        description="Optical proof-of-work toolbox: hashing, mining, chain "
                    "and attack simulation, photonic emulation, economics.")
    parser.add_argument("--seed", type=int, default=0,
                        help="base seed for every randomized run")
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--output", default="-",
                        help="result file, '-' for stdout")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for sharded workloads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("heavyhash", help="hash a hex string")
    p.add_argument("input_hex", help="input bytes as hex ('' for empty)")
    p.add_argument("--matrix-seed", default=_ZERO_SEED.hex(),
                   help="32-byte matrix seed as hex")
    p.add_argument("--identity", action="store_true",
                   help="use the identity matrix (double SHA-256)")
    p.add_argument("--rounds", type=int, default=1)

    for name, help_text in [
            ("mine", "search a nonce range for a winning header"),
            ("verify", "re-check the proof of work of a header"),
            ("chainsim", "constant-hashrate retarget convergence run"),
            ("attack", "double-spend race Monte Carlo"),
            ("photonic", "analog weighting noise sweep"),
            ("econ", "CAPEX/OPEX economics tables")]:
        sub.add_parser(name, help=help_text)
    return parser


def _open_output(path: str):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _require_config(args) -> str:
    if not args.config:
        raise ConfigError(f"subcommand {args.command!r} needs --config")
    return args.config


def _emit(args, config: dict, records: list[dict]) -> None:
    fp, owned = _open_output(args.output)
    try:
        configio.write_records(
            fp, [configio.header_record(args.command, args.seed, config)] + records)
    finally:
        if owned:
            fp.close()


# ---------------------------------------------------------------------------
# subcommands


def _cmd_heavyhash(args) -> int:
    try:
        data = bytes.fromhex(args.input_hex)
        seed = bytes.fromhex(args.matrix_seed)
    except ValueError as exc:
        raise ConfigError(f"invalid hex: {exc}") from exc
    if len(seed) != DIGEST_SIZE:
        raise ConfigError("matrix seed must be 32 bytes of hex")
    matrix = identity_matrix() if args.identity else generate_matrix(seed)
    params = HeavyHashParams(rounds=args.rounds)
    digest = heavyhash(params, matrix, data)
    fp, owned = _open_output(args.output)
    try:
        fp.write(digest.hex() + "\n")
    finally:
        if owned:
            fp.close()
    return EXIT_OK


_MINE_SCHEMA = {
    "version": as_int,
    "parent_hash": as_hex(32),
    "payload_commitment": as_hex(32),
    "timestamp": as_int,
    "target_bits": as_int,
    "target_exponent": as_int,
    "matrix_seed": as_hex(32),
    "nonce_start": as_int,
    "nonce_count": as_int,
    "rounds": as_int,
}


def _resolve_target(cfg: dict) -> int:
    has_bits = "target_bits" in cfg
    has_exp = "target_exponent" in cfg
    if has_bits == has_exp:
        raise ConfigError("set exactly one of target_bits / target_exponent")
    if has_exp:
        exponent = cfg["target_exponent"]
        if not 0 < exponent < 256:
            raise ConfigError("target_exponent must be in (0, 256)")
        return target_from_compact(compact_from_target(1 << exponent))
    return target_from_compact(cfg["target_bits"])


def _cmd_mine(args) -> int:
    cfg = configio.load_config(_require_config(args), _MINE_SCHEMA)
    target = _resolve_target(cfg)
    parent = cfg.get("parent_hash", _ZERO_SEED)
    template = BlockHeader(
        version=cfg.get("version", 1),
        parent_hash=parent,
        payload_commitment=cfg.get("payload_commitment", _ZERO_SEED),
        timestamp=cfg.get("timestamp", 0),
        compact_target=compact_from_target(target),
        nonce=0,
    )
    matrix_seed = cfg.get("matrix_seed", parent)
    matrix = generate_matrix(matrix_seed)
    params = HeavyHashParams(rounds=cfg.get("rounds", 1))
    start = cfg.get("nonce_start", 0)
    count = cfg.get("nonce_count", 1 << 20)
    nonce = _mine_sharded(template, matrix, target, start, count, params,
                          args.threads)
    record: dict = {
        "record": "mine",
        "found": nonce is not None,
        "matrix_seed": matrix_seed.hex(),
        "target_bits": compact_from_target(target),
    }
    if nonce is not None:
        header = template.with_nonce(nonce)
        digest = heavyhash(params, matrix, serialize_header(header))
        record.update({
            "nonce": nonce,
            "digest": digest.hex(),
            "header_hex": serialize_header(header).hex(),
            "trials": nonce - start + 1,
        })
    _emit(args, cfg, [record])
    return EXIT_OK


def _mine_sharded(template, matrix, target, start, count, params,
                  threads: int) -> Optional[int]:
    # Disjoint contiguous nonce shards; the minimum of the per-shard wins is
    # the global smallest winning nonce.
    if threads <= 1 or count < 4096:
        return mine(template, matrix, target, start, count, params)
    from concurrent.futures import ThreadPoolExecutor

    bounds = [start + (count * i) // threads for i in range(threads + 1)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        found = list(pool.map(
            lambda i: mine(template, matrix, target, bounds[i],
                           bounds[i + 1] - bounds[i], params),
            range(threads)))
    hits = [n for n in found if n is not None]
    return min(hits) if hits else None


_VERIFY_SCHEMA = {
    "header_hex": as_hex(None),
    "matrix_seed": as_hex(32),
    "rounds": as_int,
}


def _cmd_verify(args) -> int:
    cfg = configio.load_config(_require_config(args), _VERIFY_SCHEMA)
    if "header_hex" not in cfg:
        raise ConfigError("verify needs header_hex")
    header = deserialize_header(cfg["header_hex"])
    matrix_seed = cfg.get("matrix_seed", header.parent_hash)
    matrix = generate_matrix(matrix_seed)
    params = HeavyHashParams(rounds=cfg.get("rounds", 1))
    try:
        target = target_from_compact(header.compact_target)
    except ValueError:
        _emit(args, cfg, [{"record": "verify", "valid": False,
                           "verdict": "bad-target"}])
        print("bad-target", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    digest = heavyhash(params, matrix, serialize_header(header))
    ok = meets_target(digest, target)
    _emit(args, cfg, [{
        "record": "verify",
        "valid": ok,
        "verdict": "valid" if ok else "bad-pow",
        "digest": digest.hex(),
    }])
    if not ok:
        print("bad-pow", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


_CHAINSIM_SCHEMA = {
    "hashrate": as_float,
    "initial_interval": as_float,
    "expected_interval": as_int,
    "window": as_int,
    "clamp_factor": as_int,
    "n_windows": as_int,
    "stochastic": as_bool,
}


def _cmd_chainsim(args) -> int:
    cfg = configio.load_config(_require_config(args), _CHAINSIM_SCHEMA)
    hashrate = cfg.get("hashrate", 1.0e6)
    initial_interval = cfg.get("initial_interval", 9600.0)
    params = RetargetParams(window=cfg.get("window", 64),
                            expected_interval=cfg.get("expected_interval", 600),
                            clamp_factor=cfg.get("clamp_factor", 4))
    n_windows = cfg.get("n_windows", 6)
    if hashrate <= 0 or initial_interval <= 0 or n_windows <= 0:
        raise ConfigError("hashrate, initial_interval, n_windows must be positive")
    initial_target = int(TARGET_SPACE / (hashrate * initial_interval))
    if not 0 < initial_target < TARGET_SPACE:
        raise ConfigError("initial interval/hashrate give an unusable target")
    points = simulate_retarget_chain(initial_target, hashrate,
                                     n_windows * params.window, params,
                                     stochastic=cfg.get("stochastic", False),
                                     seed=args.seed)
    means = window_mean_intervals(points, params.window)
    records = [{
        "record": "window",
        "window": i,
        "mean_interval": mean,
        "relative_error": mean / params.expected_interval - 1.0,
    } for i, mean in enumerate(means)]
    records.append({
        "record": "summary",
        "final_mean_interval": means[-1],
        "converged_within_5pct": abs(means[-1] / params.expected_interval - 1.0) <= 0.05,
    })
    _emit(args, cfg, records)
    return EXIT_OK


_ATTACK_SCHEMA = {
    "q": as_float,
    "z": as_int,
    "runs": as_int,
    "horizon_blocks": as_int,
    "abandon_margin": as_int,
    # full-scenario keys (engine mode; see opow.netsim.scenario_from_config)
    "miners": configio.as_str_list,
    "mean_block_interval": as_float,
    "latency": as_float_list,
    "horizon_seconds": as_float,
    "confirmations": as_int,
    "partitions": configio.as_str_list,
    "integrated": as_bool,
}


def _cmd_attack(args) -> int:
    cfg = configio.load_config(_require_config(args), _ATTACK_SCHEMA)
    if "miners" in cfg:
        return _attack_engine_mode(args, cfg)
    if "q" not in cfg or "z" not in cfg:
        raise ConfigError("attack needs q and z (or a miners scenario)")
    stats = netsim.attack_monte_carlo(
        cfg["q"], cfg["z"], cfg.get("runs", 100_000), seed=args.seed,
        threads=args.threads,
        horizon_blocks=cfg.get("horizon_blocks", 10_000),
        abandon_margin=cfg.get("abandon_margin", netsim.DEFAULT_ABANDON_MARGIN))
    record = {
        "record": "attack",
        "q": stats.q,
        "z": stats.z,
        "runs": stats.runs,
        "successes": stats.successes,
        "success_rate": stats.rate,
        "oracle_catchup": stats.oracle,
        "oracle_nakamoto": stats.oracle_nakamoto,
        "relative_error": (stats.rate / stats.oracle - 1.0) if stats.oracle else None,
        "model_note": stats.note,
    }
    _emit(args, cfg, [record])
    return EXIT_OK


def _attack_engine_mode(args, cfg: dict) -> int:
    """Replicated event-engine runs of a full scenario, one record per run."""
    import dataclasses

    if "q" in cfg or "z" in cfg:
        raise ConfigError("give either q/z or a miners scenario, not both")
    base = netsim.scenario_from_config(cfg, seed=args.seed)
    runs = cfg.get("runs", 1)
    records = []
    successes = 0
    with_attacker = base.attacker() is not None
    for i in range(runs):
        scenario = dataclasses.replace(base, seed=args.seed + i)
        result = netsim.run_scenario(scenario)
        row = result.to_dict()
        if runs > 1:
            row.pop("timeline")  # per-run timelines dwarf the summary output
        row["record"] = "scenario_run"
        row["run"] = i
        records.append(row)
        successes += bool(result.attacker_success)
    if with_attacker and runs > 1:
        records.append({"record": "summary", "runs": runs,
                        "successes": successes,
                        "success_rate": successes / runs})
    _emit(args, cfg, records)
    return EXIT_OK


_PHOTONIC_SCHEMA = {
    "matrix_seed": as_hex(32),
    "dim": as_int,
    "samples": as_int,
    "phase_sigmas": as_float_list,
    "detector_sigma": as_float,
    "adc_bits": as_int,
}


def _cmd_photonic(args) -> int:
    cfg = configio.load_config(_require_config(args), _PHOTONIC_SCHEMA)
    seed_bytes = cfg.get("matrix_seed", _ZERO_SEED)
    dim = cfg.get("dim", 64)
    matrix = generate_matrix(seed_bytes, dim=dim)
    synth = photonic.synthesis_for(matrix)
    grid = [photonic.NoiseModel(phase_sigma=s,
                                detector_sigma=cfg.get("detector_sigma", 0.0),
                                adc_bits=cfg.get("adc_bits", 24))
            for s in cfg.get("phase_sigmas", [0.0, 0.01, 0.05, 0.1])]
    rows = photonic.fidelity_sweep(matrix, grid,
                                   samples=cfg.get("samples", 1000),
                                   seed=args.seed)
    records: list[dict] = [{
        "record": "synthesis",
        "dim": dim,
        "scale": synth.scale,
        "reconstruction_residual": photonic.synthesis_residual(synth, matrix),
    }]
    for row in rows:
        row = dict(row)
        row["record"] = "sweep"
        records.append(row)
    _emit(args, cfg, records)
    return EXIT_OK


_ECON_SCHEMA = {
    "mode": as_str,
    "reward_value": as_float,
    "block_interval": as_float,
    "n_cohorts": as_int,
    "multipliers": as_float_list,
    "opex_shares": as_float_list,
    "capex_shares": as_float_list,
    "duration_days": as_float,
    "hardware_price_multiple": as_float,
    # explicit fleet input: parallel per-cohort rate lists
    "hashrates": as_float_list,
    "capex_rates": as_float_list,
    "opex_rates": as_float_list,
}


def _custom_fleet(cfg: dict):
    keys = ("hashrates", "capex_rates", "opex_rates")
    present = [k for k in keys if k in cfg]
    if not present:
        return None
    if len(present) != 3:
        raise ConfigError("custom fleets need hashrates, capex_rates and opex_rates")
    try:
        return econ.fleet_from_rates(cfg["hashrates"], cfg["capex_rates"],
                                     cfg["opex_rates"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_econ(args) -> int:
    cfg = configio.load_config(_require_config(args), _ECON_SCHEMA)
    mode = cfg.get("mode", "resilience")
    market = econ.MarketState(reward_value=cfg.get("reward_value", 100_000.0),
                              block_interval=cfg.get("block_interval", 600.0))
    n_cohorts = cfg.get("n_cohorts", 100)
    custom = _custom_fleet(cfg)
    records: list[dict] = []
    if mode == "resilience":
        multipliers = cfg.get("multipliers",
                              [round(0.05 * i, 2) for i in range(1, 21)])
        if custom is not None:
            for mult, frac in econ.resilience_curve(custom, market, multipliers):
                records.append({"record": "resilience", "opex_share": "custom",
                                "multiplier": mult, "active_fraction": frac})
        else:
            for share in cfg.get("opex_shares", [0.1, 0.9]):
                fleet = econ.synthetic_fleet(share, market, n_cohorts=n_cohorts)
                for mult, frac in econ.resilience_curve(fleet, market, multipliers):
                    records.append({"record": "resilience", "opex_share": share,
                                    "multiplier": mult, "active_fraction": frac})
    elif mode == "attack-cost":
        duration = cfg.get("duration_days", 1.0) * econ.SECONDS_PER_DAY
        multiple = cfg.get("hardware_price_multiple", 1.0)
        if custom is not None:
            cost = econ.attack_cost(custom, market, duration, multiple)
            records.append({"record": "attack_cost", "capex_share": "custom",
                            "capex": cost.capex, "opex": cost.opex,
                            "total": cost.total})
        else:
            cost_rate = market.reward_rate  # competitive: cost per block = reward
            for share in cfg.get("capex_shares",
                                 [round(0.1 * i, 1) for i in range(1, 10)]):
                fleet = econ.MinerFleet((econ.Cohort(
                    hashrate=1.0, capex_rate=share * cost_rate,
                    opex_rate=(1.0 - share) * cost_rate),))
                cost = econ.attack_cost(fleet, market, duration, multiple)
                records.append({"record": "attack_cost", "capex_share": share,
                                "capex": cost.capex, "opex": cost.opex,
                                "total": cost.total})
    elif mode == "calibrated-drop":
        fleet = econ.bitcoin_like_fleet(market, n_cohorts=n_cohorts)
        for mult in cfg.get("multipliers", [1.0, 0.55]):
            scaled = econ.MarketState(market.reward_value * mult,
                                      market.block_interval)
            frac = econ.active_fraction(fleet, scaled)
            records.append({"record": "calibrated_drop", "multiplier": mult,
                            "active_fraction": frac, "drop": 1.0 - frac})
    else:
        raise ConfigError(f"unknown econ mode {mode!r}")
    _emit(args, cfg, records)
    return EXIT_OK


_DISPATCH = {
    "heavyhash": _cmd_heavyhash,
    "mine": _cmd_mine,
    "verify": _cmd_verify,
    "chainsim": _cmd_chainsim,
    "attack": _cmd_attack,
    "photonic": _cmd_photonic,
    "econ": _cmd_econ,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _DISPATCH[args.command](args)
    except (ConfigError, netsim.ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (photonic.DecompositionError, photonic.NumericError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
