"""``pokforge`` command line: simulate devices, enroll, reconstruct, respond, analyze.

Configuration is a flat set of dotted keys (see ``pokforge config``). A
config file may be JSON (nested or flat) or ``key = value`` lines; values in
``key = value`` files are parsed as JSON when possible. Precedence, lowest
first: built-in defaults, ``POKFORGE_SEED`` (seed only), config file,
``--set`` overrides, dedicated flags.

Exit codes: 0 success, 2 bad config or input file, 3 key check mismatch,
4 programming or enrollment failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from typing import Any, Dict, List, Optional

from . import __version__, litho
from .bitcore import BitString, derive_rng, make_rng
from .engine import (DeviceHandle, Enrollment, LithoSourceParams, NoisySourceParams,
                     PcmSourceParams, PipelineParams, enroll, key_fingerprint, reconstruct, respond)
from .errors import EnrollError, KeyMismatchError, PokError, ProgramError
from .metrics import build_report
from .pcm import Geometry, MaterialParams, PcmCell, program_pulse, read_bit

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_PROGRAM = 0, 2, 3, 4
ENV_SEED = "POKFORGE_SEED"
# stream tags for derive_rng, so enrollment randomness never replays a device stream
TAG_ENROLL, TAG_ANALYZE = 101, 102


class ConfigError(Exception):
    pass


def _fields(prefix: str, cls) -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is dataclasses.MISSING:
            continue
        v = f.default
        out[f"{prefix}.{f.name}"] = list(v) if isinstance(v, tuple) else v
    return out


def default_config() -> Dict[str, Any]:
    cfg: Dict[str, Any] = {
        "seed": 0,
        "device_seed": None,
        "source": "litho",
        "pipeline": "xor",
        "code": "rep3",
    }
    cfg.update(_fields("litho.surface", litho.YieldSurface))
    cfg.update({k: v for k, v in _fields("litho", LithoSourceParams).items()})
    cfg.update({"map.w_min": 40.0, "map.w_max": 64.0, "map.w_step": 2.0,
                "map.l_min": 400.0, "map.l_max": 520.0, "map.l_step": 20.0,
                "map.cells_per_group": 10, "map.dies": 10})
    cfg.update(_fields("pcm.material", MaterialParams))
    cfg.update(_fields("pcm.geometry", Geometry))
    cfg.update(_fields("pcm", PcmSourceParams))
    cfg["pcm.rise_steps"] = 0
    cfg.update(_fields("noisy", NoisySourceParams))
    cfg.update({"fe.out_len": None, "fe.enroll_reads": 1,
                "xor.group_size": 4, "xor.strided": False,
                "analyze.n_devices": 20, "analyze.n_reads": 5})
    return cfg


_NULLABLE_INT = {"device_seed", "fe.out_len", "pcm.geometry.leg_row"}
_CHOICES = {"source": ("litho", "pcm", "generic-noisy"), "pipeline": ("fe", "xor"),
            "code": ("rep3", "rep5", "hamming74", "bch15_7", "bch15_5")}


def _coerce(key: str, value: Any, default: Any) -> Any:
    if value is None and (default is None or key in _NULLABLE_INT):
        return None
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return low in ("true", "1", "yes")
            return bool(value)
        if isinstance(default, int) or key in _NULLABLE_INT:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)) or len(value) != len(default):
                raise ValueError(value)
            return [int(x) for x in value]
        value = str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(f"{key} must be one of {', '.join(_CHOICES[key])}, got {value!r}")
    return value


def _flatten(d: Dict, prefix: str = "") -> Dict[str, Any]:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> Dict[str, Any]:
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            return _flatten(json.loads(stripped))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = _parse_value(v.strip())
    return out


def _apply(cfg: Dict[str, Any], updates: Dict[str, Any], defaults: Dict[str, Any]):
    for k, v in updates.items():
        if k not in defaults:
            raise ConfigError(f"unknown config key {k!r}")
        cfg[k] = _coerce(k, v, defaults[k])


def resolve_config(args: argparse.Namespace, environ=os.environ) -> Dict[str, Any]:
    defaults = default_config()
    cfg = dict(defaults)
    if environ.get(ENV_SEED):
        _apply(cfg, {"seed": environ[ENV_SEED]}, defaults)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        _apply(cfg, parse_config_text(text), defaults)
    sets = {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        sets[k.strip()] = _parse_value(v.strip())
    _apply(cfg, sets, defaults)
    flags = {"seed": args.seed, "pipeline": args.pipeline, "code": args.code,
             "source": getattr(args, "source", None), "device_seed": getattr(args, "device_seed", None)}
    _apply(cfg, {k: v for k, v in flags.items() if v is not None}, defaults)
    for key in ("seed", "device_seed"):
        if cfg[key] is not None:
            try:
                make_rng(cfg[key])
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    return cfg


def config_hash(cfg: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical(cfg).encode("utf-8")).hexdigest()


def canonical(cfg: Dict[str, Any]) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def provenance_lines(command: str, cfg: Dict[str, Any]) -> List[str]:
    return [f"pokforge {__version__} {command}",
            f"config_sha256={config_hash(cfg)}",
            f"seed={cfg['seed']}",
            f"config={canonical(cfg)}"]


def write_atomic(path: str, data) -> None:
    """Write via a temporary file in the target directory and rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _section(cfg, prefix: str) -> Dict[str, Any]:
    n = len(prefix) + 1
    return {k[n:]: (tuple(v) if isinstance(v, list) else v)
            for k, v in cfg.items() if k.startswith(prefix + ".") and "." not in k[n:]}


def _build(cls, cfg, prefix: str, **extra):
    try:
        return cls(**_section(cfg, prefix), **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix}: {exc}") from exc


def material(cfg) -> MaterialParams:
    return _build(MaterialParams, cfg, "pcm.material")


def geometry(cfg) -> Geometry:
    return _build(Geometry, cfg, "pcm.geometry")


def source_params(cfg):
    kind = cfg["source"]
    if kind == "litho":
        return _build(LithoSourceParams, cfg, "litho",
                      surface=_build(litho.YieldSurface, cfg, "litho.surface"))
    if kind == "pcm":
        sec = {k: v for k, v in _section(cfg, "pcm").items() if k != "rise_steps"}
        try:
            return PcmSourceParams(**sec, material=material(cfg), geometry=geometry(cfg))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"pcm: {exc}") from exc
    return _build(NoisySourceParams, cfg, "noisy")


def device_for(cfg, seed: Optional[int] = None) -> DeviceHandle:
    if seed is None:
        seed = cfg["device_seed"] if cfg["device_seed"] is not None else cfg["seed"]
    return DeviceHandle(cfg["source"], seed, source_params(cfg))


def pipeline_params(cfg) -> PipelineParams:
    try:
        return PipelineParams(code=cfg["code"], out_len=cfg["fe.out_len"],
                              group_size=cfg["xor.group_size"], strided=cfg["xor.strided"],
                              enroll_reads=cfg["fe.enroll_reads"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _out(args, name: str) -> str:
    return os.path.join(args.out, name)


def cmd_litho_map(args, cfg) -> int:
    try:
        surface = _build(litho.YieldSurface, cfg, "litho.surface")
        widths = litho.grid_range(cfg["map.w_min"], cfg["map.w_max"], cfg["map.w_step"])
        lengths = litho.grid_range(cfg["map.l_min"], cfg["map.l_max"], cfg["map.l_step"])
        ymap = litho.build_yield_map(surface, widths, lengths, cfg["seed"],
                                     cfg["map.cells_per_group"], cfg["map.dies"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    path = _out(args, "litho_map.csv")
    write_atomic(path, ymap.to_csv(provenance_lines("litho-map", cfg)))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_pcm_sim(args, cfg) -> int:
    try:
        cell = PcmCell.from_seed(cfg["seed"], material(cfg), geometry(cfg), cfg["pcm.nucleation_density"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        result = program_pulse(cell, cfg["pcm.v_prog"], cfg["pcm.duration"], cfg["pcm.dt"],
                               rise_steps=cfg["pcm.rise_steps"])
    except ProgramError as exc:
        print(f"programming failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_PROGRAM
    bit = read_bit(cell, check_contrast=False)
    path = _out(args, "pcm_trace.csv")
    write_atomic(path, result.trace.to_csv(provenance_lines("pcm-sim", cfg)))
    print(f"plugged_side={result.plugged_side} bit={bit} contrast={result.resistance_contrast:.2f}")
    print(f"wrote {path}")
    return EXIT_OK


def _enrollment_path(args) -> str:
    return args.enrollment or _out(args, "enrollment.pok")


def _load_enrollment(args) -> Enrollment:
    path = _enrollment_path(args)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read enrollment {path}: {exc}") from exc
    try:
        return Enrollment.from_bytes(data)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _print_key(args, key) -> None:
    print(f"fingerprint={key_fingerprint(key)}")
    if args.emit_key:
        print(f"key={key.k.to_hex()} bits={len(key.k)}")


def cmd_enroll(args, cfg) -> int:
    device = device_for(cfg)
    try:
        rec, key = enroll(device, cfg["pipeline"], pipeline_params(cfg), derive_rng(cfg["seed"], TAG_ENROLL))
    except EnrollError as exc:
        print(f"enrollment failed: {exc}", file=sys.stderr)
        return EXIT_PROGRAM
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    path = _enrollment_path(args)
    write_atomic(path, rec.to_bytes())
    # the record format is fixed, so provenance goes to a sidecar file
    write_atomic(path + ".provenance", "".join(f"# {line}\n" for line in provenance_lines("enroll", cfg)))
    print(f"device_id={rec.device_id} pipeline={rec.pipeline} key_check={rec.key_check.hex()}")
    _print_key(args, key)
    print(f"wrote {path}")
    return EXIT_OK


def _reconstruct(args, cfg):
    rec = _load_enrollment(args)
    device = device_for(cfg)
    try:
        return reconstruct(device, rec)
    except KeyMismatchError as exc:
        print(f"key check mismatch: {exc}", file=sys.stderr)
        return None
    except EnrollError as exc:
        raise ProgramError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_reconstruct(args, cfg) -> int:
    key = _reconstruct(args, cfg)
    if key is None:
        return EXIT_MISMATCH
    print("key_check=ok")
    _print_key(args, key)
    return EXIT_OK


def cmd_respond(args, cfg) -> int:
    try:
        challenge = bytes.fromhex(args.challenge)
    except ValueError as exc:
        raise ConfigError(f"challenge must be hex: {exc}") from exc
    key = _reconstruct(args, cfg)
    if key is None:
        return EXIT_MISMATCH
    print(respond(key, challenge).to_hex())
    return EXIT_OK


def cmd_analyze(args, cfg) -> int:
    n_dev, n_reads = cfg["analyze.n_devices"], cfg["analyze.n_reads"]
    if n_dev < 2 or n_reads < 2:
        raise ConfigError("analyze needs at least 2 devices and 2 reads")
    seeds = derive_rng(cfg["seed"], TAG_ANALYZE).integers(0, 2**63, size=n_dev)
    reads = []
    for s in seeds:
        dev = device_for(cfg, int(s))
        try:
            reads.append([dev.read(strict=False) for _ in range(n_reads)])
        except EnrollError as exc:
            print(f"device fabrication failed: {exc}", file=sys.stderr)
            return EXIT_PROGRAM
    report = build_report(reads)
    prov = provenance_lines("analyze", cfg)
    jpath, cpath = _out(args, "report.json"), _out(args, "bias.csv")
    write_atomic(jpath, report.to_json(provenance={"header": prov[:3], "config": cfg}))
    write_atomic(cpath, report.bias_csv(prov))
    print(f"devices={report.n_devices} reads={report.n_reads} bits={report.n_bits} "
          f"intra={report.mean_intra:.4f} inter={report.mean_inter:.4f} "
          f"min_entropy={report.mcv_min_entropy}")
    print(f"wrote {jpath}")
    print(f"wrote {cpath}")
    return EXIT_OK


def cmd_config(args, cfg) -> int:
    """Print the fully resolved configuration as JSON."""
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"litho-map": cmd_litho_map, "pcm-sim": cmd_pcm_sim, "enroll": cmd_enroll,
            "reconstruct": cmd_reconstruct, "respond": cmd_respond, "analyze": cmd_analyze,
            "config": cmd_config}


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
        make_rng(v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a 64-bit unsigned seed: {text}") from exc
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON or key=value config file")
    common.add_argument("--seed", type=_seed, help=f"global seed (fallback: ${ENV_SEED}, then 0)")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory")
    common.add_argument("--pipeline", choices=_CHOICES["pipeline"])
    common.add_argument("--code", choices=_CHOICES["code"][:3])
    common.add_argument("--emit-key", action="store_true", help="print the secret key")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    device = argparse.ArgumentParser(add_help=False)
    device.add_argument("--source", choices=_CHOICES["source"])
    device.add_argument("--device-seed", type=_seed, help="device seed (default: --seed)")
    device.add_argument("--enrollment", metavar="PATH", help="enrollment file (default: OUT/enrollment.pok)")

    parser = argparse.ArgumentParser(prog="pokforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pokforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("litho-map", parents=[common], help="write a connectivity yield map CSV")
    sub.add_parser("pcm-sim", parents=[common], help="program and read one PCM cell, write its trace")
    sub.add_parser("enroll", parents=[common, device], help="enroll a device")
    sub.add_parser("reconstruct", parents=[common, device], help="reconstruct and check a device key")
    p = sub.add_parser("respond", parents=[common, device], help="answer a challenge")
    p.add_argument("--challenge", default="00", help="challenge bytes as hex (default 00)")
    sub.add_parser("analyze", parents=[common, device], help="population metrics report")
    sub.add_parser("config", parents=[common, device], help="print the resolved configuration")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProgramError as exc:
        print(f"programming failure: {exc}", file=sys.stderr)
        return EXIT_PROGRAM
    except PokError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
