"""``sensornet <kind> --config FILE [--out DIR] [--seed N] [--threads N]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .harness import EXIT_INVALID, EXIT_RUNTIME, KINDS, ConfigError, load_config, run

log = logging.getLogger("sensornet")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sensornet", description="Run a friends-as-sensors experiment.")
    p.add_argument("kind", choices=KINDS, help="experiment kind")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=None, help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides config 'seed')")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $SENSORNET_THREADS, then config, then 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.kind, args.out, args.seed, args.threads)
    except ConfigError as exc:
        print(f"sensornet: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        status = run(cfg)
    except ConfigError as exc:
        print(f"sensornet: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        log.debug("run failed", exc_info=True)
        print(f"sensornet: {cfg.kind} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("wrote %s", cfg.out)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
