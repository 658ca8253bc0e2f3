"""Command-line client for the recshard service.

Talks to an in-process app instance by default, or to a remote server via
--server. Exit codes: 0 success, 1 configuration error, 2 infeasible
scenario, 3 internal or transport error."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for infeasible here.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class CommandError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=300.0)
    import warnings

    with warnings.catch_warnings():
        # The bundled test client is only deprecated in favor of a package
        # that is not published yet; keep the CLI quiet about it.
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _call(client, method: str, path: str, body: dict | None = None) -> dict:
    try:
        response = client.request(method, path, json=body)
    except httpx.HTTPError as err:
        raise CommandError(f"transport error: {err}", EXIT_INTERNAL) from err
    if response.status_code < 300:
        return response.json()
    try:
        detail = response.json()
    except ValueError:
        detail = {"error": response.text}
    message = detail.get("error") or detail.get("detail") or response.text
    if response.status_code == 409:
        raise CommandError(f"infeasible: {message}", EXIT_INFEASIBLE)
    if response.status_code < 500:
        raise CommandError(f"config error: {message}", EXIT_CONFIG)
    raise CommandError(f"server error: {message}", EXIT_INTERNAL)


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as err:
        raise CommandError(f"cannot read {path}: {err}", EXIT_CONFIG) from err
    except json.JSONDecodeError as err:
        raise CommandError(f"{path} is not valid JSON: {err}", EXIT_CONFIG) from err


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _cmd_simulate(client, args) -> None:
    config = _load_json(args.config)
    if not isinstance(config, dict):
        raise CommandError("simulate config must be a JSON object", EXIT_CONFIG)
    result = _call(client, "POST", "/simulate", config)
    if args.out:
        from .costmodel import CSV_COLUMNS

        lines = [",".join(CSV_COLUMNS), ",".join(result["csv_row"])]
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    else:
        print(_dump(result))


def _cmd_sweep(client, args) -> None:
    spec = _load_json(args.spec)
    result = _call(client, "POST", "/sweep", {"spec": spec})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result["csv"])
    (out / "results.dat").write_text(result["dat"])
    errors = sum(1 for row in result["rows"] if row["error"])
    print(f"wrote {out / 'results.csv'} ({len(result['rows'])} scenarios, {errors} infeasible)")


def _cmd_shard(client, args) -> None:
    body = {
        "tables": _load_json(args.tables),
        "devices": _load_json(args.devices),
        "algorithm": args.strategy,
    }
    print(_dump(_call(client, "POST", "/shard", body)))


def _cmd_calibrate(client, args) -> None:
    body = {"refs": _load_json(args.refs), "grid": _load_json(args.grid)}
    print(_dump(_call(client, "POST", "/calibrate", body)))


def _cmd_reproduce(client, args) -> None:
    body = {"figure": args.figure}
    if args.coefficients:
        body["coefficients"] = args.coefficients
    result = _call(client, "POST", "/reproduce", body)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for filename in sorted(result["files"]):
        (out / filename).write_text(result["files"][filename])
        print(f"wrote {out / filename}")


def _cmd_presets(client, args) -> None:
    result = _call(client, "GET", "/presets")
    if args.action == "list":
        print("models:    " + " ".join(result["models"]))
        print("platforms: " + " ".join(result["platforms"]))
        print("figures:   " + " ".join(result["figures"]))
        print("coefficients: " + " ".join(sorted(result["coefficients"])))


def _cmd_serve(args) -> None:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)


def build_parser() -> _Parser:
    parser = _Parser(prog="recshard", description=__doc__)
    parser.add_argument(
        "--server",
        default=None,
        help="base URL of a running service; defaults to an in-process app",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="evaluate one training scenario")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--out", default=None, help="write a one-row CSV instead of JSON")

    p = sub.add_parser("sweep", help="run a declarative sweep")
    p.add_argument("--spec", required=True, help="sweep spec JSON")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("shard", help="balance table shards across devices")
    p.add_argument("--tables", required=True, help="JSON list of {id, size, load}")
    p.add_argument("--devices", required=True, help="JSON list of {id, capacity}")
    p.add_argument("--strategy", choices=("lpt", "exact"), default="lpt")

    p = sub.add_parser("calibrate", help="fit coefficients to measured ratios")
    p.add_argument("--refs", required=True, help="JSON list of reference ratios")
    p.add_argument("--grid", required=True, help="JSON grid of coefficient values")

    p = sub.add_parser("reproduce", help="run a canned report figure")
    p.add_argument("--figure", required=True, help="fig8|fig9|fig10|mlp|fig12")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--coefficients", default=None, help="default|calibrated")

    p = sub.add_parser("presets", help="inspect shipped presets")
    p.add_argument("action", choices=("list",))

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        _cmd_serve(args)
        return EXIT_OK
    handlers = {
        "simulate": _cmd_simulate,
        "sweep": _cmd_sweep,
        "shard": _cmd_shard,
        "calibrate": _cmd_calibrate,
        "reproduce": _cmd_reproduce,
        "presets": _cmd_presets,
    }
    client = _client(args.server)
    try:
        handlers[args.command](client, args)
    except CommandError as err:
        print(str(err), file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        client.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
