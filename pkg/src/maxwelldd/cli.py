"""Command-line client for the solver service.

Subcommands build HTTP requests against a running service (--url); when no
URL is given they spin up a private in-process server on a loopback port,
so the CLI works standalone while all logic stays behind the HTTP API.
Subdomain solves honour the MAXWELLDD_WORKERS environment variable.
"""

from __future__ import annotations

import contextlib
import csv as csvmod
import sys
import threading
import time

import click
import httpx
import uvicorn


@contextlib.contextmanager
def _client(url: str | None):
    """HTTP client against `url`, or against a temporary local server."""
    if url is not None:
        with httpx.Client(base_url=url, timeout=httpx.Timeout(None)) as c:
            yield c
        return
    from .service.app import app
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if not thread.is_alive() or time.monotonic() > deadline:
            raise click.ClickException("local service failed to start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        with httpx.Client(base_url=f"http://127.0.0.1:{port}",
                          timeout=httpx.Timeout(None)) as c:
            yield c
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise click.ClickException(f"cannot reach service: {exc}")
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise click.ClickException(f"service rejected the request: {detail}")
    return resp.json()


@click.group()
def main():
    """Two-level Schwarz solver benchmarks for time-harmonic Maxwell."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the solver service."""
    uvicorn.run("maxwelldd.service.app:app", host=host, port=port)


@main.command()
@click.option("--preset", default="custom", show_default=True,
              type=click.Choice(["exp1", "exp2", "exp3", "exp4", "custom"]))
@click.option("--k", "k_list", default=None,
              help="Comma-separated wavenumbers, e.g. 5,10,15.")
@click.option("--alpha", type=float, default=None,
              help="Subdomain grid exponent (H_sub ~ k^-alpha).")
@click.option("--alpha-prime", type=float, default=None,
              help="Coarse grid exponent (H ~ k^-alpha').")
@click.option("--beta", type=float, default=None,
              help="Preconditioner absorption exponent (kappa_prec = k^beta).")
@click.option("--bc", type=click.Choice(["pec", "imp"]), default=None)
@click.option("--overlap", type=click.Choice(["2h", "generous"]), default=None)
@click.option("--kinds", default=None,
              help="Comma-separated methods: as,ras,hras,has,impras,imphras; "
                   "an explicit level may be given as imphras:1.")
@click.option("--levels", type=click.Choice(["1", "2"]), default="2",
              show_default=True, help="Level count applied to --kinds.")
@click.option("--mesh-constant", type=float, default=None,
              help="n ~ mesh_constant * k^1.5.")
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--cap", "dof_cap", type=int, default=None,
              help="Skip rows whose DOF count exceeds this cap.")
@click.option("--format", "fmt", type=click.Choice(["csv", "md"]),
              default="csv", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the table here instead of stdout.")
@click.option("--url", default=None, help="Solver service URL; a local "
              "in-process service is used when omitted.")
def run(preset, k_list, alpha, alpha_prime, beta, bc, overlap, kinds, levels,
        mesh_constant, tol, max_iter, seed, dof_cap, fmt, out, url):
    """Run a wavenumber sweep and print the result table."""
    payload = {"preset": preset, "levels": int(levels), "format": fmt}
    if k_list is not None:
        try:
            payload["k_list"] = [float(v) for v in k_list.split(",") if v]
        except ValueError:
            raise click.ClickException(f"bad wavenumber list: {k_list!r}")
    if bc is not None:
        payload["bc"] = {"pec": "pec", "imp": "impedance"}[bc]
    for name, value in [("alpha", alpha), ("alpha_prime", alpha_prime),
                        ("beta", beta), ("overlap", overlap),
                        ("kinds", kinds), ("mesh_constant", mesh_constant),
                        ("tol", tol), ("max_iter", max_iter), ("seed", seed),
                        ("dof_cap", dof_cap)]:
        if value is not None:
            payload[name] = value
    with _client(url) as client:
        data = _post(client, "/run", payload)
    for k, reason in data["skipped"]:
        click.echo(f"skipped k={k}: {reason}", err=True)
    if out:
        with open(out, "w") as fh:
            fh.write(data["rendered"])
        click.echo(f"wrote {out}", err=True)
    else:
        click.echo(data["rendered"], nl=False)


@main.command()
@click.option("--coarse-h", type=float, required=True,
              help="Coarse grid size H.")
@click.option("--delta", type=float, required=True, help="Overlap size.")
@click.option("--m", "iterations", type=int, required=True,
              help="Iteration count m.")
@click.option("--url", default=None)
def bound(coarse_h, delta, iterations, url):
    """Evaluate the theoretical residual-reduction bound."""
    with _client(url) as client:
        data = _post(client, "/bound", {"coarse_h": coarse_h,
                                        "overlap": delta,
                                        "iterations": iterations})
    click.echo(f"{data['value']:.6f}")


@main.command()
@click.option("--csv", "csv_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Result table in CSV form.")
@click.option("--column", required=True, help="Column to fit, e.g. '#HRAS'.")
@click.option("--k-column", default="k", show_default=True)
@click.option("--url", default=None)
def fit(csv_path, column, k_column, url):
    """Fit the growth exponent of a table column against k."""
    ks, ys = [], []
    with open(csv_path, newline="") as fh:
        reader = csvmod.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames \
                or k_column not in reader.fieldnames:
            raise click.ClickException(
                f"column {column!r} or {k_column!r} not in {csv_path}")
        for rec in reader:
            try:
                kv = float(rec[k_column])
                yv = float(rec[column])
            except (TypeError, ValueError):
                continue  # footer rows and '> 200' entries are not fittable
            ks.append(kv)
            ys.append(yv)
    if len(ks) < 2:
        raise click.ClickException("need at least two numeric rows to fit")
    with _client(url) as client:
        data = _post(client, "/fit", {"k_values": ks, "values": ys})
    click.echo(f"gamma = {data['gamma']:.4f}")
    click.echo(f"xi    = {data['xi']:.4f}")


if __name__ == "__main__":
    sys.exit(main())
