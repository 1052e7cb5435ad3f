"""FastAPI service exposing the experiment harness and bound evaluators."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..assembly import BC
from ..experiments import (KappaRule, Overlap, emit_table, fit_growth_exponent,
                           make_spec, parse_kinds, run_experiment)
from ..krylov import convergence_factor_bound
from .schemas import (BoundRequest, BoundResponse, FitRequest, FitResponse,
                      HealthResponse, RunRequest, RunResponse, RunRow)


def spec_from_request(req: RunRequest):
    """Translate an HTTP run request into an ExperimentSpec."""
    overrides = {}
    if req.k_list is not None:
        overrides["k_list"] = tuple(req.k_list)
    for name in ("alpha", "alpha_prime", "beta", "mesh_constant", "tol",
                 "max_iter", "seed"):
        value = getattr(req, name)
        if value is not None:
            overrides[name] = value
    if req.kappa_prob_rule is not None:
        overrides["kappa_prob_rule"] = KappaRule(req.kappa_prob_rule)
    if req.bc is not None:
        overrides["bc"] = BC(req.bc)
    if req.overlap is not None:
        overrides["overlap"] = Overlap(req.overlap)
    if req.kinds is not None:
        overrides["kinds"] = parse_kinds(req.kinds, default_levels=req.levels)
    overrides["dof_cap"] = req.dof_cap
    return make_spec(req.preset, **overrides)


def create_app() -> FastAPI:
    app = FastAPI(title="maxwell-dd solver service", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/bound", response_model=BoundResponse)
    def bound(req: BoundRequest):
        return BoundResponse(value=convergence_factor_bound(
            req.coarse_h, req.overlap, req.iterations))

    @app.post("/fit", response_model=FitResponse)
    def fit(req: FitRequest):
        try:
            gamma = fit_growth_exponent(req.k_values, req.values)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return FitResponse(gamma=gamma, xi=gamma * 2.0 / 9.0)

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest):
        try:
            spec = spec_from_request(req)
            if req.format not in ("csv", "md"):
                raise ValueError(f"unknown format {req.format!r}")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        table = run_experiment(spec)
        return RunResponse(
            labels=table.labels,
            rows=[RunRow(k=row.k, n=row.n, n_sub=row.n_sub, n_cs=row.n_cs,
                         iterations=row.iterations, converged=row.converged,
                         times=row.times) for row in table.rows],
            skipped=table.skipped,
            gamma=table.gamma,
            xi=table.xi,
            rendered=emit_table(table, req.format))

    return app


app = create_app()
