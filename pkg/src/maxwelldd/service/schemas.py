"""Pydantic request/response models for the solver service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..experiments import DEFAULT_DOF_CAP


class HealthResponse(BaseModel):
    status: str
    version: str


class BoundRequest(BaseModel):
    """Inputs of the convergence-factor bound (coarse size H, overlap delta)."""

    coarse_h: float = Field(gt=0)
    overlap: float = Field(gt=0)
    iterations: int = Field(ge=0)


class BoundResponse(BaseModel):
    value: float


class FitRequest(BaseModel):
    """Log-log least-squares fit of values against wavenumbers."""

    k_values: list[float] = Field(min_length=2)
    values: list[float] = Field(min_length=2)


class FitResponse(BaseModel):
    gamma: float
    xi: float


class RunRequest(BaseModel):
    """An experiment sweep; preset defaults apply unless overridden."""

    preset: str = "custom"
    k_list: list[float] | None = None
    alpha: float | None = None
    alpha_prime: float | None = None
    beta: float | None = None
    kappa_prob_rule: str | None = None     # k_squared | k | zero
    bc: str | None = None                  # pec | impedance
    overlap: str | None = None             # 2h | generous
    kinds: str | None = None               # e.g. "as,ras,hras" or "imphras:1"
    levels: int = Field(default=2, ge=1, le=2)
    mesh_constant: float | None = None
    tol: float | None = None
    max_iter: int | None = None
    seed: int | None = None
    dof_cap: int = DEFAULT_DOF_CAP
    format: str = "csv"                    # csv | md


class RunRow(BaseModel):
    k: float
    n: int
    n_sub: int
    n_cs: int | None
    iterations: dict[str, int]
    converged: dict[str, bool]
    times: dict[str, float]


class RunResponse(BaseModel):
    labels: list[str]
    rows: list[RunRow]
    skipped: list[tuple[float, str]]
    gamma: dict[str, float]
    xi: dict[str, float]
    rendered: str
