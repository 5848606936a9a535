#!/usr/bin/env python3
"""
JSON schemas for cumulant sets, graphs, discovery results and experiments

Every file the CLI reads or writes goes through one of these models.
Indices are 0-based throughout; multi-index keys are comma-joined sorted
indices ("0,0,1").
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import DataFormatError
from .graph_model import SETTINGS, LatentDag, ParamSet
from .tensor_cumulants import MAX_ORDER, CumulantSet, SourceCumulantVector, SymmetricTensor, multi_indices

NoiseFamily = Literal["gamma", "lognormal", "beta"]


def _index_key(index) -> str:
    return ",".join(str(i) for i in index)


def _parse_index(key: str) -> Tuple[int, ...]:
    return tuple(sorted(int(part) for part in key.split(",")))


class CumulantSetModel(BaseModel):
    """Cumulant tensors of orders 2..max_order"""
    dim: int = Field(..., ge=1, description="Number of variables")
    max_order: int = Field(..., ge=2, le=MAX_ORDER, description="Highest cumulant order")
    tensors: Dict[str, Dict[str, float]] = Field(..., description="order -> {\"i1,...,ik\": value}")

    @classmethod
    def from_cumulants(cls, C: CumulantSet) -> "CumulantSetModel":
        return cls(
            dim=C.dim,
            max_order=C.max_order,
            tensors={str(k): {_index_key(idx): v for idx, v in t.entries.items()} for k, t in C.tensors.items()},
        )

    def to_cumulants(self) -> CumulantSet:
        tensors = {}
        for k in range(2, self.max_order + 1):
            raw = self.tensors.get(str(k))
            if raw is None:
                raise DataFormatError(f"Cumulant JSON lacks order {k}")
            entries = {_parse_index(key): value for key, value in raw.items()}
            missing = [idx for idx in multi_indices(self.dim, k) if idx not in entries]
            if missing:
                raise DataFormatError(f"Order-{k} tensor lacks {len(missing)} entries, e.g. {_index_key(missing[0])}")
            tensors[k] = SymmetricTensor(k, self.dim, {idx: entries[idx] for idx in multi_indices(self.dim, k)})
        return CumulantSet(self.dim, tensors)


class GraphModel(BaseModel):
    """Graph file: structure plus optional parameters and source cumulants"""
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    p: int = Field(..., ge=1, description="Number of observed nodes")
    ell: int = Field(0, ge=0, description="Number of latent nodes")
    observed_edges: List[Tuple[int, int]] = Field(default_factory=list, description="(j, i) for X_j -> X_i")
    latent_edges: List[Tuple[int, int]] = Field(default_factory=list, description="(j, i) for L_j -> X_i")
    lam: Optional[List[List[float]]] = Field(None, alias="lambda", description="p x p, lam[i][j] weight of X_j -> X_i")
    gamma: Optional[List[List[float]]] = Field(None, description="p x ell, gamma[i][j] weight of L_j -> X_i")
    omegas: Optional[List[Dict[str, float]]] = Field(
        None, description="Per source in column order (noises then latents): order -> cumulant")
    noise: Optional[NoiseFamily] = Field(None, description="Noise family used when omegas are absent")
    scales: Optional[List[float]] = Field(None, description="Per-source standard deviations")

    @model_validator(mode="after")
    def _check_shapes(self) -> "GraphModel":
        if self.lam is not None and np.asarray(self.lam).shape != (self.p, self.p):
            raise ValueError(f"lambda must be {self.p} x {self.p}")
        if self.gamma is not None and self.ell and np.asarray(self.gamma).shape != (self.p, self.ell):
            raise ValueError(f"gamma must be {self.p} x {self.ell}")
        for name in ("omegas", "scales"):
            value = getattr(self, name)
            if value is not None and len(value) != self.p + self.ell:
                raise ValueError(f"{name} needs one entry per source ({self.p + self.ell})")
        return self

    @classmethod
    def load(cls, path) -> "GraphModel":
        try:
            return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except ValidationError as e:
            raise DataFormatError(f"Invalid graph file {path}: {e}") from e

    @classmethod
    def from_graph(cls, g: LatentDag, params: Optional[ParamSet] = None) -> "GraphModel":
        return cls(
            p=g.p,
            ell=g.ell,
            observed_edges=sorted(g.observed_edges),
            latent_edges=sorted(g.latent_edges),
            lam=params.lam.tolist() if params is not None else None,
            gamma=params.gamma.tolist() if params is not None else None,
        )

    def to_graph(self) -> LatentDag:
        return LatentDag(self.p, self.ell, frozenset(self.observed_edges), frozenset(self.latent_edges))

    def has_params(self) -> bool:
        return self.lam is not None and (self.ell == 0 or self.gamma is not None)

    def to_params(self) -> ParamSet:
        if not self.has_params():
            raise DataFormatError("Graph file has no lambda/gamma parameters")
        gamma = np.asarray(self.gamma, dtype=float) if self.ell else np.zeros((self.p, 0))
        return ParamSet(np.asarray(self.lam, dtype=float), gamma)

    def source_cumulants(self) -> Optional[List[SourceCumulantVector]]:
        if self.omegas is None:
            return None
        owners = [f"eps{v}" for v in range(self.p)] + [f"L{j}" for j in range(self.ell)]
        return [SourceCumulantVector(owner, {int(k): v for k, v in values.items()})
                for owner, values in zip(owners, self.omegas)]


class PairDiagnosticModel(BaseModel):
    """One singular-value rank test"""
    v: int
    w: int
    ell: int
    k1: int
    k2: int
    singular_values: List[float]
    ratio: float
    threshold: float
    accepted: bool


class IterationReportModel(BaseModel):
    iteration: int = Field(..., ge=1)
    source: int = Field(..., description="Node eliminated in this iteration")
    pair_ells: Dict[str, int] = Field(..., description="Target -> number of latents confounding (source, target)")
    groups: List[Dict[str, Any]] = Field(default_factory=list, description="Latent groups attached to the source")
    condition_numbers: Dict[str, List[float]] = Field(default_factory=dict)
    thresholds: Dict[str, float] = Field(default_factory=dict, description="Rank-ratio and matching tolerances used")
    flags: List[str] = Field(default_factory=list)
    tests: List[PairDiagnosticModel] = Field(default_factory=list)


class DiscoveryResultModel(BaseModel):
    order: List[int] = Field(..., description="Estimated causal order of observed nodes")
    ell_hat: int = Field(..., ge=0, description="Estimated number of latents")
    B_hat: List[List[float]] = Field(..., description="Estimated path matrix, observed then latent columns")
    candidates: List[List[List[float]]] = Field(..., description="All compatible path matrices")
    candidate_sparse: List[bool] = Field(
        default_factory=list, description="Per candidate: whether its (Lambda, Gamma) keeps the estimated support")
    graph: Optional[GraphModel] = Field(None, description="Graph implied by the estimate")
    source_cumulants: List[Dict[str, float]] = Field(default_factory=list)
    per_iteration: List[IterationReportModel] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)

    @classmethod
    def from_result(cls, result, match_tol: Optional[float] = None,
                    include_tests: bool = False) -> "DiscoveryResultModel":
        iterations = []
        for report in result.iterations:
            thresholds = {"rank_ratio": report.threshold}
            if match_tol is not None:
                thresholds["match_tol"] = match_tol
            iterations.append(IterationReportModel(
                iteration=report.iteration,
                source=report.source,
                pair_ells={str(w): ell for w, ell in sorted(report.pair_ells.items())},
                groups=report.groups,
                condition_numbers=report.condition_numbers,
                thresholds=thresholds,
                flags=report.flags,
                tests=[PairDiagnosticModel(**t) for t in report.tests] if include_tests else [],
            ))
        return cls(
            order=result.order,
            ell_hat=result.ell_hat,
            B_hat=result.B_hat.values.tolist(),
            candidates=[c.values.tolist() for c in result.candidates],
            candidate_sparse=result.candidate_sparse,
            graph=GraphModel.from_graph(result.graph) if result.graph is not None else None,
            source_cumulants=[{str(k): v for k, v in s.values.items()} for s in result.source_cumulants],
            per_iteration=iterations,
            flags=result.flags,
        )


class ExperimentConfig(BaseModel):
    """One cell of the benchmark grid"""
    model_config = ConfigDict(extra="forbid")

    setting: str = Field("a", description="Benchmark setting a-f or a graph JSON file")
    noise: NoiseFamily = Field("gamma", description="Noise family")
    n: int = Field(10000, ge=10, description="Sample size")
    reps: int = Field(10, ge=1, description="Number of replications")
    seed: int = Field(0, ge=0)
    ell_max: Optional[int] = Field(None, ge=0, le=4, description="Default: 2 for setting e, else 1")
    k_max: Optional[int] = Field(None, ge=2, le=MAX_ORDER)
    jobs: int = Field(1, ge=1, description="Worker processes")
    exact: bool = Field(False, description="Use exact cumulants instead of samples")
    path_tol: float = Field(1e-3, gt=0, description="Threshold for path calls on normalized B")
    threshold_scale: float = Field(1.0, gt=0)
    match_tol: float = Field(0.1, gt=0)
    noise_params: Optional[Dict[str, float]] = Field(
        None, description="Shape parameters overriding the family defaults, e.g. {\"a\": 3.0} for gamma")
    source_scales: Optional[Tuple[float, float]] = Field(
        None, description="Range of per-source standard deviations (default: unit in sampled runs)")

    @field_validator("setting")
    @classmethod
    def _known_setting(cls, value: str) -> str:
        if value in SETTINGS or value.endswith(".json"):
            return value
        raise ValueError(f"setting must be one of {', '.join(SETTINGS)} or a .json graph file, got {value!r}")

    @field_validator("source_scales")
    @classmethod
    def _scale_range(cls, value: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
        if value is not None and not 0 < value[0] <= value[1]:
            raise ValueError(f"source_scales must satisfy 0 < low <= high, got {value}")
        return value

    def resolved_ell_max(self) -> int:
        if self.ell_max is not None:
            return self.ell_max
        return 2 if self.setting == "e" else 1


class MetricsSummaryModel(BaseModel):
    setting: str
    noise: str
    n: int
    reps: int
    successes: int
    rmse_median: Optional[float] = None
    rmse_mean: Optional[float] = None
    precision_median: Optional[float] = None
    precision_mean: Optional[float] = None
    recall_median: Optional[float] = None
    recall_mean: Optional[float] = None
    failure_counts: Dict[str, int] = Field(default_factory=dict)
