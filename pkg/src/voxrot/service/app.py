"""FastAPI application over the operations layer.

The service owns a workspace directory: pools live in `pools/<name>.emb1`,
run artifacts (models, reports, matrices, scores) in `runs/<name>/`. Names
are validated by the request schemas, so they cannot escape the workspace.
"""

from __future__ import annotations

import importlib.metadata
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import ops
from ..anonymizer import anonymize
from ..config import config_from_dict
from ..errors import InvalidSpec, VoxrotError
from ..pool import SyntheticSpec
from . import schemas


def _spec_from_request(req: schemas.GenDataRequest) -> SyntheticSpec:
    return SyntheticSpec(
        num_speakers=req.speakers,
        utterances_per_speaker=req.utterances,
        dim=req.dim,
        sigma_between=req.sigma_between,
        sigma_within=req.sigma_within,
        seed=req.seed,
        normalize=req.normalize,
        enroll_per_speaker=req.enroll_per_speaker,
        trial_per_speaker=req.trial_per_speaker,
    )


def _config_dict(
    train: schemas.TrainParams | None = None,
    stack: schemas.StackParams | None = None,
    loss: schemas.LossParams | None = None,
    selection: schemas.SelectionParams | None = None,
) -> dict:
    doc: dict = {}
    if train is not None:
        doc["train"] = train.model_dump()
    if stack is not None:
        doc["stack"] = stack.model_dump()
    if loss is not None:
        lo = loss.model_dump()
        doc["loss"] = lo
    if selection is not None:
        doc["selection"] = selection.model_dump()
    return doc


def create_app(workspace: Path | str) -> FastAPI:
    workspace = Path(workspace)
    pools_dir = workspace / "pools"
    runs_dir = workspace / "runs"
    app = FastAPI(title="voxrot", version=importlib.metadata.version("voxrot"))

    @app.exception_handler(VoxrotError)
    async def _voxrot_error(request: Request, exc: VoxrotError) -> JSONResponse:
        status = 422 if isinstance(exc, InvalidSpec) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _not_found(request: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    def pool_path(name: str) -> Path:
        for suffix in (".emb1", ".csv"):
            cand = pools_dir / f"{name}{suffix}"
            if cand.exists():
                return cand
        raise FileNotFoundError(f"no pool named {name!r} in {pools_dir}")

    def model_path(run: str) -> Path:
        cand = runs_dir / run / "model.ohnn"
        if not cand.exists():
            raise FileNotFoundError(f"no trained model for run {run!r}")
        return cand

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=app.version)

    @app.post("/pools", response_model=schemas.PoolSummary)
    def gen_pool(req: schemas.GenDataRequest) -> schemas.PoolSummary:
        spec = _spec_from_request(req)
        cfg = config_from_dict({"pool": {
            "speakers": req.speakers,
            "utterances": req.utterances,
            "dim": req.dim,
            "sigma_between": req.sigma_between,
            "sigma_within": req.sigma_within,
            "seed": req.seed,
            "normalize": req.normalize,
            "enroll_per_speaker": req.enroll_per_speaker,
            "trial_per_speaker": req.trial_per_speaker,
        }})
        out = pools_dir / f"{req.name}.emb1"
        summary = ops.op_gen_data(spec, out, cfg)
        return schemas.PoolSummary(**summary)

    @app.get("/pools", response_model=schemas.PoolListResponse)
    def list_pools() -> schemas.PoolListResponse:
        found = []
        if pools_dir.is_dir():
            for path in sorted(pools_dir.glob("*.emb1")):
                pool = ops.resolve_pool(path)
                found.append(schemas.PoolSummary(**ops.pool_summary(pool, path)))
        return schemas.PoolListResponse(pools=found)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_run(req: schemas.TrainRequest) -> schemas.TrainResponse:
        cfg = config_from_dict(_config_dict(req.train, req.stack, req.loss))
        pool = ops.resolve_pool(pool_path(req.pool))
        summary = ops.op_train(pool, cfg.to_train_config(), runs_dir / req.run, cfg)
        return schemas.TrainResponse(**summary)

    @app.post("/anonymize/vector", response_model=schemas.AnonymizeVectorResponse)
    def anonymize_vector(
        req: schemas.AnonymizeVectorRequest,
    ) -> schemas.AnonymizeVectorResponse:
        model = ops.load_model_file(model_path(req.model))
        vec = np.asarray(req.vector, dtype=np.float64)
        out = anonymize(model, vec)
        return schemas.AnonymizeVectorResponse(vector=[float(v) for v in out])

    @app.post("/anonymize/pool", response_model=schemas.PoolSummary)
    def anonymize_pool(req: schemas.AnonymizePoolRequest) -> schemas.PoolSummary:
        sel_params = req.selection or schemas.SelectionParams()
        cfg = config_from_dict(_config_dict(selection=sel_params))
        pool = ops.resolve_pool(pool_path(req.pool))
        model = ops.load_model_file(model_path(req.model)) if req.model else None
        sel = cfg.selection.to_selection() if req.selection is not None else None
        out = pools_dir / f"{req.out}.emb1"
        summary = ops.op_anonymize(pool, req.side, out, cfg, model, sel)
        return schemas.PoolSummary(**summary)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_run(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
        sel_params = req.selection or schemas.SelectionParams()
        cfg = config_from_dict(_config_dict(selection=sel_params))
        pool = ops.resolve_pool(pool_path(req.pool))
        model = ops.load_model_file(model_path(req.model)) if req.model else None
        sel = cfg.selection.to_selection() if req.selection is not None else None
        summary = ops.op_evaluate(
            pool, runs_dir / req.run, cfg, model, sel, req.calibration
        )
        return schemas.EvaluateResponse(**summary)

    @app.post("/attack-sim", response_model=schemas.AttackSimResponse)
    def attack_sim(req: schemas.AttackSimRequest) -> schemas.AttackSimResponse:
        cfg = config_from_dict(
            _config_dict(req.train, req.stack, req.loss, req.selection)
            | {
                "attack": {
                    "kind": req.kind,
                    "scenarios": req.scenarios,
                    "user_seed": req.user_seed,
                    "attacker_seed": req.attacker_seed,
                    "calibration": req.calibration,
                }
            }
        )
        pools = [(name, ops.resolve_pool(pool_path(name))) for name in req.pools]
        weights = req.weights or [1.0] * len(pools)
        summary = ops.op_attack_sim(
            pools,
            weights,
            cfg.to_scenario_config(req.scenarios[0]),
            req.scenarios,
            runs_dir / req.run,
            cfg,
        )
        return schemas.AttackSimResponse(**summary)

    return app
