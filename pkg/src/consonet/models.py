"""Operator-network variants, the dot-product decoder, and training.

Four architectures differ only in where the consolidation coefficient
enters:

* M1_BRANCH_CONCAT: cv appended to the sensor vector feeding the branch.
* M2_AUX_BRANCH_MERGE: separate scalar branch for cv; the two branch
  latents are concatenated and fused by a small merge net.
* M3_TRUNK_CV: cv appended to the (z, t) trunk coordinates.
* M4_TRUNK_CV_FOURIER: like M3, but (z, t, cv) passes through a frozen
  random Fourier feature embedding before the trunk.

The prediction is the plain dot product of the branch and trunk latents
(width q, no additive bias).  All inputs, including cv, are standardized
with the training set statistics; training minimizes the mean squared
error over flattened (function, point) pairs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .dataset import OperatorDataset, StandardizationStats, standardize
from .errors import NumericalError, StorageError, ValidationError
from .nn import (
    AdamState,
    FourierEmbedding,
    MlpParams,
    MlpSpec,
    adam_update,
    fourier_embed,
    hidden_stack,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from .storage import (
    SCHEMA_VERSION,
    crc32c_hex,
    ensure_dir,
    load_manifest,
    save_manifest,
)

MODEL_FORMAT = "consonet/model"

M1 = "M1_BRANCH_CONCAT"
M2 = "M2_AUX_BRANCH_MERGE"
M3 = "M3_TRUNK_CV"
M4 = "M4_TRUNK_CV_FOURIER"
VARIANTS = (M1, M2, M3, M4)
_VARIANT_BY_NUMBER = {1: M1, 2: M2, 3: M3, 4: M4}


def variant_from_number(n: int) -> str:
    if n not in _VARIANT_BY_NUMBER:
        raise ValidationError(f"model number must be 1-4, got {n}")
    return _VARIANT_BY_NUMBER[n]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description for one variant.

    Every subnetwork is a constant-width stack (``hidden_depth`` hidden
    layers of ``hidden_width`` units, tanh) with problem-determined input
    and output widths; branch and trunk both end at the latent width q.
    """

    variant: str
    m_sensors: int = 100
    q: int = 50
    hidden_width: int = 30
    hidden_depth: int = 6
    merge_depth: int = 2
    ffe_m: int = 50
    ffe_sigma: float = 1.0
    activation: str = "tanh"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.m_sensors < 2 or self.q < 1:
            raise ValidationError("need m_sensors >= 2 and q >= 1")
        if self.variant == M4 and self.ffe_m < 1:
            raise ValidationError("M4 needs ffe_m >= 1")

    # -- derived sub-network shapes -------------------------------------
    @property
    def branch_spec(self) -> MlpSpec:
        m_in = self.m_sensors + 1 if self.variant == M1 else self.m_sensors
        return hidden_stack(m_in, self.q, self.hidden_width, self.hidden_depth,
                            self.activation)

    @property
    def aux_spec(self) -> MlpSpec | None:
        if self.variant != M2:
            return None
        return hidden_stack(1, self.q, self.hidden_width, self.hidden_depth,
                            self.activation)

    @property
    def merge_spec(self) -> MlpSpec | None:
        if self.variant != M2:
            return None
        return hidden_stack(2 * self.q, self.q, self.hidden_width, self.merge_depth,
                            self.activation)

    @property
    def trunk_in_width(self) -> int:
        if self.variant in (M1, M2):
            return 2
        if self.variant == M3:
            return 3
        return 2 * self.ffe_m

    @property
    def trunk_spec(self) -> MlpSpec:
        return hidden_stack(self.trunk_in_width, self.q, self.hidden_width,
                            self.hidden_depth, self.activation)

    @property
    def net_names(self) -> tuple[str, ...]:
        if self.variant == M2:
            return ("branch", "aux", "merge", "trunk")
        return ("branch", "trunk")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "m_sensors": self.m_sensors,
            "q": self.q,
            "hidden_width": self.hidden_width,
            "hidden_depth": self.hidden_depth,
            "merge_depth": self.merge_depth,
            "ffe_m": self.ffe_m,
            "ffe_sigma": self.ffe_sigma,
            "activation": self.activation,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        return ModelSpec(**d)


@dataclass
class ModelState:
    """Trainable parameters plus provenance for one model."""

    params: dict
    embedding: FourierEmbedding | None
    stats: StandardizationStats
    history: dict = dc_field(default_factory=lambda: {"train_loss": [], "val_loss": []})
    seed: int | None = None
    train_config: dict = dc_field(default_factory=dict)


def init_model(spec: ModelSpec, stats: StandardizationStats, seed,
               dtype=np.float32) -> ModelState:
    """Seeded Glorot initialization of every subnetwork (B matrix included)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = ss.spawn(len(spec.net_names) + 1)
    params = {}
    for name, child in zip(spec.net_names, streams):
        sub = {"branch": spec.branch_spec, "aux": spec.aux_spec,
               "merge": spec.merge_spec, "trunk": spec.trunk_spec}[name]
        params[name] = init_mlp(sub, np.random.default_rng(child), dtype=dtype)
    embedding = None
    if spec.variant == M4:
        embedding = FourierEmbedding.create(
            spec.ffe_m, 3, spec.ffe_sigma, np.random.default_rng(streams[-1]), dtype=dtype
        )
    return ModelState(params=params, embedding=embedding, stats=stats,
                      seed=getattr(ss, "entropy", None))


def assemble_inputs(spec: ModelSpec, u_std: np.ndarray, cv_std: float,
                    point_std: np.ndarray, embedding: FourierEmbedding | None = None):
    """Compose standardized pieces into (branch input, trunk input) vectors.

    For M1 and M2 the branch vector carries cv as its last entry (M2's
    pathway peels it off for the auxiliary net); for M3/M4 cv augments
    the trunk coordinates, embedded for M4.
    """
    u_std = np.asarray(u_std, dtype=float)
    point_std = np.asarray(point_std, dtype=float)
    if u_std.shape != (spec.m_sensors,):
        raise ValidationError(f"branch vector must have {spec.m_sensors} entries")
    if point_std.shape != (2,):
        raise ValidationError("point must be a standardized (z, t) pair")
    branch_in, trunk_in = _assemble_batch(
        spec, u_std[None, :], np.array([cv_std], dtype=float), point_std[None, :], embedding
    )
    return branch_in[0], trunk_in[0]


def _assemble_batch(spec, u_std, cv_std, pts_std, embedding):
    cv_col = cv_std[:, None]
    if spec.variant in (M1, M2):
        branch_in = np.concatenate([u_std, cv_col], axis=1)
        trunk_in = pts_std
    else:
        branch_in = u_std
        trunk_raw = np.concatenate([pts_std, cv_col], axis=1)
        if spec.variant == M4:
            if embedding is None:
                raise ValidationError("M4 requires the frozen Fourier embedding")
            trunk_in = fourier_embed(embedding, trunk_raw)
        else:
            trunk_in = trunk_raw
    return branch_in, trunk_in


def _branch_latent(state: ModelState, spec: ModelSpec, branch_in, want_cache=False):
    if spec.variant == M2:
        main_in = branch_in[:, : spec.m_sensors]
        aux_in = branch_in[:, spec.m_sensors:]
        b_main, c_main = mlp_forward(state.params["branch"], main_in)
        b_aux, c_aux = mlp_forward(state.params["aux"], aux_in)
        merged_in = np.concatenate([b_main, b_aux], axis=1)
        b_lat, c_merge = mlp_forward(state.params["merge"], merged_in)
        cache = (c_main, c_aux, c_merge) if want_cache else None
        return b_lat, cache
    b_lat, c = mlp_forward(state.params["branch"], branch_in)
    return b_lat, (c if want_cache else None)


def _branch_backward(state, spec, cache, d_blat):
    if spec.variant == M2:
        c_main, c_aux, c_merge = cache
        d_merged = mlp_backward(state.params["merge"], c_merge, d_blat)
        q = spec.q
        mlp_backward(state.params["branch"], c_main, d_merged[:, :q])
        mlp_backward(state.params["aux"], c_aux, d_merged[:, q:])
    else:
        mlp_backward(state.params["branch"], cache, d_blat)


def forward_batch(state: ModelState, spec: ModelSpec, branch_in, trunk_in):
    """Batched prediction in standardized target units."""
    b_lat, _ = _branch_latent(state, spec, branch_in)
    t_lat, _ = mlp_forward(state.params["trunk"], trunk_in)
    return np.sum(b_lat * t_lat, axis=1)


def predict(state: ModelState, spec: ModelSpec, branch_input, trunk_input) -> float:
    """Single-point decoder output sum_k b_k * t_k (no additive bias)."""
    branch_in = np.asarray(branch_input, dtype=state.params["branch"].dtype)[None, :]
    trunk_in = np.asarray(trunk_input, dtype=state.params["trunk"].dtype)[None, :]
    return float(forward_batch(state, spec, branch_in, trunk_in)[0])


def operator_loss(state: ModelState, spec: ModelSpec, branch_in, trunk_in, targets) -> float:
    """Mean squared prediction error over the batch, standardized units."""
    targets = np.asarray(targets)
    if targets.size == 0:
        raise ValidationError("empty batch")
    preds = forward_batch(state, spec, branch_in, trunk_in)
    r = preds - targets
    return float(np.mean(r * r))


def loss_and_grads(state: ModelState, spec: ModelSpec, branch_in, trunk_in, targets):
    """MSE loss plus exact parameter gradients, accumulated in-place.

    Gradient buffers are zeroed first.  Returns the scalar loss.
    """
    targets = np.asarray(targets)
    if targets.size == 0:
        raise ValidationError("empty batch")
    for p in state.params.values():
        p.zero_grad()
    b_lat, b_cache = _branch_latent(state, spec, branch_in, want_cache=True)
    t_lat, t_cache = mlp_forward(state.params["trunk"], trunk_in)
    preds = np.sum(b_lat * t_lat, axis=1)
    r = preds - targets
    loss = float(np.mean(r * r))
    dpred = (2.0 / targets.shape[0]) * r
    d_blat = dpred[:, None] * t_lat
    d_tlat = dpred[:, None] * b_lat
    mlp_backward(state.params["trunk"], t_cache, d_tlat)
    _branch_backward(state, spec, b_cache, d_blat)
    return loss


@dataclass(frozen=True)
class TrainConfig:
    """Adam settings.  ``lr_final`` switches on cosine decay from ``lr``;
    left as None the learning rate stays constant."""

    epochs: int = 600
    batch_size: int = 4096
    lr: float = 1e-3
    lr_final: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def lr_at(self, epoch: int) -> float:
        if self.lr_final is None or self.epochs <= 1:
            return self.lr
        frac = epoch / (self.epochs - 1)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (
            1.0 + math.cos(math.pi * frac)
        )

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
                "lr_final": self.lr_final, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps}


def _flatten_views(views, dtype):
    n, p, _ = views.points.shape
    case_idx = np.repeat(np.arange(n), p)
    return (
        views.branch.astype(dtype),
        views.cv.astype(dtype),
        case_idx,
        views.points.reshape(n * p, 2).astype(dtype),
        views.targets.reshape(n * p).astype(dtype),
    )


def train(
    spec: ModelSpec,
    train_ds: OperatorDataset,
    val_ds: OperatorDataset | None,
    cfg: TrainConfig,
    seed: int,
    dtype=np.float32,
    log_every: int = 0,
) -> ModelState:
    """Mini-batch Adam training over shuffled flattened (i, j) triples.

    Both datasets are standardized with the training set's statistics.
    Per epoch the recorded train loss is the batch-size weighted mean of
    minibatch losses; the validation loss is computed afterwards with
    parameters frozen.  Deterministic for a fixed seed.
    """
    if train_ds.stats is None:
        raise ValidationError("training dataset carries no standardization stats "
                              "(was it generated with role='train'?)")
    if train_ds.m != spec.m_sensors:
        raise ValidationError(
            f"dataset has m={train_ds.m} sensors but the model expects {spec.m_sensors}"
        )
    stats = train_ds.stats
    ss = np.random.SeedSequence(seed)
    s_init, s_shuffle = ss.spawn(2)
    state = init_model(spec, stats, s_init, dtype=dtype)
    state.seed = int(seed)

    ub, cvb, case_idx, pts, tgt = _flatten_views(standardize(train_ds, stats), dtype)
    val_arrays = None
    if val_ds is not None:
        val_arrays = _flatten_views(standardize(val_ds, stats), dtype)

    opt_states = {name: AdamState(state.params[name].arrays()) for name in spec.net_names}
    shuffle_rng = np.random.default_rng(s_shuffle)
    n_triples = tgt.shape[0]
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(n_triples)
        total, seen = 0.0, 0
        for start in range(0, n_triples, cfg.batch_size):
            sel = order[start: start + cfg.batch_size]
            ci = case_idx[sel]
            branch_in, trunk_in = _assemble_batch(
                spec, ub[ci], cvb[ci], pts[sel], state.embedding
            )
            loss = loss_and_grads(state, spec, branch_in, trunk_in, tgt[sel])
            if not np.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch} (loss={loss})")
            for name in spec.net_names:
                adam_update(state.params[name].arrays(), state.params[name].grads(),
                            opt_states[name], lr, cfg.beta1, cfg.beta2, cfg.eps)
            total += loss * sel.shape[0]
            seen += sel.shape[0]
        train_loss = total / seen
        state.history["train_loss"].append(train_loss)
        if val_arrays is not None:
            state.history["val_loss"].append(
                float(_eval_loss(state, spec, val_arrays))
            )
        if log_every and (epoch + 1) % log_every == 0:
            val_txt = (f" val={state.history['val_loss'][-1]:.4e}"
                       if val_arrays is not None else "")
            print(f"epoch {epoch + 1}/{cfg.epochs} train={train_loss:.4e}{val_txt}")

    state.train_config = {
        **cfg.to_dict(),
        "seed": int(seed),
        "wall_time_s": time.perf_counter() - t0,
        "train_meta": {
            "n": train_ds.n, "p": train_ds.p,
            "ranges": train_ds.meta.get("ranges"),
            "grf": train_ds.meta.get("grf"),
            "mix": train_ds.meta.get("mix"),
        },
    }
    return state


def _eval_loss(state, spec, arrays, chunk: int = 65536) -> float:
    ub, cvb, case_idx, pts, tgt = arrays
    total = 0.0
    for start in range(0, tgt.shape[0], chunk):
        sel = slice(start, start + chunk)
        ci = case_idx[sel]
        branch_in, trunk_in = _assemble_batch(spec, ub[ci], cvb[ci], pts[sel],
                                              state.embedding)
        preds = forward_batch(state, spec, branch_in, trunk_in)
        r = preds - tgt[sel]
        total += float(np.sum(r * r))
    return total / tgt.shape[0]


# -- physical-unit inference ---------------------------------------------

def query_points(state: ModelState, spec: ModelSpec, u0: np.ndarray, cv: float,
                 points: np.ndarray) -> np.ndarray:
    """Predict pressures (Pa) at scattered physical (z, t) points."""
    stats = state.stats
    dtype = state.params["branch"].dtype
    u_std = stats.norm_branch(np.asarray(u0, dtype=float)).astype(dtype)
    cv_std = float(stats.norm_cv(cv))
    pts_std = stats.norm_coords(np.asarray(points, dtype=float)).astype(dtype)
    nq = pts_std.shape[0]
    branch_in, trunk_in = _assemble_batch(
        spec,
        np.broadcast_to(u_std, (nq, u_std.shape[0])),
        np.full(nq, cv_std, dtype=dtype),
        pts_std,
        state.embedding,
    )
    preds = forward_batch(state, spec, branch_in, trunk_in)
    return stats.denorm_target(preds.astype(float))


def query_grid(state: ModelState, spec: ModelSpec, u0: np.ndarray, cv: float,
               depths: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Predict the full (len(depths) x len(times)) field in Pa.

    The branch pathway depends only on the case, so its latent is
    computed once and combined with the trunk latents of all grid
    points; this is the pipeline a deployed surrogate would run.
    """
    stats = state.stats
    dtype = state.params["branch"].dtype
    u_std = stats.norm_branch(np.asarray(u0, dtype=float)).astype(dtype)
    cv_std = float(stats.norm_cv(cv))
    zz, tt = np.meshgrid(np.asarray(depths, dtype=float),
                         np.asarray(times, dtype=float), indexing="ij")
    pts = np.stack([zz.ravel(), tt.ravel()], axis=1)
    pts_std = stats.norm_coords(pts).astype(dtype)
    nq = pts_std.shape[0]

    if spec.variant in (M1, M2):
        branch_in = np.concatenate([u_std, [cv_std]]).astype(dtype)[None, :]
        trunk_in = pts_std
    else:
        branch_in = u_std[None, :]
        cv_col = np.full((nq, 1), cv_std, dtype=dtype)
        trunk_raw = np.concatenate([pts_std, cv_col], axis=1)
        trunk_in = (fourier_embed(state.embedding, trunk_raw)
                    if spec.variant == M4 else trunk_raw)
    b_lat, _ = _branch_latent(state, spec, branch_in)
    t_lat, _ = mlp_forward(state.params["trunk"], trunk_in)
    preds = t_lat @ b_lat[0]
    field = stats.denorm_target(preds.astype(float)).reshape(zz.shape)
    return field


# -- persistence -----------------------------------------------------------

def _array_index(state: ModelState, spec: ModelSpec) -> list[tuple[str, np.ndarray]]:
    named = []
    for name in spec.net_names:
        p = state.params[name]
        for l in range(p.n_layers):
            named.append((f"{name}.w{l}", p.weights[l]))
            named.append((f"{name}.b{l}", p.biases[l]))
    if state.embedding is not None:
        named.append(("fourier.b_matrix", state.embedding.b_matrix))
    return named


def save_model(state: ModelState, spec: ModelSpec, path) -> None:
    """Write model.json plus weights.bin (f32le, manifest-declared order)."""
    dirpath = ensure_dir(path)
    named = _array_index(state, spec)
    blobs, index = [], []
    for name, arr in named:
        if arr.dtype != np.float32:
            raise ValidationError(
                f"model files are f32le; array {name} has dtype {arr.dtype}"
            )
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(arr.shape)})
        blobs.append(blob)
    payload = b"".join(blobs)
    with open(dirpath / "weights.bin", "wb") as fh:
        fh.write(payload)
    manifest = {
        "format": MODEL_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "spec": spec.to_dict(),
        "dtype": "f32le",
        "arrays": index,
        "files": {"weights.bin": {"bytes": len(payload), "crc32c": crc32c_hex(payload)}},
        "standardization": state.stats.to_dict(),
        "seed": state.seed,
        "train_config": state.train_config,
        "history": state.history,
        "meta": {"created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())},
    }
    with open(dirpath / "model.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[ModelSpec, ModelState]:
    """Reload a saved model; bit-exact inverse of save_model."""
    dirpath = Path(path)
    try:
        with open(dirpath / "model.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise StorageError(f"cannot read model manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StorageError(f"model manifest is not valid JSON: {exc}") from exc
    if manifest.get("format") != MODEL_FORMAT:
        raise StorageError(f"bad format marker {manifest.get('format')!r}")
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise StorageError(
            f"schema_version {manifest.get('schema_version')!r} not supported"
        )
    spec = ModelSpec.from_dict(manifest["spec"])
    entry = manifest["files"]["weights.bin"]
    payload = (dirpath / "weights.bin").read_bytes()
    if len(payload) != entry["bytes"]:
        raise StorageError(
            f"truncated weights.bin: {len(payload)} bytes, {entry['bytes']} declared"
        )
    if crc32c_hex(payload) != entry["crc32c"]:
        raise StorageError("checksum mismatch for weights.bin")

    arrays = {}
    offset = 0
    for item in manifest["arrays"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * 4
        if offset + nbytes > len(payload):
            raise StorageError(f"weights.bin too short for array {item['name']}")
        arrays[item["name"]] = np.frombuffer(
            payload, dtype="<f4", count=count, offset=offset
        ).reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise StorageError("weights.bin has trailing bytes beyond the declared arrays")

    params = {}
    for name in spec.net_names:
        sub = {"branch": spec.branch_spec, "aux": spec.aux_spec,
               "merge": spec.merge_spec, "trunk": spec.trunk_spec}[name]
        weights, biases = [], []
        for l in range(len(sub.layer_widths) - 1):
            try:
                weights.append(arrays[f"{name}.w{l}"])
                biases.append(arrays[f"{name}.b{l}"])
            except KeyError as exc:
                raise StorageError(f"weights.bin is missing array {exc}") from exc
        params[name] = MlpParams(sub, weights, biases)
    embedding = None
    if spec.variant == M4:
        if "fourier.b_matrix" not in arrays:
            raise StorageError("weights.bin is missing array 'fourier.b_matrix'")
        embedding = FourierEmbedding(
            b_matrix=arrays["fourier.b_matrix"], sigma=spec.ffe_sigma, m_freq=spec.ffe_m
        )
    state = ModelState(
        params=params,
        embedding=embedding,
        stats=StandardizationStats.from_dict(manifest["standardization"]),
        history=manifest.get("history", {"train_loss": [], "val_loss": []}),
        seed=manifest.get("seed"),
        train_config=manifest.get("train_config", {}),
    )
    return spec, state
