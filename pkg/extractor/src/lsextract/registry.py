"""The model registry: which encoders exist and how each one wants its input.

Preprocessing is pinned per model id in ``registry.json`` (committed next to
this file) so that an extraction is reproducible from the id alone. Every
entry resolves to a frozen backbone in eval mode with its classifier head
removed, plus the deterministic transform matching how the encoder was
trained — resize, center crop, normalize. Never any augmentation.
"""

import json
from dataclasses import dataclass
from importlib import resources

import torch
from torch import nn

from .errors import RegistryError

_ARCHS = {
    "resnet18": lambda: _torchvision_resnet("resnet18"),
    "resnet50": lambda: _torchvision_resnet("resnet50"),
}


def _torchvision_resnet(arch: str) -> nn.Module:
    from torchvision import models

    return getattr(models, arch)(weights=None)


@dataclass(frozen=True)
class ModelSpec:
    """One registry entry: architecture, weight source, and preprocessing."""

    name: str
    arch: str
    weights: str  # torchvision weight enum name, "random", or "checkpoint"
    dim: int
    resize: int
    crop: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    seed: int = 0


def load_registry() -> dict[str, ModelSpec]:
    raw = json.loads(resources.files(__package__).joinpath("registry.json").read_text())
    out = {}
    for name, entry in raw.items():
        try:
            out[name] = ModelSpec(
                name=name,
                arch=entry["arch"],
                weights=entry["weights"],
                dim=int(entry["dim"]),
                resize=int(entry["resize"]),
                crop=int(entry["crop"]),
                mean=tuple(entry["mean"]),
                std=tuple(entry["std"]),
                seed=int(entry.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RegistryError(f"registry entry {name!r} is malformed: {exc}") from exc
        if out[name].arch not in _ARCHS:
            raise RegistryError(
                f"registry entry {name!r} names unknown architecture {out[name].arch!r}"
            )
    return out


def get_spec(model_id: str) -> ModelSpec:
    registry = load_registry()
    if model_id not in registry:
        known = ", ".join(sorted(registry))
        raise RegistryError(f"unknown model {model_id!r} (known: {known})")
    return registry[model_id]


def strip_checkpoint_prefixes(state: dict) -> dict:
    """Reduce a training checkpoint's keys to plain backbone keys.

    Self-supervised checkpoints commonly wrap the backbone ("module." from
    DataParallel, "encoder_q." from momentum-contrast training, "backbone."
    from generic wrappers) and carry projection heads we don't want. Strips
    the wrappers, drops classifier/projection keys, keeps everything else.
    """
    if "state_dict" in state and isinstance(state["state_dict"], dict):
        state = state["state_dict"]
    out = {}
    for key, value in state.items():
        for prefix in ("module.encoder_q.", "encoder_q.", "module.", "backbone."):
            if key.startswith(prefix):
                key = key[len(prefix):]
                break
        if key.startswith(("fc.", "head.", "classifier.", "projector.", "mlp.")):
            continue
        out[key] = value
    return out


def _load_checkpoint(model: nn.Module, path: str) -> None:
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise RegistryError(f"cannot read checkpoint {path}: {exc}") from exc
    stripped = strip_checkpoint_prefixes(state)
    try:
        missing, unexpected = model.load_state_dict(stripped, strict=False)
    except RuntimeError as exc:  # shape mismatch on a shared key name
        raise RegistryError(
            f"checkpoint {path} does not match {type(model).__name__}: {exc}"
        ) from exc
    # The classifier head is allowed to be absent (we discard it anyway);
    # anything else off means the checkpoint does not fit this architecture.
    real_missing = [k for k in missing if not k.startswith("fc.")]
    if real_missing or unexpected:
        raise RegistryError(
            f"checkpoint {path} does not match {type(model).__name__}: "
            f"missing {real_missing[:3]}, unexpected {list(unexpected)[:3]}"
        )


def build_model(spec: ModelSpec, checkpoint: str | None = None) -> nn.Module:
    """Frozen encoder in eval mode: pooled features out, no classifier."""
    if spec.weights == "random":
        # Seeded init so "the same extraction" means the same weights too.
        torch.manual_seed(spec.seed)
        model = _ARCHS[spec.arch]()
    elif spec.weights == "checkpoint":
        if checkpoint is None:
            raise RegistryError(f"model {spec.name!r} needs --checkpoint")
        model = _ARCHS[spec.arch]()
        _load_checkpoint(model, checkpoint)
    else:
        from torchvision import models

        model = models.get_model(spec.arch, weights=spec.weights)
    model.fc = nn.Identity()
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def build_transform(spec: ModelSpec):
    from torchvision import transforms

    return transforms.Compose(
        [
            transforms.Resize(spec.resize),
            transforms.CenterCrop(spec.crop),
            transforms.ToTensor(),
            transforms.Normalize(mean=spec.mean, std=spec.std),
        ]
    )
