"""Image sources with one canonical index order.

Two kinds of input:

* a directory of images — either ``class_x/img.png`` subdirectories (class
  names sorted -> label ids, emitted alongside the features) or a flat
  folder (no labels). Canonical order is the sorted relative path, so the
  same directory always enumerates the same way.
* a named torchvision dataset (``stl10``, ``cifar10``) already present
  under ``--data-root``; canonical order is the dataset's own index order.
  Nothing is ever downloaded here.
"""

from dataclasses import dataclass
from pathlib import Path

from .errors import DatasetError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}
NAMED_DATASETS = ("stl10", "cifar10")


@dataclass
class ImageSource:
    """Everything extraction needs: items in canonical order plus labels.

    ``items`` yields PIL images; ``labels`` is None when the source carries
    no annotation (flat folders, unlabeled splits).
    """

    n_samples: int
    labels: list[int] | None
    _loader: callable

    def __iter__(self):
        return self._loader()


def _folder_source(root: Path, split: str | None) -> ImageSource:
    from PIL import Image

    base = root / split if split else root
    if not base.is_dir():
        raise DatasetError(f"dataset directory {base} does not exist")

    class_dirs = sorted(d for d in base.iterdir() if d.is_dir())
    if class_dirs:
        files, labels = [], []
        for label, d in enumerate(class_dirs):
            members = sorted(
                p for p in d.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES
            )
            files += members
            labels += [label] * len(members)
        order = sorted(range(len(files)), key=lambda i: files[i].as_posix())
        files = [files[i] for i in order]
        labels = [labels[i] for i in order]
    else:
        files = sorted(p for p in base.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        labels = None
    if not files:
        raise DatasetError(f"no images under {base}")

    def loader():
        failures = []
        for path in files:
            try:
                with Image.open(path) as img:
                    yield img.convert("RGB")
            except Exception as exc:  # undecodable file: collect, keep going
                failures.append((str(path), str(exc)))
        if failures:
            raise DatasetError(
                f"{len(failures)} file(s) failed to decode", failures=failures
            )

    return ImageSource(n_samples=len(files), labels=labels, _loader=loader)


def _named_source(name: str, split: str | None, data_root: str | None) -> ImageSource:
    from torchvision import datasets as tvd

    if data_root is None:
        raise DatasetError(f"named dataset {name!r} needs --data-root")
    split = split or "train"
    try:
        if name == "stl10":
            ds = tvd.STL10(data_root, split=split, download=False)
        else:
            ds = tvd.CIFAR10(data_root, train=(split == "train"), download=False)
    except RuntimeError as exc:
        raise DatasetError(f"dataset {name!r} not present under {data_root}: {exc}") from exc

    targets = [int(ds[i][1]) for i in range(len(ds))]
    labels = None if all(t < 0 for t in targets) else targets  # unlabeled split

    def loader():
        for i in range(len(ds)):
            yield ds[i][0].convert("RGB")

    return ImageSource(n_samples=len(ds), labels=labels, _loader=loader)


def open_source(
    dataset: str, split: str | None = None, data_root: str | None = None
) -> ImageSource:
    """Resolve ``dataset`` as a directory first, then as a known name."""
    path = Path(dataset)
    if path.is_dir():
        return _folder_source(path, split)
    if dataset in NAMED_DATASETS:
        return _named_source(dataset, split, data_root)
    raise DatasetError(
        f"{dataset!r} is neither a directory nor a known dataset name "
        f"(known: {', '.join(NAMED_DATASETS)})"
    )
