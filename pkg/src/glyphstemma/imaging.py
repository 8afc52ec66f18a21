"""Glyph segmentation: grayscale, Otsu binarization, opening, connected components.

Images are plain numpy arrays: ``(H, W)`` or ``(H, W, 3)`` uint8 for rasters and
``(H, W)`` bool for binary masks (True = ink).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center_y(self) -> float:
        return self.y + self.h / 2.0

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class OrderedBox:
    box: BoundingBox
    line: int


@dataclass
class GlyphCrop:
    manuscript_id: str
    index: int
    box: BoundingBox
    line: int
    patch: np.ndarray  # bool, (box.h + 2*pad, box.w + 2*pad)

    @property
    def glyph_id(self) -> str:
        return f"{self.manuscript_id}_{self.index:05d}"


@dataclass(frozen=True)
class SegmentationParams:
    kernel: int = 3
    min_area: int = 15
    max_area_fraction: float = 0.05
    min_side: int = 3
    padding: int = 2
    ink_is_dark: bool = True
    bin_height: int | None = None

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "min_area": self.min_area,
            "max_area_fraction": self.max_area_fraction,
            "min_side": self.min_side,
            "padding": self.padding,
            "ink_is_dark": self.ink_is_dark,
            "bin_height": self.bin_height,
        }


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as uint8, keeping 1 or 3 channels."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB") if im.mode in ("RGBA", "P", "CMYK", "LA") else im.convert("L")
        return np.asarray(im, dtype=np.uint8).copy()


def _check_raster(img: np.ndarray) -> None:
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3)):
        raise ValueError(f"unsupported image shape {img.shape}; need 1 or 3 channels")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")


def to_grayscale(img: np.ndarray) -> np.ndarray:
    _check_raster(img)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    rgb = img.astype(np.float64)
    lum = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    # round half up, not numpy's banker's rounding
    return np.clip(np.floor(lum + 0.5), 0, 255).astype(np.uint8)


def otsu_threshold(gray: np.ndarray) -> int:
    """Return the smallest threshold maximizing between-class variance.

    Pixels ``<= t`` form the first class. A single-intensity image returns that
    intensity.
    """
    if gray.size == 0:
        raise ValueError("empty image")
    hist = np.bincount(np.asarray(gray, dtype=np.uint8).ravel(), minlength=256).astype(np.float64)
    present = np.flatnonzero(hist)
    if present.size == 1:
        return int(present[0])

    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    total, total_s = w0[-1], s0[-1]
    w1 = total - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / w0
        mu1 = (total_s - s0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[(w0 == 0) | (w1 == 0)] = 0.0
    return int(np.argmax(between))  # argmax returns the first (smallest) maximizer


def binarize(gray: np.ndarray, t: int, ink_is_dark: bool = True) -> np.ndarray:
    if gray.size and gray.min() == gray.max():
        # no contrast, no ink
        return np.zeros(gray.shape, dtype=bool)
    return (gray <= t) if ink_is_dark else (gray > t)


def morphological_open(mask: np.ndarray, kernel: int = 3) -> np.ndarray:
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {kernel}")
    mask = np.asarray(mask, dtype=bool)
    if kernel == 1 or not mask.any():
        return mask.copy()
    structure = np.ones((kernel, kernel), dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=structure, border_value=0)
    return ndimage.binary_dilation(eroded, structure=structure)


def extract_components(mask: np.ndarray) -> list[BoundingBox]:
    """Tight boxes of the 8-connected foreground components, in label order."""
    labels, count = ndimage.label(np.asarray(mask, dtype=bool), structure=np.ones((3, 3), dtype=bool))
    boxes = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        ys, xs = sl
        boxes.append(BoundingBox(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start))
    return boxes


def filter_boxes(boxes, min_area: float, max_area: float, min_side: int) -> list[BoundingBox]:
    if min_area > max_area:
        raise ValueError("min_area must not exceed max_area")
    return [b for b in boxes if min_area <= b.area <= max_area and min(b.w, b.h) >= min_side]


def sort_reading_order(boxes, bin_height: int | None = None) -> list[OrderedBox]:
    """Group boxes into Y-bins and order by (bin, x).

    ``bin_height`` defaults to the median box height. Line ordinals are dense
    ranks of the occupied bins.
    """
    boxes = list(boxes)
    if not boxes:
        return []
    if bin_height is None:
        bin_height = max(1, int(round(float(np.median([b.h for b in boxes])))))
    if bin_height < 1:
        raise ValueError("bin_height must be >= 1")
    keyed = [(int(b.center_y // bin_height), b.x, pos, b) for pos, b in enumerate(boxes)]
    keyed.sort(key=lambda k: (k[0], k[1], k[2]))
    bins = sorted({k[0] for k in keyed})
    line_of = {b: i for i, b in enumerate(bins)}
    return [OrderedBox(k[3], line_of[k[0]]) for k in keyed]


def crop_glyphs(mask: np.ndarray, ordered, padding: int, manuscript_id: str) -> list[GlyphCrop]:
    if padding < 0:
        raise ValueError("padding must be >= 0")
    H, W = mask.shape
    crops = []
    for index, item in enumerate(ordered):
        box, line = (item.box, item.line) if isinstance(item, OrderedBox) else (item, 0)
        if box.x < 0 or box.y < 0 or box.x + box.w > W or box.y + box.h > H:
            raise ValueError(f"box {box} outside {W}x{H} image")
        patch = np.zeros((box.h + 2 * padding, box.w + 2 * padding), dtype=bool)
        x0, y0 = box.x - padding, box.y - padding
        sx0, sy0 = max(x0, 0), max(y0, 0)
        sx1, sy1 = min(x0 + patch.shape[1], W), min(y0 + patch.shape[0], H)
        patch[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = mask[sy0:sy1, sx0:sx1]
        crops.append(GlyphCrop(manuscript_id, index, box, line, patch))
    return crops


def segment_page(img: np.ndarray, params: SegmentationParams = SegmentationParams()):
    """Run the whole chain on one page; returns (ordered boxes, cleaned mask)."""
    gray = to_grayscale(img)
    t = otsu_threshold(gray)
    mask = morphological_open(binarize(gray, t, params.ink_is_dark), params.kernel)
    max_area = params.max_area_fraction * mask.size
    boxes = filter_boxes(extract_components(mask), params.min_area, max_area, params.min_side)
    return sort_reading_order(boxes, params.bin_height), mask


def segment_pages(images, manuscript_id: str, params: SegmentationParams = SegmentationParams()):
    """Segment several pages of one manuscript into one contiguous crop list.

    Returns the crops and, per crop, the page number it came from.
    """
    crops: list[GlyphCrop] = []
    pages: list[int] = []
    line_offset = 0
    for page_no, img in enumerate(images):
        ordered, mask = segment_page(img, params)
        page_crops = crop_glyphs(mask, ordered, params.padding, manuscript_id)
        for c in page_crops:
            crops.append(GlyphCrop(manuscript_id, len(crops), c.box, c.line + line_offset, c.patch))
            pages.append(page_no)
        if ordered:
            line_offset += max(o.line for o in ordered) + 1
    return crops, pages


def save_patch(patch: np.ndarray, path: str | Path) -> None:
    # ink drawn black on white, matching the source pages
    Image.fromarray(np.where(patch, 0, 255).astype(np.uint8), mode="L").save(path, format="PNG")


def load_patch(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) < 128
