"""Image <-> patch-matrix conversion, quality metrics and grayscale I/O.

Patch layout: each column of the patch matrix is one patch flattened
row-major; columns are ordered left-to-right, then top-to-bottom. Rows and
columns of the image that no patch position covers are dropped on
extraction (truncation to the largest covered region).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import ConfigError, check_count

PSNR_CAP = 200.0
BT601 = (0.299, 0.587, 0.114)


@dataclass(eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.size == 0:
            raise ConfigError(f"image must be a non-empty 2-D array, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ConfigError("image contains non-finite pixels")
        self.pixels = p

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(eq=False)
class PatchGrid:
    patch_w: int
    patch_h: int
    stride: int
    patch_matrix: np.ndarray
    # number of patch positions along each axis
    rows: int
    cols: int

    @property
    def n_patches(self):
        return self.patch_matrix.shape[1]


def _pixels(img):
    return img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)


def _positions(size, patch, stride):
    return (size - patch) // stride + 1


def extract_patches(img, patch_w=8, patch_h=8, stride=8):
    pix = _pixels(img)
    patch_w, patch_h = check_count(patch_w, "patch_w"), check_count(patch_h, "patch_h")
    stride = check_count(stride, "stride")
    H, W = pix.shape
    if patch_h > H or patch_w > W:
        raise ConfigError(f"patch {patch_h}x{patch_w} larger than image {H}x{W}")
    nr, nc = _positions(H, patch_h, stride), _positions(W, patch_w, stride)
    # (nr, nc, ph, pw) view of all patch positions
    windows = np.lib.stride_tricks.sliding_window_view(pix, (patch_h, patch_w))[::stride, ::stride]
    cols = windows[:nr, :nc].reshape(nr * nc, patch_h * patch_w).T
    return PatchGrid(patch_w, patch_h, stride, cols.astype(np.complex128), nr, nc)


def assemble_patches(grid, width, height):
    """Average the real parts of overlapping patches and clamp to [0, 1].

    Pixels covered by no patch (the truncated border) are set to 0.
    """
    width, height = check_count(width, "width"), check_count(height, "height")
    ph, pw, s = grid.patch_h, grid.patch_w, grid.stride
    if (_positions(height, ph, s), _positions(width, pw, s)) != (grid.rows, grid.cols) \
            or grid.patch_matrix.shape != (ph * pw, grid.rows * grid.cols):
        raise ConfigError("patch grid does not match the requested image size")
    acc = np.zeros((height, width))
    cnt = np.zeros((height, width))
    patches = np.real(grid.patch_matrix).T.reshape(grid.rows, grid.cols, ph, pw)
    for i in range(grid.rows):
        for j in range(grid.cols):
            acc[i * s:i * s + ph, j * s:j * s + pw] += patches[i, j]
            cnt[i * s:i * s + ph, j * s:j * s + pw] += 1
    out = np.divide(acc, cnt, out=np.zeros_like(acc), where=cnt > 0)
    return GrayImage(np.clip(out, 0.0, 1.0))


def _pair(recon, ref):
    a, b = _pixels(recon), _pixels(ref)
    if a.shape != b.shape:
        raise ConfigError(f"image sizes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(recon, ref, peak=1.0):
    """PSNR in dB; ``inf`` for identical images."""
    a, b = _pair(recon, ref)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return np.inf
    return float(10.0 * np.log10(peak ** 2 / mse))


def capped_psnr(recon, ref, peak=1.0):
    return min(psnr(recon, ref, peak), PSNR_CAP)


def _window_sums(a, w):
    # exact-order integral image, then w x w box sums at stride 1
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    s[1:, 1:] = a.cumsum(0).cumsum(1)
    return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]


def ssim(recon, ref, peak=1.0, win=8):
    """Mean SSIM over all ``win x win`` windows (uniform weights, stride 1).

    Uses population statistics inside each window and the usual constants
    ``C1 = (0.01 peak)^2``, ``C2 = (0.03 peak)^2``.
    """
    a, b = _pair(recon, ref)
    if min(a.shape) < win:
        raise ConfigError(f"ssim needs images of at least {win}x{win}")
    n = float(win * win)
    # centre on the global mean first so the box-sum variances do not cancel
    off = 0.5 * (a.mean() + b.mean())
    a, b = a - off, b - off
    mu_a, mu_b = _window_sums(a, win) / n, _window_sums(b, win) / n
    var_a = _window_sums(a * a, win) / n - mu_a ** 2
    var_b = _window_sums(b * b, win) / n - mu_b ** 2
    cov = _window_sums(a * b, win) / n - mu_a * mu_b
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    mu_a, mu_b = mu_a + off, mu_b + off
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def to_grayscale(rgb):
    """BT.601 luma of an ``(H, W, 3)`` array (alpha channels ignored)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise ConfigError(f"cannot convert shape {rgb.shape} to grayscale")
    return rgb[..., :3] @ np.array(BT601)


def read_pgm(path):
    """Read a binary 8-bit PGM (P5); pixels are ``byte / 255``."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P5" or maxval != 255:
        raise ConfigError(f"{path}: only 8-bit binary PGM (P5, maxval 255) is supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return GrayImage(raster.reshape(h, w) / 255.0)


def write_pgm(path, img):
    pix = _pixels(img)
    raster = np.round(np.clip(pix, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + raster.tobytes())


def load_image(path):
    """Load a PGM directly, anything else through Pillow, as grayscale in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return GrayImage(to_grayscale(arr))


def synthetic_texture(size=256, seed=0, waves=12):
    """Deterministic smooth texture in [0, 1]: a random sum of plane waves.

    Frequencies are drawn up to a quarter of the sampling rate so 8x8
    patches carry visible structure.
    """
    size = check_count(size, "size")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size))
    for _ in range(check_count(waves, "waves")):
        fx, fy = rng.uniform(-size / 4, size / 4, 2)
        img += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * (fx * xx + fy * yy) + rng.uniform(0, 2 * np.pi))
    img -= img.min()
    return GrayImage(img / img.max())
