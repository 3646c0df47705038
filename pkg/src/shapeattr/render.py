"""Camera, lighting and Blinn-Phong shading on top of the z-buffer rasterizer."""

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DegenerateStimulus, InvalidArgument
from .raster import rasterize
from .textures import TextureSpec, procedural_texture


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class Camera:
    eye: tuple = (0.0, 0.0, 5.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    vertical_fov: float = 40.0
    image_size: tuple = (72, 72)

    def __post_init__(self):
        if not 0 < self.vertical_fov < 180:
            raise InvalidArgument("vertical_fov must be in (0, 180)")
        w, h = self.image_size
        if w < 16 or h < 16:
            raise InvalidArgument("image must be at least 16x16 pixels")
        fwd = np.subtract(self.look_at, self.eye)
        if np.linalg.norm(fwd) == 0:
            raise InvalidArgument("eye and look_at coincide")
        if np.linalg.norm(np.cross(fwd, self.up)) < 1e-9 * np.linalg.norm(fwd) * np.linalg.norm(self.up):
            raise InvalidArgument("up vector is parallel to the view direction")

    @classmethod
    def orbit(cls, azimuth=0.0, elevation=0.0, distance=5.0, vertical_fov=40.0, image_size=(72, 72)):
        """Camera on a sphere around the origin; azimuth 0 looks down -Z, angles in degrees."""
        az, el = math.radians(azimuth), math.radians(elevation)
        eye = (
            distance * math.sin(az) * math.cos(el),
            distance * math.sin(el),
            distance * math.cos(az) * math.cos(el),
        )
        return cls(eye, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), vertical_fov, tuple(image_size))

    @property
    def width(self):
        return int(self.image_size[0])

    @property
    def height(self):
        return int(self.image_size[1])

    def basis(self):
        f = _unit(np.subtract(self.look_at, self.eye))
        r = _unit(np.cross(f, self.up))
        u = np.cross(r, f)
        return r, u, f

    def project(self, points):
        """Pixel coordinates and view depth of world-space points."""
        r, u, f = self.basis()
        d = np.asarray(points, dtype=np.float64) - np.asarray(self.eye, dtype=np.float64)
        xc, yc, zc = d @ r, d @ u, d @ f
        focal = 0.5 * self.height / math.tan(math.radians(self.vertical_fov) / 2.0)
        safe = np.where(np.abs(zc) > 1e-12, zc, 1e-12)
        sx = 0.5 * self.width + focal * xc / safe
        sy = 0.5 * self.height - focal * yc / safe
        return sx, sy, zc


@dataclass(frozen=True)
class DirectionalLight:
    direction: tuple  # unit vector from the surface towards the light
    color: tuple = (0.8, 0.8, 0.8)


@dataclass(frozen=True)
class LightingSetup:
    ambient: tuple = (0.25, 0.25, 0.25)
    directionals: tuple = ()

    def __post_init__(self):
        if not 1 <= len(self.directionals) <= 6:
            raise InvalidArgument("a lighting setup needs 1 to 6 directional lights")
        if min(self.ambient) < 0:
            raise InvalidArgument("ambient intensity must be >= 0")
        for light in self.directionals:
            if abs(np.linalg.norm(light.direction) - 1.0) > 1e-9:
                raise InvalidArgument("light directions must be unit vectors")
            if min(light.color) < 0:
                raise InvalidArgument("light intensities must be >= 0")

    def scaled(self, s):
        return LightingSetup(
            tuple(s * a for a in self.ambient),
            tuple(DirectionalLight(l.direction, tuple(s * c for c in l.color)) for l in self.directionals),
        )


def default_lighting():
    """Soft ambient plus one directional light from the upper left, in front."""
    return LightingSetup((0.25, 0.25, 0.25), (DirectionalLight(tuple(_unit([-1.0, 1.0, 1.0])), (0.8, 0.8, 0.8)),))


def rotate_lighting(lighting, degrees):
    """Turn every light about the vertical axis, the way :meth:`Camera.orbit` turns the eye."""
    d = math.radians(degrees)
    c, s = math.cos(d), math.sin(d)
    lights = tuple(
        DirectionalLight((x * c + z * s, y, z * c - x * s), light.color)
        for light in lighting.directionals
        for x, y, z in [light.direction]
    )
    return LightingSetup(lighting.ambient, lights)


def random_lighting(seed, grayscale=False, intensity=(0.15, 0.9), ambient=0.15):
    """1-6 directional lights on the upper hemisphere with random colours."""
    rng = np.random.default_rng([0x11A7, int(seed) & 0xFFFFFFFF])
    count = int(rng.integers(1, 7))
    lights = []
    for _ in range(count):
        d = rng.normal(size=3)
        d[1] = abs(d[1])
        d = d / np.linalg.norm(d)
        if grayscale:
            c = np.full(3, rng.uniform(*intensity))
        else:
            c = rng.uniform(*intensity, size=3)
        lights.append(DirectionalLight(tuple(float(x) for x in d), tuple(float(x) for x in c)))
    return LightingSetup((ambient,) * 3, tuple(lights))


@dataclass(frozen=True)
class Material:
    base_color: tuple = (0.6, 0.6, 0.6)
    specular_strength: float = 0.4
    shininess: float = 32.0
    texture: TextureSpec = None

    def __post_init__(self):
        if min(self.base_color) < 0 or max(self.base_color) > 1:
            raise InvalidArgument("base_color components must be in [0, 1]")
        if self.specular_strength < 0 or not self.shininess > 0:
            raise InvalidArgument("specular_strength must be >= 0 and shininess > 0")


@dataclass
class RasterImage:
    """``rgb`` is ``(H, W, 3)`` in [0, 1]; ``mask`` is ``(H, W)`` uint8 coverage.

    ``normals`` carries per-pixel face normals when rendered in debug mode.
    """

    rgb: np.ndarray
    mask: np.ndarray
    normals: np.ndarray = None

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.uint8)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or self.rgb.shape[:2] != self.mask.shape:
            raise InvalidArgument("rgb must be (H, W, 3) matching an (H, W) mask")

    @property
    def height(self):
        return self.rgb.shape[0]

    @property
    def width(self):
        return self.rgb.shape[1]

    def coverage(self):
        return float(self.mask.mean())


def _rasterize_mesh(mesh, camera):
    sx, sy, sz = camera.project(mesh.vertices)
    return rasterize(sx, sy, sz, mesh.faces, camera.width, camera.height)


def shade(normals, positions, view_dirs, albedo, lighting, material):
    """Blinn-Phong radiance (unclamped) for arrays of surface samples."""
    out = np.asarray(lighting.ambient, dtype=np.float64)[None, :] * np.ones((len(normals), 1))
    for light in lighting.directionals:
        ldir = np.asarray(light.direction, dtype=np.float64)
        col = np.asarray(light.color, dtype=np.float64)
        ndl = normals @ ldir
        diffuse = np.maximum(ndl, 0.0)
        h = view_dirs + ldir
        h /= np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-12)
        ndh = np.maximum(np.einsum("ij,ij->i", normals, h), 0.0)
        spec = np.where(ndl > 0, material.specular_strength * ndh**material.shininess, 0.0)
        out = out + (diffuse + spec)[:, None] * col[None, :]
    return albedo * out


def render(mesh, camera, lighting, material, debug=False, clamp=True):
    """Rasterize and shade ``mesh``; uncovered pixels are black with mask 0."""
    mesh.validate()
    face_id, bary, _ = _rasterize_mesh(mesh, camera)
    h, w = face_id.shape
    mask = (face_id >= 0).astype(np.uint8)
    rgb = np.zeros((h, w, 3))
    ys, xs = np.nonzero(face_id >= 0)
    fid = face_id[ys, xs]
    b = bary[ys, xs]
    tri = mesh.faces[fid]
    pos = np.einsum("nk,nkj->nj", b, mesh.vertices[tri])
    nrm = np.einsum("nk,nkj->nj", b, mesh.normals[tri])
    nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-12)
    view = np.asarray(camera.eye, dtype=np.float64)[None, :] - pos
    view /= np.linalg.norm(view, axis=1, keepdims=True)
    if material.texture is None:
        albedo = np.broadcast_to(np.asarray(material.base_color, dtype=np.float64), pos.shape)
    else:
        albedo = procedural_texture(material.texture, pos, material.base_color)
    color = shade(nrm, pos, view, albedo, lighting, material)
    rgb[ys, xs] = np.clip(color, 0.0, 1.0) if clamp else color
    normals = None
    if debug:
        normals = np.zeros((h, w, 3))
        normals[ys, xs] = mesh.face_normals()[fid]
    return RasterImage(rgb, mask, normals)


def silhouette(mesh, camera):
    """Binary coverage mask, identical to the mask channel of :func:`render`."""
    face_id, _, _ = _rasterize_mesh(mesh, camera)
    return (face_id >= 0).astype(np.uint8)


def composite(foreground, background):
    """Foreground pixels where covered, background elsewhere; keeps the foreground mask."""
    bg = background.rgb if isinstance(background, RasterImage) else np.asarray(background, dtype=np.float64)
    if bg.shape != foreground.rgb.shape:
        raise InvalidArgument(f"size mismatch: {foreground.rgb.shape} vs {bg.shape}")
    m = foreground.mask.astype(bool)[..., None]
    return RasterImage(np.where(m, foreground.rgb, bg), foreground.mask.copy(), foreground.normals)


# ------------------------------------------------------------------ hybrids

_ANGLE_BINS = 180


def _mask_centroid(mask):
    ys, xs = np.nonzero(mask)
    return np.array([xs.mean() + 0.5, ys.mean() + 0.5])


def _radial_extent(mask, center):
    """Max centre-to-pixel radius per angular bin, gaps filled circularly."""
    ys, xs = np.nonzero(mask)
    dx = xs + 0.5 - center[0]
    dy = ys + 0.5 - center[1]
    ang = np.arctan2(dy, dx)
    rad = np.hypot(dx, dy)
    bins = ((ang + np.pi) / (2 * np.pi) * _ANGLE_BINS).astype(np.int64) % _ANGLE_BINS
    ext = np.full(_ANGLE_BINS, -1.0)
    np.maximum.at(ext, bins, rad)
    have = np.flatnonzero(ext >= 0)
    if len(have) < _ANGLE_BINS:
        centers = np.arange(_ANGLE_BINS)
        ext = np.interp(centers, have, ext[have], period=_ANGLE_BINS)
    return np.maximum(ext, 0.5)


def _extent_at(ext, ang):
    pos = (ang + np.pi) / (2 * np.pi) * _ANGLE_BINS - 0.5
    return np.interp(pos, np.arange(_ANGLE_BINS), ext, period=_ANGLE_BINS)


def _fill_uncovered(rgb, mask):
    if mask.all():
        return rgb
    _, (iy, ix) = ndimage.distance_transform_edt(mask == 0, return_indices=True)
    return rgb[iy, ix]


def _bilinear(img, x, y):
    h, w = img.shape[:2]
    fx = np.clip(x - 0.5, 0.0, w - 1.0)
    fy = np.clip(y - 0.5, 0.0, h - 1.0)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = (fx - x0)[:, None]
    ty = (fy - y0)[:, None]
    top = img[y0, x0] * (1 - tx) + img[y0, x1] * tx
    bot = img[y1, x0] * (1 - tx) + img[y1, x1] * tx
    return top * (1 - ty) + bot * ty


def hybrid_render(contour_mesh, shading_mesh, camera, lighting, material):
    """Shading of ``shading_mesh`` inside the occluding contour of ``contour_mesh``.

    Each covered pixel is mapped radially about the contour silhouette's
    centroid: its offset is rescaled by the ratio of the shading and contour
    silhouettes' radial extents in that direction and the shaded image is
    sampled bilinearly there.
    """
    shaded = render(shading_mesh, camera, lighting, material)
    cmask = silhouette(contour_mesh, camera)
    if not cmask.any() or not shaded.mask.any():
        raise DegenerateStimulus("hybrid stimulus has an empty silhouette")
    cc = _mask_centroid(cmask)
    cs = _mask_centroid(shaded.mask)
    ext_c = _radial_extent(cmask, cc)
    ext_s = _radial_extent(shaded.mask, cs)
    ys, xs = np.nonzero(cmask)
    dx = xs + 0.5 - cc[0]
    dy = ys + 0.5 - cc[1]
    ang = np.arctan2(dy, dx)
    ratio = _extent_at(ext_s, ang) / _extent_at(ext_c, ang)
    src_x = cs[0] + dx * ratio
    src_y = cs[1] + dy * ratio
    filled = _fill_uncovered(shaded.rgb, shaded.mask)
    rgb = np.zeros_like(shaded.rgb)
    rgb[ys, xs] = _bilinear(filled, src_x, src_y)
    return RasterImage(rgb, cmask)


# --------------------------------------------------------------------- PNG IO


def to_uint8(rgb):
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(path, image, with_mask=True):
    """8-bit RGB PNG; the mask goes to the alpha channel when ``with_mask``."""
    if isinstance(image, RasterImage):
        rgb = to_uint8(image.rgb)
        if with_mask:
            alpha = (image.mask * 255).astype(np.uint8)[..., None]
            Image.fromarray(np.concatenate([rgb, alpha], axis=2), "RGBA").save(path)
            return
    else:
        rgb = to_uint8(np.asarray(image))
    Image.fromarray(rgb, "RGB").save(path)


def load_png(path, size=None):
    """Read a PNG as a RasterImage; alpha (if any) becomes the mask."""
    im = Image.open(path)
    if size is not None and im.size != tuple(size):
        im = im.resize(tuple(size), Image.BILINEAR)
    arr = np.asarray(im)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    rgb = arr[..., :3].astype(np.float64) / 255.0
    if arr.shape[2] == 4:
        mask = (arr[..., 3] >= 128).astype(np.uint8)
    else:
        mask = np.ones(arr.shape[:2], dtype=np.uint8)
    return RasterImage(rgb, mask)
