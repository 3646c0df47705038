import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import rankdata

from shapeattr.errors import InvalidArgument
from shapeattr.geometry import StimulusSpec, build_stimulus
from shapeattr.render import Camera, Material, default_lighting, render
from shapeattr.textures import TEXTURE_KINDS, TextureSpec, brownian_values, histogram_equalize, procedural_texture


def test_equalize_examples():
    assert histogram_equalize([0.2, 0.5, 0.9]).tolist() == [0.0, 0.5, 1.0]
    assert histogram_equalize([3.0] * 5).tolist() == [0.5] * 5
    with pytest.raises(InvalidArgument):
        histogram_equalize([])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=200))
def test_equalize_order_preserving(values):
    out = histogram_equalize(values)
    v = np.asarray(values)
    assert out.min() >= 0 and out.max() <= 1
    i, j = np.triu_indices(len(v), 1)
    assert (np.sign(out[i] - out[j]) == np.sign(v[i] - v[j])).all()


def test_equalize_uniform_cdf(rng):
    for _ in range(20):
        n = int(rng.integers(10, 500))
        out = np.sort(histogram_equalize(rng.normal(size=n)))
        assert np.abs(out - np.arange(n) / (n - 1)).max() <= 1.0 / n


def test_none_is_base_color(rng):
    pts = rng.normal(size=(100, 3))
    out = procedural_texture(TextureSpec("None"), pts, (0.1, 0.2, 0.3))
    assert np.array_equal(out, np.tile([0.1, 0.2, 0.3], (100, 1)))


@pytest.mark.parametrize("kind", TEXTURE_KINDS)
def test_textures_deterministic_in_range(kind, rng):
    pts = rng.normal(size=(500, 3))
    a = procedural_texture(TextureSpec(kind, 4), pts)
    assert np.array_equal(a, procedural_texture(TextureSpec(kind, 4), pts))
    assert a.shape == (500, 3) and a.min() >= 0 and a.max() <= 1


def test_marble_monotone_in_brownian(rng):
    spec = TextureSpec("Marble", 9)
    pts = rng.normal(size=(2000, 3))
    b = brownian_values(TextureSpec("Brownian", 9), pts)
    m = procedural_texture(spec, pts)[:, 0]
    assert (rankdata(b) == rankdata(m)).all() or np.corrcoef(rankdata(b), rankdata(m))[0, 1] > 0.9999
    order = np.argsort(b)
    assert (np.diff(m[order]) >= -1e-12).all()


def test_textured_render_differs_from_plain():
    m = build_stimulus(StimulusSpec("Sphere", 0), 4)
    cam = Camera.orbit(20, 15, 4.0, 40, (48, 48))
    plain = render(m, cam, default_lighting(), Material())
    for kind in TEXTURE_KINDS[1:]:
        t = render(m, cam, default_lighting(), Material(texture=TextureSpec(kind, 1)))
        assert np.abs(t.rgb - plain.rgb).mean() > 1e-3


def test_texture_spec_validation():
    with pytest.raises(InvalidArgument):
        TextureSpec("Plaid")
    with pytest.raises(InvalidArgument):
        TextureSpec("Dots", scale=0)
