import os
import subprocess
import sys

import numpy as np

SNIPPET = """
import numpy as np
from shapeattr import _accel
from shapeattr.experiments import StimulusRenderer
from shapeattr.geometry import StimulusSpec
fg = StimulusRenderer(subdivision=3, image_size=40).foreground(StimulusSpec("Noise", 0.3, 7))
print(_accel.backend())
np.save({path!r}, fg.rgb)
"""


def render_with(flag, path):
    env = dict(os.environ)
    env["SHAPEATTR_DISABLE_NUMBA"] = flag
    r = subprocess.run([sys.executable, "-c", SNIPPET.format(path=str(path))], capture_output=True, text=True, env=env)
    assert r.returncode == 0, r.stderr
    return r.stdout.strip(), np.load(path)


def test_env_flag_selects_backend_and_outputs_match(tmp_path):
    name_a, img_a = render_with("0", tmp_path / "a.npy")
    name_b, img_b = render_with("1", tmp_path / "b.npy")
    assert (name_a, name_b) == ("numba", "numpy")
    assert np.array_equal(img_a, img_b)


def test_set_backend_roundtrip():
    from shapeattr import _accel

    before = _accel.backend()
    try:
        _accel.set_backend("numpy")
        assert _accel.backend() == "numpy"
    finally:
        _accel.set_backend(before)
