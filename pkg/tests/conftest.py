import numpy as np
import pytest

from blurforge.camera_geom import CameraIntrinsics


@pytest.fixture
def k600():
    """600 px focal, principal point (320, 240), 640x480 sensor."""
    return CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def natural_gray(name, shape=None):
    """A skimage sample image as linear-light floats, optionally resized."""
    import skimage.data
    from skimage.color import rgb2gray
    from skimage.transform import resize

    img = getattr(skimage.data, name)()
    img = img.astype(float)
    if img.ndim == 3:
        img = rgb2gray(img[..., :3] / 255.0)
    else:
        img = img / img.max()
    if shape is not None:
        img = resize(img, shape, anti_aliasing=True)
    return np.clip(img, 0.0, 1.0)


SAMPLE_IMAGES = ("astronaut", "camera", "coffee", "chelsea", "coins", "moon", "rocket", "clock",
                 "hubble_deep_field", "immunohistochemistry", "grass", "gravel", "brick", "page",
                 "retina", "text", "horse", "cat", "logo", "binary_blobs")


def make_dataset_inputs(root, n=3, size=(96, 72), motion=None, rate=200.0, duration=1.0):
    """Write ``n`` PNG backgrounds and a gyro CSV under ``root``; return both paths."""
    from PIL import Image

    from blurforge.images import save_image
    from blurforge.imu_ingest import write_gyro_log
    from blurforge.motion import MotionSpec, sample_gyro

    bg = root / "backgrounds"
    bg.mkdir(parents=True)
    for i in range(n):
        name = SAMPLE_IMAGES[i % len(SAMPLE_IMAGES)]
        img = natural_gray(name, (size[1], size[0]))
        save_image(bg / f"{i:03d}_{name}.png", img, linear=False)
    # a non-image file must be ignored
    (bg / "notes.txt").write_text("not an image\n")
    motion = motion if motion is not None else MotionSpec((0.3, -0.5, 0.2))
    log_path = root / "gyro.csv"
    log_path.write_text(write_gyro_log(sample_gyro(motion, 0.0, duration, rate)))
    return bg, log_path


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one ``[PASS]``/``[FAIL]`` line per criterion for the terminal summary."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
