import numpy as np
import pytest

from dvp.composer import CANVAS_GRAY, compose, crop_canvas
from dvp.errors import DimensionMismatch, MissingImage
from dvp.layout import Arrangement, GridSpec, assign_slots, default_grid
from dvp.raster import pixel_digest, resize_cover, save_png, load_image
from dvp.similarity import CandidateTable, MatchScore


def solid(color, h=64, w=64):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:] = color
    return img


def gradient(h, w):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:, :, 0] = np.linspace(0, 255, w)[None, :]
    img[:, :, 1] = np.linspace(0, 255, h)[:, None]
    img[:, :, 2] = 128
    return img


def full_assignment(grid, images):
    ids = sorted(images)
    placements = {cell: ids[i % len(ids)] for i, cell in enumerate(grid.reference_cells())}
    from dvp.layout import SlotAssignment

    return SlotAssignment(placements=placements)


@pytest.fixture
def grid256():
    return GridSpec(rows=3, cols=3, cell_px=256, canvas_cells=frozenset({(1, 1)}))


def test_composite_geometry_and_mask(grid256):
    images = {f"img{i}": solid((i * 20, 10, 200 - i * 10)) for i in range(8)}
    vp = compose(full_assignment(grid256, images), images, grid256)
    assert vp.composite.shape == (768, 768, 3)
    assert vp.mask.shape == (768, 768)
    # mask white exactly on [256,512) x [256,512)
    white = np.zeros((768, 768), dtype=bool)
    white[256:512, 256:512] = True
    assert np.array_equal(vp.mask == 255, white)
    assert set(np.unique(vp.mask)) <= {0, 255}
    assert int((vp.mask == 255).sum()) == 256 * 256
    # canvas placeholder is mid-gray
    assert np.all(vp.composite[256:512, 256:512] == CANVAS_GRAY)


def test_resize_cover_spec_example():
    # 512x256 source into a 256 cell: min side already fits, crop cols [128, 384)
    src = gradient(256, 512)
    out = resize_cover(src, 256, 256)
    np.testing.assert_array_equal(out, src[:, 128:384])


def test_resize_cover_constant_image_any_scale():
    src = solid((10, 200, 30), h=31, w=77)
    out = resize_cover(src, 64, 64)
    assert out.shape == (64, 64, 3)
    assert np.all(out == (10, 200, 30))


def test_resize_cover_identity():
    src = gradient(64, 64)
    np.testing.assert_array_equal(resize_cover(src, 64, 64), src)


def test_locality_per_cell(grid256):
    rng = np.random.default_rng(3)
    images = {
        f"img{i}": rng.integers(0, 255, size=(100, 140, 3), dtype=np.uint8)
        for i in range(8)
    }
    assignment = full_assignment(grid256, images)
    vp = compose(assignment, images, grid256)
    p = grid256.cell_px
    for (r, c), image_id in assignment.placements.items():
        cell_pixels = vp.composite[r * p:(r + 1) * p, c * p:(c + 1) * p]
        np.testing.assert_array_equal(cell_pixels, resize_cover(images[image_id], p, p))


def test_compose_deterministic_digest(grid256):
    rng = np.random.default_rng(5)
    images = {f"img{i}": rng.integers(0, 255, size=(80, 80, 3), dtype=np.uint8) for i in range(8)}
    a = compose(full_assignment(grid256, images), images, grid256)
    b = compose(full_assignment(grid256, images), images, grid256)
    assert pixel_digest(a.composite) == pixel_digest(b.composite)
    assert pixel_digest(a.mask[..., None].repeat(3, axis=-1)) == \
        pixel_digest(b.mask[..., None].repeat(3, axis=-1))


def test_png_roundtrip_digest_stable(tmp_path, grid256):
    images = {f"img{i}": gradient(90, 70) for i in range(8)}
    vp = compose(full_assignment(grid256, images), images, grid256)
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    save_png(vp.composite, p1)
    save_png(vp.composite, p2)
    assert p1.read_bytes() == p2.read_bytes()
    np.testing.assert_array_equal(load_image(p1), vp.composite)


def test_half_grid_left_reference_right_canvas():
    grid = GridSpec(rows=1, cols=2, cell_px=32, canvas_cells=frozenset({(0, 1)}))
    images = {"only": solid((1, 2, 3), h=32, w=32)}
    from dvp.layout import SlotAssignment

    vp = compose(SlotAssignment(placements={(0, 0): "only"}), images, grid)
    assert np.all(vp.composite[:, :32] == (1, 2, 3))
    assert np.all(vp.composite[:, 32:] == CANVAS_GRAY)
    assert np.all(vp.mask[:, 32:] == 255) and np.all(vp.mask[:, :32] == 0)


def test_compose_missing_image(grid256):
    from dvp.layout import SlotAssignment

    placements = {cell: "ghost" for cell in grid256.reference_cells()}
    with pytest.raises(MissingImage):
        compose(SlotAssignment(placements=placements), {}, grid256)


def test_crop_canvas_offsets(grid256):
    images = {f"img{i}": solid((i, i, i)) for i in range(8)}
    vp = compose(full_assignment(grid256, images), images, grid256)
    crop = crop_canvas(vp.composite, grid256)
    assert crop.shape == (256, 256, 3)
    assert np.all(crop == CANVAS_GRAY)  # round-trip of the composite is the placeholder


def test_crop_canvas_dimension_mismatch(grid256):
    with pytest.raises(DimensionMismatch):
        crop_canvas(np.zeros((10, 10, 3), dtype=np.uint8), grid256)


def test_multi_cell_canvas():
    grid = GridSpec(rows=2, cols=3, cell_px=16,
                    canvas_cells=frozenset({(0, 1), (1, 1)}))
    images = {f"img{i}": solid((5, 5, 5), h=16, w=16) for i in range(4)}
    vp = compose(full_assignment(grid, images), images, grid)
    assert int((vp.mask == 255).sum()) == 2 * 16 * 16
    crop = crop_canvas(vp.composite, grid)
    assert crop.shape == (32, 16, 3)
