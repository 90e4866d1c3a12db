import pytest
import torch

from mvanet.decoder import ViewLayout
from mvanet.errors import GeometryError
from mvanet.geometry import PatchGrid
from mvanet.head import RearrangementHead, ShallowStem, seam_discontinuity
from mvanet.model import MVANet

GRID = PatchGrid.for_image(256, 256, 2)
LAYOUT = ViewLayout(4, True)


def test_output_shape():
    head = RearrangementHead(8)
    logits = head(torch.randn(5, 8, 32, 32), ShallowStem(8)(torch.rand(1, 3, 256, 256)), GRID, LAYOUT, (256, 256))
    assert logits.shape == (1, 1, 256, 256)


def test_shallow_stem_is_half_resolution():
    assert ShallowStem(8)(torch.rand(1, 3, 64, 64)).shape == (1, 8, 32, 32)


def test_incompatible_shallow_features():
    head = RearrangementHead(8)
    with pytest.raises(GeometryError, match="shallow"):
        head(torch.randn(5, 8, 32, 32), torch.randn(1, 8, 64, 32), GRID, LAYOUT, (256, 256))


def test_zeroed_smoothing_head_removes_branch():
    head = RearrangementHead(8).eval()
    for p in head.smooth.parameters():
        torch.nn.init.zeros_(p)
    d1 = torch.randn(5, 8, 32, 32)
    merged = head.merge(d1, GRID, LAYOUT)
    from mvanet.geometry import resize

    torch.testing.assert_close(merged, resize(d1[4:], (64, 64)))
    # changing the locals no longer affects the merged map
    d2 = d1.clone()
    d2[:4] = torch.randn(4, 8, 32, 32)
    assert torch.equal(head.merge(d2, GRID, LAYOUT), merged)


def test_vrm_off_is_shape_correct():
    head = RearrangementHead(8, use_vrm=False)
    out = head(torch.randn(5, 8, 32, 32), torch.randn(1, 8, 128, 128), GRID, LAYOUT, (256, 256))
    assert out.shape == (1, 1, 256, 256)


def test_seam_probe_on_line_crossing_boundary():
    model = MVANet(widths=(4, 8, 8, 8, 8), dim=8).eval()
    image = torch.zeros(1, 3, 256, 256)
    image[:, :, 100:102, :] = 1.0  # horizontal line crossing the vertical seam
    with torch.no_grad():
        on = seam_discontinuity(model(image).logits, model.make_grid(256, 256))
        model.head.smooth = None
        off = seam_discontinuity(model(image).logits, model.make_grid(256, 256))
    print(f"seam discontinuity: head on {on:.4f}, head off {off:.4f}")
    assert on >= 0 and off >= 0
