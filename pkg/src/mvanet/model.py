"""The full network: decompose -> encode -> localize -> decode -> rearrange."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from .attention import DEFAULT_WINDOWS
from .decoder import Decoder, SupervisionSet, ViewLayout
from .encoder import DEFAULT_STRIDES, ConvEncoder, encode_views
from .errors import ConfigError, GeometryError
from .geometry import PatchGrid, decompose, resize
from .head import RearrangementHead, ShallowStem
from .mcrm import open_sigmoid

VIEW_MODES = ("multi", "distant", "closeup", "original")


@dataclass
class ModelOutput:
    logits: torch.Tensor
    prediction: torch.Tensor
    supervision: SupervisionSet
    grid: PatchGrid


class MVANet(nn.Module):
    """Single-stream multi-view segmentation network.

    ``views`` selects the input configuration: ``multi`` (distant + close-up),
    ``distant`` (low-resolution whole image only), ``closeup`` (patches only)
    or ``original`` (full-resolution image as one view).  The localization and
    refinement modules need both kinds of view, so they are inert in the
    single-kind modes.
    """

    def __init__(
        self,
        grid_rows: int = 2,
        grid_cols: int | None = None,
        widths: Sequence[int] = (16, 32, 64, 128, 128),
        strides: Sequence[int] = DEFAULT_STRIDES,
        dim: int = 32,
        heads: int = 4,
        windows: Sequence[int] = DEFAULT_WINDOWS,
        use_mclm: bool = True,
        use_mcrm: bool = True,
        use_vrm: bool = True,
        views: str = "multi",
    ):
        super().__init__()
        if views not in VIEW_MODES:
            raise ConfigError(f"views must be one of {VIEW_MODES}, got {views!r}")
        if dim % 4 != 0:
            raise ConfigError(f"decoder width {dim} must be divisible by 4 for positional encoding")
        self.grid_rows = grid_rows
        self.grid_cols = grid_rows if grid_cols is None else grid_cols
        self.views = views
        self.encoder = ConvEncoder(widths, strides)
        self.decoder = Decoder(self.encoder.channels, strides, dim, heads, windows, use_mclm, use_mcrm)
        self.shallow = ShallowStem(dim)
        self.head = RearrangementHead(dim, use_vrm)

    @property
    def layout(self) -> ViewLayout:
        count = self.grid_rows * self.grid_cols
        return {
            "multi": ViewLayout(count, True),
            "distant": ViewLayout(0, True),
            "closeup": ViewLayout(count, False),
            "original": ViewLayout(0, True),
        }[self.views]

    def required_divisor(self) -> tuple[int, int]:
        top = max(self.encoder.strides)
        if self.views == "original":
            return top, top
        return top * self.grid_rows, top * self.grid_cols

    def make_grid(self, height: int, width: int) -> PatchGrid:
        dh, dw = self.required_divisor()
        if height % dh or width % dw:
            raise GeometryError(f"image {height}x{width} must have height divisible by {dh} and width by {dw}")
        return PatchGrid.for_image(height, width, self.grid_rows, self.grid_cols)

    def views_for(self, image: torch.Tensor, grid: PatchGrid) -> torch.Tensor:
        """Encoder input batch, ordered [global, locals...] when both exist."""
        if self.views == "original":
            return image
        bundle = decompose(image, grid)
        if self.views == "distant":
            return bundle.global_view
        if self.views == "closeup":
            return torch.cat(bundle.local_views, dim=0)
        return bundle.stacked()

    def forward(self, image: torch.Tensor) -> ModelOutput:
        h, w = image.shape[-2:]
        grid = self.make_grid(h, w)
        layout = self.layout
        pyramid = encode_views(self.views_for(image, grid), self.encoder)
        d1, supervision = self.decoder(pyramid, grid, layout)
        logits = self.head(d1, self.shallow(image), grid, layout, (h, w))
        prediction = open_sigmoid(logits)
        supervision.final = prediction
        return ModelOutput(logits, prediction, supervision, grid)

    @torch.no_grad()
    def predict(self, image: torch.Tensor) -> torch.Tensor:
        was_training = self.training
        self.eval()
        try:
            return self(image).prediction
        finally:
            self.train(was_training)

