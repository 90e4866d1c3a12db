"""Multi-view aggregation network for high-resolution dichotomous segmentation."""
from .geometry import PatchGrid, ViewBundle, assemble, decompose, split
from .model import MVANet, ModelOutput

__version__ = "0.1.0"

__all__ = ["MVANet", "ModelOutput", "PatchGrid", "ViewBundle", "assemble", "decompose", "split"]
