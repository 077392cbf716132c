"""Figure rendering for detection-sweep CSVs.

Consumes only the public CSV contract of the detection toolkit; the two
packages share no code.
"""

from importlib import resources

from .render import FigureSpec, RenderError, render

__version__ = "0.1.0"


def sample_csv_path() -> str:
    """Path of the committed sample sweep CSV."""
    return str(resources.files("recursic_plots").joinpath("data/sample_sweep.csv"))
