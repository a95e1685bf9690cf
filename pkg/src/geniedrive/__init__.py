"""Two-stage driving world model, desk scale.

Stage one forecasts 4D semantic occupancy from driving controls with a
tri-plane VAE and a mutual-control-attention predictor; stage two renders
the occupancy into per-camera semantic maps and drives a toy multi-view
flow-matching video generator from them.
"""

__version__ = "0.1.0"
