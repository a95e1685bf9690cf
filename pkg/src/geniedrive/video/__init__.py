from .layout import rearrange_views, inverse_rearrange_views
from .mva import MvaBlockParams, NormalizedMva
from .flow import FlowSample, flow_interpolate, sample_video, video_loss
from .model import ToyVideoModel, VideoModelConfig
from .train import VideoTrainConfig, make_toy_video_dataset, train_toy_video
from .io import load_video_tensor, save_video_frames_png, save_video_tensor

__all__ = [
    "rearrange_views",
    "inverse_rearrange_views",
    "NormalizedMva",
    "MvaBlockParams",
    "FlowSample",
    "flow_interpolate",
    "video_loss",
    "sample_video",
    "ToyVideoModel",
    "VideoModelConfig",
    "train_toy_video",
    "VideoTrainConfig",
    "make_toy_video_dataset",
    "save_video_tensor",
    "load_video_tensor",
    "save_video_frames_png",
]
