"""因果自回归流学生 π_θ。"""

from .field import FieldGeometry, VelocityField, sinusoidal_embedding
from .rollout import noised_rollout_states, rollout, rollout_graph, videos_from_graph
from .video import Prompt, Source, Video, VideoBatch, check_prompts

__all__ = [
    "FieldGeometry",
    "Prompt",
    "Source",
    "VelocityField",
    "Video",
    "VideoBatch",
    "check_prompts",
    "noised_rollout_states",
    "rollout",
    "rollout_graph",
    "sinusoidal_embedding",
    "videos_from_graph",
]
