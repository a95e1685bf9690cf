"""Control featurization: one command token plus one token per waypoint."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..core.grid import Command, ControlSignal

COMMAND_INDEX = {
    Command.GO_STRAIGHT: 0,
    Command.TURN_LEFT: 1,
    Command.TURN_RIGHT: 2,
    Command.STOP: 3,
}


@dataclass
class ControlTokens:
    tokens: torch.Tensor  # (n_ctrl, C); token 0 is the command
    layer: int = 0

    def __post_init__(self):
        if self.tokens.shape[0] < 2:
            raise ValueError("need a command token plus at least one waypoint token")
        if not torch.isfinite(self.tokens).all():
            raise ValueError("non-finite control tokens")


class ControlEmbedder(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.command_embedding = nn.Embedding(len(COMMAND_INDEX), channels)
        self.waypoint_mlp = nn.Sequential(
            nn.Linear(2, channels), nn.GELU(), nn.Linear(channels, channels)
        )

    def forward(self, commands: torch.Tensor, waypoints: torch.Tensor) -> torch.Tensor:
        """commands (B,) ints, waypoints (B, n_wp, 2) -> (B, n_wp + 1, C)."""
        cmd = self.command_embedding(commands)[:, None, :]
        wps = self.waypoint_mlp(waypoints)
        return torch.cat([cmd, wps], dim=1)

    def embed_control(self, ctrl: ControlSignal) -> ControlTokens:
        cmd = torch.tensor([COMMAND_INDEX[ctrl.command]])
        wps = torch.from_numpy(ctrl.waypoints).to(self.command_embedding.weight.dtype)
        with torch.no_grad():
            tokens = self.forward(cmd, wps[None])[0]
        return ControlTokens(tokens=tokens, layer=0)


def control_batch(
    controls, dtype=torch.float32
) -> tuple[torch.Tensor, torch.Tensor]:
    """List of ControlSignal (equal waypoint counts) -> (commands, waypoints)."""
    commands = torch.tensor([COMMAND_INDEX[c.command] for c in controls])
    n_wp = {len(c.waypoints) for c in controls}
    if len(n_wp) != 1:
        raise ValueError(f"waypoint counts differ across batch: {sorted(n_wp)}")
    wps = torch.stack([torch.from_numpy(c.waypoints).to(dtype) for c in controls])
    return commands, wps
