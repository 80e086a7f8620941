"""Multiuser mmWave MIMO beamforming: rates, energy efficiency and large-array limits."""

from .beamformers import Architecture, build_beamformers, build_uplink_beamformers
from .channel import ChannelParams, generate_channel
from .metrics import NoiseModel, PowerModel

__all__ = [
    "Architecture",
    "ChannelParams",
    "NoiseModel",
    "PowerModel",
    "build_beamformers",
    "build_uplink_beamformers",
    "generate_channel",
]
