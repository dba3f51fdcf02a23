"""
Two-stage heterogeneous GNN for secrecy energy efficiency in RIS-aided
MISO downlinks.
"""

from .channel import ChannelBatch, ScenarioConfig, generate
from .metrics import TransmitDesign, see
from .model import ModelConfig, TwoStageHGNN
