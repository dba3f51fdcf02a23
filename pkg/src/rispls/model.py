"""
The two-stage HGNN: Stage 1 picks the RIS phases, Stage 2 the beamformers
and artificial noise under those phases.
"""

from dataclasses import asdict, dataclass

import numpy as np

from rispls.channel import as_batch
from rispls.errors import ConfigurationError
from rispls.hetgraph import build_stage1, build_stage2
from rispls.metrics import TransmitDesign, training_loss
from rispls.numerics import DiffTensor, ModelParams, no_grad
from rispls.stage1 import Stage1Params, run_stage1
from rispls.stage2 import HEADS, Stage2Params, run_stage2


def _pairs(layers) -> tuple[tuple[int, int], ...]:
    return tuple((int(out), int(heads)) for out, heads in layers)


@dataclass
class ModelConfig:
    """
    Layer sizes. Attention layers are (features per head, heads) pairs; a
    layer's output width is their product.
    """

    lift_width: int = 32
    fal_heads: int = 5
    fal_width: int = 32
    stage1_layers: tuple[tuple[int, int], ...] = ((64, 10), (64, 10))
    phase_hidden: tuple[int, int] = (320, 128)
    stage2_init_width: int = 640
    stage2_layers: tuple[tuple[int, int], ...] = ((128, 10), (256, 10))
    head_hidden: int = 640
    edge_free_self_term: bool = False

    def __post_init__(self):
        self.stage1_layers = _pairs(self.stage1_layers)
        self.stage2_layers = _pairs(self.stage2_layers)
        self.phase_hidden = tuple(int(v) for v in self.phase_hidden)
        if len(self.phase_hidden) != 2:
            raise ConfigurationError("phase_hidden needs two widths")
        if not self.stage1_layers or not self.stage2_layers:
            raise ConfigurationError("Both stages need at least one layer")
        sizes = [
            self.lift_width,
            self.fal_heads,
            self.fal_width,
            self.stage2_init_width,
            self.head_hidden,
            *self.phase_hidden,
        ]
        for layers in (self.stage1_layers, self.stage2_layers):
            sizes.extend(v for pair in layers for v in pair)
        if min(sizes) < 1:
            raise ConfigurationError("Every layer size must be positive")
        if self.stage1_width != self.stage2_init_width:
            raise ConfigurationError(
                f"Stage 1 ends {self.stage1_width} wide but Stage 2 starts "
                f"at {self.stage2_init_width}"
            )

    @property
    def fal_output(self) -> int:
        return 3 * self.fal_heads * self.fal_width

    @property
    def stage1_width(self) -> int:
        out, heads = self.stage1_layers[-1]
        return out * heads

    @property
    def stage2_width(self) -> int:
        out, heads = self.stage2_layers[-1]
        return out * heads

    def validate(self, n_t: int) -> None:
        """Check that every residual input fits the layer it is padded to."""
        raw = 2 * n_t
        for stage, start, layers in (
            ("Stage 1", self.fal_output, self.stage1_layers),
            ("Stage 2", self.stage2_init_width, self.stage2_layers),
        ):
            width = start
            for tau, (out, heads) in enumerate(layers, start=1):
                if out * heads < max(width, raw):
                    raise ConfigurationError(
                        f"{stage} layer {tau} is {out * heads} wide, "
                        f"narrower than its residual inputs "
                        f"({width} and {raw})"
                    )
                width = out * heads

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage1_layers"] = [list(p) for p in self.stage1_layers]
        d["stage2_layers"] = [list(p) for p in self.stage2_layers]
        d["phase_hidden"] = list(self.phase_hidden)
        return d


class TwoStageHGNN:
    """
    Maps a ChannelBatch to a TransmitDesign. Only the selected output head
    owns parameters; with two_stage_on False the phases are fixed at zero
    and Stage 2 receives zero embeddings.
    """

    def __init__(
        self,
        n_t: int,
        cfg: ModelConfig | None = None,
        head: str = "model_based",
        seed: int = 0,
        residual_on: bool = True,
        two_stage_on: bool = True,
    ):
        if head not in HEADS:
            raise ConfigurationError(
                f"Unknown head {head}, expected one of {', '.join(HEADS)}"
            )
        self.cfg = cfg if cfg is not None else ModelConfig()
        self.cfg.validate(n_t)
        self.n_t = n_t
        self.head = head
        self.seed = seed
        self.residual_on = residual_on
        self.two_stage_on = two_stage_on

        self.params = ModelParams()
        rng = np.random.Generator(np.random.Philox(seed))
        self.stage1 = (
            Stage1Params.create(self.params, n_t, self.cfg, rng)
            if two_stage_on
            else None
        )
        self.stage2 = Stage2Params.create(
            self.params, n_t, self.cfg, head, rng
        )

    def forward(self, ch) -> TransmitDesign:
        ch = as_batch(ch)
        n_t, n_l, k, m = ch.dims
        if n_t != self.n_t:
            raise ConfigurationError(
                f"Model was built for N_T={self.n_t}, channels have {n_t}"
            )
        samples = len(ch)
        self_term = self.cfg.edge_free_self_term

        if self.stage1 is not None:
            out = run_stage1(
                build_stage1(ch), self.stage1, self.residual_on, self_term
            )
            phi, aug_u, aug_e = out.phi, out.lu, out.eve
        else:
            width = self.cfg.stage2_init_width
            phi = DiffTensor(np.zeros((samples, n_l)))
            aug_u = DiffTensor(np.zeros((samples * k, width)))
            aug_e = DiffTensor(np.zeros((samples * m, width)))

        g = build_stage2(ch, phi, aug_u, aug_e)
        w, z = run_stage2(
            g, self.stage2, ch.p_max, self.residual_on, self_term
        )
        return TransmitDesign(phi, w, z)

    def loss(self, ch, gamma: float = 0.1) -> DiffTensor:
        return training_loss(ch, self.forward(ch), gamma)

    def __call__(self, ch) -> TransmitDesign:
        """Evaluation-only forward."""
        with no_grad():
            return self.forward(ch).detach()

    def parameter_count(self) -> int:
        return self.params.count()
