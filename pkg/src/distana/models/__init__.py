from .base import Network, ParamSpec, StepState, as_tensors
from .convlstm import ConvLSTMConfig, ConvLSTMNetwork, convlstm_param_count
from .distana import (
    DistanaNetwork,
    GridTopology,
    PKConfig,
    PKGridState,
    gather_lateral,
    grid_step,
    param_count,
    pk_step,
)
from .tcn import TCNConfig, TCNNetwork, tcn_forward, tcn_param_count

MODEL_IDS = ("distana4", "distana24", "convlstm2", "convlstm8", "tcn121", "tcn191")


def build_network(model_id: str) -> Network:
    """Construct one of the six benchmark architectures by name."""
    builders = {
        "distana4": lambda: DistanaNetwork(4),
        "distana24": lambda: DistanaNetwork(24),
        "convlstm2": lambda: ConvLSTMNetwork((2, 1)),
        "convlstm8": lambda: ConvLSTMNetwork((8, 1)),
        "tcn121": lambda: TCNNetwork(2),
        "tcn191": lambda: TCNNetwork(9),
    }
    try:
        return builders[model_id]()
    except KeyError:
        raise ValueError(f"unknown model {model_id!r}; choose from {', '.join(MODEL_IDS)}") from None


def network_from_config(model_id: str, ints) -> Network:
    """Rebuild a network from a checkpoint's model id and config integers."""
    ints = list(ints)
    if model_id.startswith("distana"):
        net = DistanaNetwork(lstm_cells=ints[0], pre_units=ints[1])
    elif model_id.startswith("convlstm"):
        net = ConvLSTMNetwork(tuple(ints[2:]))
    elif model_id.startswith("tcn"):
        net = TCNNetwork(hidden=ints[1])
    else:
        raise ValueError(f"unknown model id {model_id!r} in checkpoint")
    if net.config_ints() != ints or net.model_id != model_id:
        raise ValueError(f"checkpoint config {ints} does not match model id {model_id!r}")
    return net
