import torch

from healthy_translate.utils.config import Config


def resolve_device(name: str | None = None) -> torch.device:
    """Map a device name to a torch device. `auto` picks CUDA when available.

    With no name, the user setting / HEALTHY_TRANSLATE_DEVICE is used.
    """
    if name is None:
        name = Config.shared().device or "auto"
    name = name.strip().lower()
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    try:
        device = torch.device(name)
    except RuntimeError as e:
        raise ValueError(f"Invalid device name: {name}") from e
    if device.type == "cuda" and not torch.cuda.is_available():
        raise ValueError(f"Device {name} requested but CUDA is not available")
    return device
