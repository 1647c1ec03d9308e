"""Active rotating filters and oriented response networks in numpy."""
from .arf import ARF, coordinate_rotate, orientation_spin, rotate_arf_exact, rotate_arf_fast
from .data import LabeledImageSet, build_variant, load_idx, load_mnist, rotate_image
from .encoding import oralign, orpooling
from .network import Network, NetworkSpec, baseline_spec, build_network, gradcheck_network, orn_spec, preset
from .orconv import ARFBank, extend_to_omnidirectional, orconv_backward, orconv_forward
from .training import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
