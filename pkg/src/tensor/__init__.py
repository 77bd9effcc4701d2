from .autograd import Tape, Tensor, active_tape
from .gradcheck import grad_check
from .params import ParamStore
from . import ops
