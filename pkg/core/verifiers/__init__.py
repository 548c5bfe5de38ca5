from core.verifiers.dsp_oracles import DspVerifier
from core.verifiers.formulas import FormulaVerifier
from core.verifiers.gradients import GradientVerifier

ALL_VERIFIERS = [
    DspVerifier(),
    FormulaVerifier(),
    GradientVerifier(),
]

GROUPS = tuple(v.name for v in ALL_VERIFIERS)
