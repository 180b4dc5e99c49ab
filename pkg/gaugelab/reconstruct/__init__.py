"""
.. autoclasstree:: gaugelab.reconstruct

The inversion pipeline. A :class:`~gaugelab.reconstruct.dataset.DNDataset`
of boundary forms feeds the potential recovery, the potential feeds the
recovery of the higher Taylor fields, and the Taylor fields plus a prior
feed the gauge breaking step that returns coefficients, base solution and
source.
"""

from .dataset import DNDataset, DatasetBuilder, DatasetEvent, MissingOrder, generate_dataset
from .gauge_breaking import (
    DegeneratePivot, UnwrapConflict, break_gauge_exp_u, break_gauge_polynomial, recover_sine_gordon,
)
from .potential import (
    Diverged, IllPosed, InversionEvent, PotentialInversion, recover_potential, select_alpha,
)
from .results import ReconstructionResult, relative_l2_error
from .taylor import (
    IdentityCertificate, RankDeficient, TaylorFit, fit_second_field, fit_third_field, integral_identity_certificate,
    recover_second_field, recover_third_field,
)
