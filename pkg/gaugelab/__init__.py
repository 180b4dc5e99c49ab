"""
A desk-scale laboratory for inverse source problems of
semilinear elliptic equations ``Δu + a(x, u) = F`` on a rectangle.

It simulates Dirichlet-to-Neumann maps, extracts their higher
order linearizations, builds and verifies gauge transformations,
and reconstructs Taylor fields and sources from boundary data.
"""

import logging

from gaugelab.config import lab_mode

logger = logging.getLogger(__name__)
handler = logging.StreamHandler()
formatter = logging.Formatter('%(asctime)s %(name)-12s %(levelname)-8s %(message)s')
handler.setFormatter(formatter)
logger.addHandler(handler)
logger.setLevel(logging.DEBUG if lab_mode == "development" else logging.INFO)
