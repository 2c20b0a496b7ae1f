"""vlmprobe: deterministic visual-perception probes for vision-LM endpoints.

Subpackages/modules:

* ``rastercore`` / ``glyphs`` - glyph rendering and the quality / size
  resampling interventions
* ``patchgeom`` - patch-grid geometry, placement math, boundary cuts
* ``probeforge`` - the five probe suite builders and manifest emission
* ``metrics`` - reply normalization, GPM / exact / inclusion scoring
* ``adapters`` - oracle, template-OCR and HTTP chat backends + runner
* ``analysis`` - aggregation, VQA annotation slicing, CSV/SVG reports
* ``kernels`` - numba kernels with a numpy fallback (VLMPROBE_KERNELS)
"""

__version__ = "0.1.0"
