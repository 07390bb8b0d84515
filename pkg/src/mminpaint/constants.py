"""Sensor constants shared by the codec, geometry and generators."""

import numpy as np

MIN_DEPTH = 1.4
MAX_DEPTH = 54.0

RANGE_H = 32
RANGE_W = 1096

BEAM_STEP = 0.0232
BEAM_INDEX = np.arange(-23, 9)
BEAM_PITCHES = BEAM_STEP * BEAM_INDEX

INTENSITY_MAX = 255.0
