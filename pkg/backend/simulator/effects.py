"""
Fault effect archetypes.

Each effect rewrites ``values[onset:stop]`` in place.  ``scale`` is the
affected series' baseline standard deviation, so magnitudes mean the same
thing on every series.  ``inject`` skips magnitude-0 effects, so they leave
the series untouched.

    drop_to_floor   values pulled toward ``floor`` (1.0 = pinned at the floor)
    oscillate       square wave of ±4·scale·magnitude, ``half_period`` samples per half
    ramp_drift      grows by magnitude·scale per sample, released at ``stop``
    level_shift     operating point moved by 3·scale·magnitude, swing clamped to
                    ±scale/4 around it (a rate-limited link)
    variance_burst  spikes of 6·scale·magnitude every ``cadence`` samples

Offsets and rescalings alone are invisible to z-normalized distances, which
is why level_shift also clamps the swing and drop_to_floor is catalogued at
full magnitude.
"""
import numpy as np

FLOOR = 0.0
OSCILLATION_GAIN = 4.0
LEVEL_SHIFT_GAIN = 3.0
LEVEL_SWING = 0.25
BURST_GAIN = 6.0


def drop_to_floor(values, onset, stop, magnitude, scale, rng, floor=FLOOR):
    seg = values[onset:stop]
    values[onset:stop] = seg - magnitude * (seg - floor)


def oscillate(values, onset, stop, magnitude, scale, rng, half_period=3):
    half_period = max(1, int(half_period))
    k = np.arange(stop - onset)
    square = np.where((k // half_period) % 2 == 0, 1.0, -1.0)
    values[onset:stop] += OSCILLATION_GAIN * scale * magnitude * square


def ramp_drift(values, onset, stop, magnitude, scale, rng):
    values[onset:stop] += magnitude * scale * np.arange(1, stop - onset + 1)


def level_shift(values, onset, stop, magnitude, scale, rng, center=None):
    center = float(np.mean(values)) if center is None else float(center)
    swing = LEVEL_SWING * scale
    deviation = np.clip(values[onset:stop] - center, -swing, swing)
    values[onset:stop] = center + LEVEL_SHIFT_GAIN * scale * magnitude + deviation


def variance_burst(values, onset, stop, magnitude, scale, rng, cadence=6):
    cadence = max(2, int(cadence))
    k = np.arange(stop - onset)
    spikes = (k % cadence == 0) * (1.0 + np.abs(rng.normal(0.0, 0.25, k.size)))
    values[onset:stop] += BURST_GAIN * scale * magnitude * spikes


EFFECTS = {
    'drop_to_floor': drop_to_floor,
    'oscillate': oscillate,
    'ramp_drift': ramp_drift,
    'level_shift': level_shift,
    'variance_burst': variance_burst,
}

PARAMETERS = {
    'drop_to_floor': ('floor',),
    'oscillate': ('half_period',),
    'ramp_drift': (),
    'level_shift': ('center',),
    'variance_burst': ('cadence',),
}

# Smallest magnitude at which a lone periodic-baseline series still shows a
# regime change within 10 samples of the onset (see simulator.tests).
MIN_DETECTABLE_MAGNITUDE = {
    'drop_to_floor': 1.0,
    'oscillate': 0.5,
    'ramp_drift': 0.06,
    'level_shift': 0.8,
    'variance_burst': 0.6,
}
