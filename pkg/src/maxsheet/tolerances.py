"""Default numerical tolerances."""

GAUGE_ANALYTIC = 1e-9
GAUGE_SAMPLED = 1e-6
TIMELIKE = 1e-12
IMMERSION = 1e-10
UNWRAP = 1e-3
SING_ANALYTIC = 1e-10
SING_SAMPLED = 1e-6
ANGLE = 1e-8
ODE = 1e-9
TRANSFORM = 1e-6
INTERSECT = 1e-9
CURV = 1e-6
QUAD = 1e-11
FD_STEP = 1e-4
SUP_MARGIN = 1e-9
