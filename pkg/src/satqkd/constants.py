"""Physical constants shared across the toolkit (SI unless suffixed)."""

R_EARTH_KM = 6378.137           # Earth's equatorial radius
MU_EARTH_KM3_S2 = 398600.4418   # standard gravitational parameter
H_PLANCK_J_S = 6.62607015e-34
C_LIGHT_M_S = 299792458.0
