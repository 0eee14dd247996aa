"""Physical constants in the package's unit system (energy in eV, time in fs)."""

HBAR = 0.6582119569  # eV fs
KB = 8.617333262e-5  # eV / K
HBAR_EVS = HBAR * 1e-15  # eV s
FS = 1e-15  # s
