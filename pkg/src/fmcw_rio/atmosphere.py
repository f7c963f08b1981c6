"""Standard-atmosphere pressure altitude."""

T0 = 288.15  # K
L0 = 0.0065  # K/m
P0 = 101325.0  # Pa
R_GAS = 8.31446  # J/(mol K)
G0 = 9.80665  # m/s^2
M_AIR = 0.0289652  # kg/mol

_EXP = R_GAS * L0 / (G0 * M_AIR)


def pressure_altitude(pressure):
    """h(P) = T0/L0 * (1 - (P/P0)^(R L0 / (g M)))."""
    return T0 / L0 * (1.0 - (pressure / P0) ** _EXP)


def altitude_pressure(height):
    """Inverse of pressure_altitude."""
    return P0 * (1.0 - L0 * height / T0) ** (1.0 / _EXP)


def pressure_altitude_derivative(pressure):
    return -T0 / L0 * _EXP * (pressure / P0) ** (_EXP - 1.0) / P0
