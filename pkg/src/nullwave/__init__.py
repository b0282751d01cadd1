"""nullwave: characteristic double-null evolution of waves with
scale-critical potentials, plus the weighted-energy diagnostic suite used to
verify their decay rates."""

from .background import (H0Report, MinkowskiBackground,
                         ReissnerNordstromBackground, SampleRegion, minkowski,
                         reissner_nordstrom, verify_h0)
from .diagnostics import (DiagnosticsSpec, EnergyRecord, EnergySeries,
                          IdentityResidual, InequalityReport, SeriesCollector,
                          energy_boundedness_check, energy_series_from_field,
                          evolve_series, foliation_energy, gronwall_integral,
                          hardy_check_ingoing, hardy_check_outgoing,
                          iled_check, multiplier_identity_residual,
                          pointwise_from_energy_check, synthetic_field,
                          t_boundedness_check, weighted_energy)
from .evolve import (ConvergenceReport, InitialData, ModeField,
                     NumericalBlowupError, convergence_order, evolve_mode,
                     march)
from .grid import NullGrid
from .potential import (AssumptionReport, ExpressionError, PotentialExpression,
                        PotentialSet, TildeCoefficients, parse_potential,
                        source_coefficients, tilde_transform, verify_h1,
                        verify_h3)
from .ratefit import (FitResult, compare_to_theorem, fit_exponent,
                      sharp_exponent)

__version__ = "0.1.0"
