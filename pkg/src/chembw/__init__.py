"""Chemical Baum-Welch: learning HMM parameters with mass-action reaction networks."""

__version__ = "0.1.0"

from .hmm import Hmm, baum_welch, e_step, forward, backward, log_likelihood, oracle_likelihood  # noqa: E402
from .crn import RateAssignment, ReactionNetwork, mass_action_rhs, conserved_sums, is_positive  # noqa: E402
from .compiler import CompilerConfig, compile_network, compile_for, default_rates, initial_concentrations  # noqa: E402
from .kinetics import SimConfig, Trajectory, simulate, readout, run_chemical_baum_welch  # noqa: E402
from .analysis import (  # noqa: E402
    check_fixed_point,
    extract_monomolecular,
    fit_convergence_rate,
    reduced_spectrum,
)
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "Hmm", "baum_welch", "e_step", "forward", "backward", "log_likelihood", "oracle_likelihood",
    "RateAssignment", "ReactionNetwork", "mass_action_rhs", "conserved_sums", "is_positive",
    "CompilerConfig", "compile_network", "compile_for", "default_rates", "initial_concentrations",
    "SimConfig", "Trajectory", "simulate", "readout", "run_chemical_baum_welch",
    "check_fixed_point", "extract_monomolecular", "fit_convergence_rate", "reduced_spectrum",
    "BACKEND",
]
