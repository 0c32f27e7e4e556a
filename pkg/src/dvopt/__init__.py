"""Surrogate-assisted multi-objective design optimization for double-V IPM machines.

The toolkit evaluates candidate machine designs along two interchangeable
routes: a closed-form reference model that produces flux-linkage maps and
iron-loss coefficients, and a trained neural meta-model that predicts the
same quantities.  Either set of measures is pushed through identical physics
post-processing to obtain the optimization objectives (maximum shaft power,
material cost) and constraints, which an elitist evolutionary optimizer then
drives to a Pareto front.
"""

__version__ = "0.1.0"
