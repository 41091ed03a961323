"""Figure renderer for cooploc CSV artifacts.

Consumes only the documented delimited files (truth, beliefs, errors, sweep
summary) and renders the trajectory overlay, the estimator RMSE comparison,
and the dropout-sweep curve. Deliberately independent of the simulator
package.
"""

__version__ = "0.1.0"

from .figures import plot_dropout, plot_rmse_compare, plot_trajectory, render
from .readers import SchemaError

__all__ = [
    "SchemaError",
    "plot_dropout",
    "plot_rmse_compare",
    "plot_trajectory",
    "render",
]
