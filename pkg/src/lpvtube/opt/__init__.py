from .qp import (INFEASIBLE, MAX_ITER, OPTIMAL, UNBOUNDED, KktResiduals, QpProblem,
                 QpSolution, solve_lp, solve_qp)
from .sdp import FEASIBILITY_MARGIN, LmiProblem, LmiResult, solve_lmi_feasibility
