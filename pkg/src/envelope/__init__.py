"""Control envelope synthesis and checking for hybrid games."""

import sys

# symbolic trees can nest deeply; the default limit is too tight for the
# recursive dataclass hashing and NNF walks
if sys.getrecursionlimit() < 20000:
    sys.setrecursionlimit(20000)

from .syntax import (  # noqa: E402,F401
    END, Formula, Game, Term, label, nodes, parse_formula, parse_game,
    pretty,
)
from .structure import prefix, successor, suffix  # noqa: E402,F401
from .subvalue import (  # noqa: E402,F401
    ObligationReport, SubvalueMap, check_inductive, exist_projection,
    mod_end, monitor_game, mpc_map, policy_actions, univ_projection,
)
from .symexec import SimplResult, simpl, solve_ode  # noqa: E402,F401
from .synth import (  # noqa: E402,F401
    SynthConfig, gen_inv, optimality_crosscheck, synth_box, synth_diamond,
)
