import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from hodgedirac import __version__
from hodgedirac.core.config import get_settings
from hodgedirac.core.errors import (
    EmptyComplement,
    ExpressionError,
    LinalgError,
    MeshError,
    SolverFailure,
)
from hodgedirac.models.models import BoundaryCondition, Domain
from hodgedirac.cli.commands import RunConfig, Subcommand, run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_MESH = 4
EXIT_SOLVER = 5
EXIT_IO = 6

# Source expressions may start with a minus sign ("--f1x -y"), which argparse
# would read as an option; they are rewritten to the --opt=value form first.
EXPRESSION_OPTIONS = ("--f0", "--f1x", "--f1y", "--f2")

HELP = {
    Subcommand.MESH: "generate a mesh and write it in the mesh2d text format",
    Subcommand.SOLVE_DIRAC: "solve the discrete Hodge-Dirac problem and write VTK fields",
    Subcommand.SOLVE_LAPLACE: "solve the mixed Hodge-Laplace problem and write VTK fields",
    Subcommand.DECOMPOSE: "Hodge-decompose the interpolant of a given form",
    Subcommand.CONSTANTS: "print the discrete Poincare and inf-sup constants",
    Subcommand.CONVERGENCE: "run a convergence study and emit CSV",
    Subcommand.DEMO_DISK: "prescribed divergence and curl on the unit disk, both boundary conditions",
    Subcommand.HISTORY: "list recorded study runs",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--domain", choices=[d.value for d in Domain if d != Domain.EXTERNAL])
    common.add_argument("--resolution", type=int, help="mesh resolution (coarsest level for convergence)")
    common.add_argument("--levels", type=int, help="refinement levels of a convergence study")
    common.add_argument("--bc", choices=[b.value for b in BoundaryCondition])
    common.add_argument("--f0", metavar="EXPR", help="0-form part of the source")
    common.add_argument("--f1x", metavar="EXPR", help="dx1 coefficient of the 1-form part")
    common.add_argument("--f1y", metavar="EXPR", help="dx2 coefficient of the 1-form part")
    common.add_argument("--f2", metavar="EXPR", help="density of the 2-form part")
    common.add_argument("--mesh", metavar="PATH", help="read the mesh instead of generating one")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--tol", type=float, help="target relative residual of linear solves")
    common.add_argument("--via-dirac", action="store_true", default=None, help="solve-laplace by two Dirac solves")
    common.add_argument("--problem", help="manufactured problem: smooth1, swirl, harmonic")
    common.add_argument("--seed", type=int)
    common.add_argument("--db", metavar="URL", help="record runs in this database (e.g. sqlite:///runs.sqlite)")
    common.add_argument("--limit", type=int, help="number of runs listed by history")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="hodgedirac", description="Discrete Hodge-Dirac problems with Whitney forms")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for command in Subcommand:
        sub.add_parser(command.value, parents=[common], help=HELP[command])
    return parser


def join_expression_values(argv: List[str]) -> List[str]:
    joined: List[str] = []
    tokens = iter(argv)
    for token in tokens:
        if token in EXPRESSION_OPTIONS:
            value = next(tokens, None)
            joined.append(token if value is None else f"{token}={value}")
        else:
            joined.append(token)
    return joined


def _fail(code: int, label: str, exc: BaseException) -> int:
    message = " ".join(str(exc).split())
    print(f"error: {label}: {type(exc).__name__}: {message}", file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(join_expression_values(argv))
    settings = get_settings()
    logging.basicConfig(level=logging.DEBUG if args.verbose else settings.log_level)

    try:
        config = RunConfig(**{key: value for key, value in vars(args).items() if value is not None})
    except ValidationError as e:
        return _fail(EXIT_CONFIG, "config", e)

    try:
        return run(config)
    except ExpressionError as e:
        return _fail(EXIT_PARSE, "parse", e)
    except MeshError as e:
        return _fail(EXIT_MESH, "mesh", e)
    except (SolverFailure, LinalgError, EmptyComplement) as e:
        logger.debug("solver failure", exc_info=True)
        return _fail(EXIT_SOLVER, "solver", e)
    except OSError as e:
        return _fail(EXIT_IO, "io", e)
    except ValueError as e:
        return _fail(EXIT_CONFIG, "config", e)


if __name__ == "__main__":
    sys.exit(main())
