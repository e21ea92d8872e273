import os
import logging

import typer
from dotenv import load_dotenv

from routers import feasibility_routes, simulation_routes

load_dotenv()

logger = logging.getLogger(__name__)

app = typer.Typer(help="Quickest detection of correlation structure in Gaussian Markov networks.", no_args_is_help=True)


@app.callback()
def configure(
    log_level: str = typer.Option(os.getenv("QD_LOG_LEVEL", "INFO"), "--log-level", help="Logging level"),
):
    # logs go to stderr so CSV on stdout stays clean
    logging.basicConfig(level=log_level.upper(), format='%(asctime)s %(levelname)s %(name)s %(message)s')
    logger.debug(f"Logging configured at {log_level.upper()}")


# Include the command groups
app.registered_commands += simulation_routes.router.registered_commands
app.registered_commands += feasibility_routes.router.registered_commands


if __name__ == "__main__":
    app()
