import logging
import os
import yaml
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings


logger = logging.getLogger(__name__)


class SolverSettings(BaseSettings):
    objective_tol: float = Field(default=1e-9, description="Relative objective change that counts as stalled")
    feasibility_tol: float = Field(default=1e-8, description="Maximum accepted constraint violation")
    kkt_tol: float = Field(default=1e-6, description="KKT residual required to report convergence")
    max_iters: int = Field(default=100000, description="Total mirror descent iterations across all outer rounds")
    max_outer_iters: int = Field(default=60, description="Augmented Lagrangian multiplier updates")
    initial_penalty: float = Field(default=10.0, description="Initial augmented Lagrangian penalty")
    max_penalty: float = Field(default=1e5, description="Cap on the augmented Lagrangian penalty")
    line_search_tol: float = Field(default=1e-4, description="Bisection tolerance on epsilon (bits) for minmax designs")
    line_search_max_iters: int = Field(default=40, description="Maximum bisection steps for minmax designs")


class OracleSettings(BaseSettings):
    resolution_small: int = Field(default=200, description="Simplex grid steps for 2x2 channels")
    resolution_large: int = Field(default=10, description="Simplex grid steps for larger channels")
    refine: bool = Field(default=True, description="Polish the best grid points with SLSQP")
    refine_starts: int = Field(default=10, description="Number of grid points to polish")


class MonteCarloSettings(BaseSettings):
    block_size: int = Field(default=1 << 17, description="Samples per independently seeded block")


class ServerSettings(BaseSettings):
    ip: str = Field(default="0.0.0.0", description="IP address to bind to")
    port: int = Field(default=8080, description="Port to bind to")
    workers: int = Field(default=1, description="Number of workers to use")
    uvicorn_log_format: str = Field(default="%(asctime)s.%(msecs)03d %(process)d \033[32m%(levelname)s:\033[0m [-|-] %(name)s %(message)s", description="Uvicorn log format")
    token: Optional[str] = Field(default=os.environ.get("INFOPRIV_SECURITY_TOKEN"), description="Token to use for basic authentication (Env: INFOPRIV_SECURITY_TOKEN)")
    enable_dns_rebinding_protection: bool = Field(default=False, description="Enable DNS rebinding protection")
    allowed_hosts: list[str] = Field(default=["*:*"], description="Allowed hosts")
    allowed_origins: list[str] = Field(default=["http://*:*"], description="Allowed origins")


class Settings(BaseSettings):
    debug: bool = Field(default=False, description="Enable debug logging")
    processes_pool_size: int = Field(default=4, description="Worker processes for parallel curves, audits and sampling")
    log_format: str = Field(default="%(asctime)s.%(msecs)03d %(process)d \033[32m%(levelname)s:\033[0m [%(run_id)s|%(command)s] %(name)s %(message)s", description="Log format")
    solver: SolverSettings = Field(default=SolverSettings(), description="Convex solver settings")
    oracle: OracleSettings = Field(default=OracleSettings(), description="Brute force oracle settings")
    montecarlo: MonteCarloSettings = Field(default=MonteCarloSettings(), description="Monte-Carlo settings")
    server: ServerSettings = Field(default=ServerSettings(), description="MCP server settings")


def load_config() -> Settings:
    """Load the configuration from the file."""
    global CONFIG
    config_file = os.environ.get("INFOPRIV_CONFIG") or "config.yaml"
    if not os.path.exists(config_file):
        logger.warning("Config file not found, using default values")
        config = {}
    else:
        try:
            with open(config_file, "r") as f:
                config = yaml.safe_load(f.read()) or {}
        except FileNotFoundError as error:
            message = "Error: yml config file not found."
            logger.exception(message)
            raise FileNotFoundError(error, message) from error

    CONFIG = Settings(**config)
    return CONFIG


# Global variable to store the configuration
CONFIG: Settings | None = None
