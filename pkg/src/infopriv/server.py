"""infopriv MCP tools.

Available tools:
- solve-avg: least average leakage release mapping
- solve-minmax: least distortion under a leakage cap, or the least cap for a budget
- audit: DP / information privacy / leakage audit of a mechanism
- dp-leak-bound: leakage lower bound for a DP counting query

Tools take the same JSON documents as the CLI and return the same JSON text.
"""

import contextlib
from dataclasses import dataclass
import json
import logging
from typing import Any

from mcp.server.auth.provider import AccessToken, TokenVerifier
from mcp.server.auth.settings import AuthSettings
from mcp.server.fastmcp import FastMCP
from mcp.server.fastmcp.exceptions import ToolError
from mcp.server.transport_security import TransportSecuritySettings
from pydantic import AnyHttpUrl
from starlette.applications import Starlette
from starlette.middleware.cors import CORSMiddleware
from starlette.routing import Mount
import uvicorn

from infopriv import counting_query
from infopriv import logging as infopriv_logging
from infopriv import privacy_audit
from infopriv import serialization
from infopriv import settings
from infopriv import solver_avg
from infopriv import solver_minmax
from infopriv import utils
from infopriv.exceptions import InfoprivError
from infopriv.logging import tool_logger


logger = logging.getLogger(__name__)


class StaticTokenVerifier(TokenVerifier):
    """Accepts exactly one bearer token."""

    def __init__(self, token: str):
        self.token = token

    async def verify_token(self, token: str) -> AccessToken | None:
        if self.token != token:
            return None
        return AccessToken(token=token, client_id="", scopes=["read"], expires_at=None, resource=None)


@dataclass
class SecurityConfig:
    auth: AuthSettings | None = None
    token_verifier: TokenVerifier | None = None
    transport_security: TransportSecuritySettings | None = None


def get_security_config(config: settings.ServerSettings) -> SecurityConfig:
    transport_security = TransportSecuritySettings(
        enable_dns_rebinding_protection=config.enable_dns_rebinding_protection,
        allowed_hosts=config.allowed_hosts,
        allowed_origins=config.allowed_origins,
    )
    if not config.token:
        return SecurityConfig(transport_security=transport_security)
    url = AnyHttpUrl(f"http://localhost:{config.port}")
    return SecurityConfig(
        auth=AuthSettings(issuer_url=url, resource_server_url=url),
        token_verifier=StaticTokenVerifier(config.token),
        transport_security=transport_security,
    )


##########
# Work done in the process pool. Arguments and results must pickle.

def _solve_avg(instance_doc: dict, solver: settings.SolverSettings) -> str:
    instance = serialization.parse_instance(instance_doc)
    result = solver_avg.solve_min_avg_leakage(instance, solver)
    return serialization.dumps(serialization.avg_result_document(instance, result))


def _solve_minmax(instance_doc: dict, delta: float | None, epsilon: float | None,
                  solver: settings.SolverSettings) -> str:
    instance = serialization.parse_instance(instance_doc)
    if delta is not None:
        result = solver_minmax.solve_minmax_leakage(instance, delta, solver)
    else:
        result = solver_minmax.min_distortion_given_maxleak(instance, epsilon, solver)
    return serialization.dumps(serialization.minmax_result_document(instance, result))


def _audit(instance_doc: dict, mechanism_doc: dict, adjacency: Any) -> str:
    instance = serialization.parse_instance(instance_doc)
    mechanism = serialization.parse_mechanism(mechanism_doc, instance.s_alphabet)
    if isinstance(adjacency, str) and adjacency != "unit-step":
        raise ToolError("adjacency must be 'unit-step' or a list of label pairs")
    report = privacy_audit.audit(instance.prior_s, mechanism, serialization.parse_adjacency(adjacency))
    return serialization.dumps(serialization.audit_document(report))


def _dp_leak_bound(n: int, k: int, epsilon: float, samples: int | None, seed: int) -> str:
    report = counting_query.dp_leak_report(n, k, epsilon, samples, seed,
                                           settings=settings.CONFIG.montecarlo)
    return serialization.dumps(report.as_dict())


def _loads(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ToolError(f"{what} is not valid JSON: {exc}") from exc


async def _run(func, *args: Any) -> str:
    try:
        return await utils.EXECUTOR.run_function(func, *args)
    except InfoprivError as exc:
        raise ToolError(f"{type(exc).__name__}: {exc}") from exc


##########
# MCP TOOLS

@tool_logger
async def solve_avg_tool(instance_json: str) -> str:
    """Find the release mapping with the least average information leakage I(S;U).

    Args:
       instance_json: Problem instance as JSON with keys "S", "Y", "U_size", "p_SY",
                      "distortions" (list of {"matrix", "delta"}) and optional "mode"
                      ("from_y" or "direct").

    Returns the result JSON: "leakage_bits", "converged", "kkt_residual", "channel", ...
    """
    return await _run(_solve_avg, _loads(instance_json, "instance_json"), settings.CONFIG.solver)


@tool_logger
async def solve_minmax_tool(instance_json: str, delta: float | None = None, epsilon: float | None = None) -> str:
    """Design a release mapping under a cap on the maximum information leakage.

    Pass exactly one of:
    - delta: distortion budget, finds the least leakage cap (bits) that fits it
    - epsilon: leakage cap in bits, finds the least distortion under it

    Args:
       instance_json: Problem instance JSON, same format as for solve-avg.
    """
    if (delta is None) == (epsilon is None):
        raise ToolError("Pass exactly one of delta and epsilon")
    return await _run(_solve_minmax, _loads(instance_json, "instance_json"), delta, epsilon,
                      settings.CONFIG.solver)


@tool_logger
async def audit_tool(instance_json: str, mechanism_json: str, adjacency: str = "unit-step") -> str:
    """Audit a mechanism p(U|S): DP epsilon, information privacy epsilon, average and max leakage.

    Args:
       instance_json: Problem instance JSON; its prior over S is used.
       mechanism_json: {"rows": S x U matrix, "outputs": optional labels}.
       adjacency: "unit-step" or a JSON list of adjacent S label pairs.
    """
    pairs = adjacency if adjacency == "unit-step" else _loads(adjacency, "adjacency")
    return await _run(_audit, _loads(instance_json, "instance_json"), _loads(mechanism_json, "mechanism_json"),
                      pairs)


@tool_logger
async def dp_leak_bound_tool(n: int, k: int, epsilon: float, samples: int | None = None, seed: int = 0) -> str:
    """Lower bound (bits) on what an epsilon-DP Laplace count of n records leaks.

    Counts are spread over the multiples of k. With samples the leakage is also
    estimated by Monte-Carlo with the given seed.
    """
    return await _run(_dp_leak_bound, n, k, epsilon, samples, seed)


##########
# SERVER

def initialize(config: settings.Settings) -> FastMCP:
    """Initialize logging, the worker pool and the MCP server with the tools."""
    infopriv_logging.init_logging(config)
    logger.info("Initializing infopriv MCP server")
    utils.init_process_pool(config.processes_pool_size)

    security = get_security_config(config.server)
    # stateless so requests from one session may reach any uvicorn worker
    mcp = FastMCP(
        "infopriv-tools",
        stateless_http=True,
        auth=security.auth,
        token_verifier=security.token_verifier,
        transport_security=security.transport_security,
    )
    mcp.settings.streamable_http_path = "/"
    mcp.add_tool(solve_avg_tool, name="solve-avg", title="Least average leakage release")
    mcp.add_tool(solve_minmax_tool, name="solve-minmax", title="Least distortion under a leakage cap")
    mcp.add_tool(audit_tool, name="audit", title="Privacy audit of a mechanism")
    mcp.add_tool(dp_leak_bound_tool, name="dp-leak-bound", title="Leakage of a DP counting query")
    return mcp


def create_app():
    @contextlib.asynccontextmanager
    async def lifespan(app: Starlette):
        async with mcp.session_manager.run():
            yield

    config = settings.load_config()
    mcp = initialize(config)

    starlette_app = Starlette(routes=[Mount("/infopriv", app=mcp.streamable_http_app())], lifespan=lifespan)

    # browser-based clients need CORS
    return CORSMiddleware(
        starlette_app,
        allow_origins=["*"],
        allow_methods=["GET", "POST", "DELETE"],
        allow_headers=["*"],
        expose_headers=["Mcp-Session-Id"],
    )


def main():
    config = settings.load_config()

    uvicorn_log_level = "debug" if config.debug else "info"
    log_config = uvicorn.config.LOGGING_CONFIG
    log_config["formatters"]["access"]["fmt"] = config.server.uvicorn_log_format
    log_config["formatters"]["default"]["fmt"] = config.server.uvicorn_log_format

    # an import string and factory=True so every worker builds its own app
    uvicorn.run(
        "infopriv.server:create_app",
        host=config.server.ip,
        port=config.server.port,
        log_level=uvicorn_log_level,
        workers=config.server.workers,
        timeout_keep_alive=5,
        access_log=False,
        factory=True,
        log_config=log_config,
    )


if __name__ == "__main__":
    main()
