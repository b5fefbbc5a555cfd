import asyncio
import json
import math

from mcp.server.fastmcp.exceptions import ToolError
import pytest

from infopriv import server
from infopriv import settings
from infopriv import utils


RR_MECHANISM = {"rows": [[0.75, 0.25], [0.25, 0.75]]}


@pytest.fixture
def config(config_file):
    return settings.load_config()


def test_security_without_token():
    security = server.get_security_config(settings.ServerSettings(token=None))
    assert security.auth is None
    assert security.token_verifier is None
    assert security.transport_security.allowed_hosts == ["*:*"]


def test_security_with_token():
    security = server.get_security_config(settings.ServerSettings(token="secret", port=9000))
    assert str(security.auth.issuer_url).startswith("http://localhost:9000")
    assert asyncio.run(security.token_verifier.verify_token("secret")).token == "secret"
    assert asyncio.run(security.token_verifier.verify_token("guess")) is None


def test_initialize_registers_tools(config):
    mcp = server.initialize(config)
    names = {tool.name for tool in asyncio.run(mcp.list_tools())}
    assert names == {"solve-avg", "solve-minmax", "audit", "dp-leak-bound"}


def test_audit_worker(symmetric_document):
    report = json.loads(server._audit(symmetric_document, RR_MECHANISM, "unit-step"))
    assert report["dp_epsilon"] == pytest.approx(math.log(3), abs=1e-11)
    pairs = json.loads(server._audit(symmetric_document, RR_MECHANISM, [["1", "0"]]))
    assert pairs == report
    with pytest.raises(ToolError):
        server._audit(symmetric_document, RR_MECHANISM, "adjacency.json")


def test_solve_workers(symmetric_document):
    solver = settings.SolverSettings()
    avg = json.loads(server._solve_avg(symmetric_document, solver))
    assert avg["converged"] is True
    minmax = json.loads(server._solve_minmax(symmetric_document, None, 0.0, solver))
    assert minmax["distortion"] == pytest.approx(0.5, abs=1e-9)


def test_dp_leak_bound_worker(config):
    report = json.loads(server._dp_leak_bound(10240, 10, 1.0, None, 0))
    assert report["bound_bits"] == pytest.approx(8.934, abs=1e-3)
    assert report["estimate_bits"] is None
    assert report["vacuous"] is False


def test_tools_reject_bad_arguments(config, symmetric_document):
    with pytest.raises(ToolError):
        asyncio.run(server.solve_avg_tool("{not json"))
    with pytest.raises(ToolError):
        asyncio.run(server.solve_minmax_tool(json.dumps(symmetric_document)))


def test_tool_errors_are_reported(config, symmetric_document):
    utils.init_process_pool(config.processes_pool_size)
    mechanism = json.dumps({"rows": [[1.0, 0.0]]})
    with pytest.raises(ToolError, match="InvalidDistributionError"):
        asyncio.run(server.audit_tool(json.dumps(symmetric_document), mechanism))
    ragged = json.dumps({"rows": [[0.75, 0.25], [1.0]]})
    with pytest.raises(ToolError, match="not a numeric array"):
        asyncio.run(server.audit_tool(json.dumps(symmetric_document), ragged))
    ragged_joint = json.dumps({**symmetric_document, "p_SY": [[0.4, 0.1], [0.5]]})
    with pytest.raises(ToolError, match="InvalidDistributionError"):
        asyncio.run(server.solve_avg_tool(ragged_joint))
    result = asyncio.run(server.audit_tool(json.dumps(symmetric_document), json.dumps(RR_MECHANISM)))
    assert json.loads(result)["dp_epsilon"] == pytest.approx(math.log(3), abs=1e-11)
