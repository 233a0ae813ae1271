#!/usr/bin/env python3
"""
depth2flow MCP Server
Exposes flow inspection, classification, evaluation and the self-test as tools
"""

import asyncio
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from mcp.server import Server
from mcp.types import Tool, TextContent

from .classifier import DEFAULT_LAMBDA_C, classify, extract_features
from .flow_io import read_flow, summarize_flow, visualize_flow, write_image
from .metrics import evaluate_directories
from .selftest import run_selftest


class FlowToolServer:
    """Read-only flow operations; blocking numerics run in worker threads"""

    async def flow_stats(self, path: str) -> Dict[str, Any]:
        """Size, valid fraction and magnitude statistics of a flow file"""

        def _stats():
            return dict(summarize_flow(read_flow(path)), path=path)

        return await asyncio.to_thread(_stats)

    async def classify_flow(self, path: str) -> Dict[str, Any]:
        def _classify():
            flow = read_flow(path)
            result = classify(flow).as_dict()
            result["features"] = extract_features(flow).as_dict()
            return result

        return await asyncio.to_thread(_classify)

    async def evaluate_flows(
        self,
        pred: str,
        gt: str,
        fmt: str = "flo",
        lambda_c: float = DEFAULT_LAMBDA_C,
    ) -> Dict[str, Any]:
        """
        Evaluate a directory of predictions against ground truth

        Args:
            pred: Directory of predicted flows
            gt: Directory of ground-truth flows, matched by relative path
            fmt: "flo" or "kitti"
            lambda_c: Weight of the classification loss in the total loss
        """
        return await asyncio.to_thread(evaluate_directories, pred, gt, fmt, lambda_c)

    async def inspect_flow(self, path: str, out: str) -> Dict[str, Any]:
        def _inspect():
            flow = read_flow(path)
            written = write_image(out, visualize_flow(flow))
            return dict(summarize_flow(flow), out=str(written))

        return await asyncio.to_thread(_inspect)

    async def run_selftest(self) -> List[Dict[str, Any]]:
        results = await asyncio.to_thread(run_selftest)
        return [r.as_dict() for r in results]


# Create the MCP server
app = Server("depth2flow")
flows = FlowToolServer()


@app.list_tools()
async def list_tools() -> list[Tool]:
    """List available flow tools"""
    return [
        Tool(
            name="classify_flow",
            description="""Classify which geometric augmentation a flow field shows:
flip, rotate, shear or none. Returns logits, the posterior, the predicted
class and the Jacobian features it was computed from.""",
            inputSchema={
                "type": "object",
                "properties": {
                    "path": {
                        "type": "string",
                        "description": "Path to a .flo or KITTI 16-bit .png flow file",
                    },
                },
                "required": ["path"],
            },
        ),
        Tool(
            name="evaluate_flows",
            description="""Evaluate predicted flows against ground truth.
Files are matched by relative path. Returns per-file and pixel-weighted
aggregate EPE and F1-all, the L1 loss, and the classification loss when the
ground truth records an augmentation label.""",
            inputSchema={
                "type": "object",
                "properties": {
                    "pred": {"type": "string", "description": "Directory of predicted flows"},
                    "gt": {"type": "string", "description": "Directory of ground-truth flows"},
                    "format": {
                        "type": "string",
                        "enum": ["flo", "kitti"],
                        "description": "Flow file format (default: flo)",
                        "default": "flo",
                    },
                    "lambda_c": {
                        "type": "number",
                        "description": f"Weight of the classification loss (default: {DEFAULT_LAMBDA_C})",
                        "default": DEFAULT_LAMBDA_C,
                    },
                },
                "required": ["pred", "gt"],
            },
        ),
        Tool(
            name="inspect_flow",
            description="Render a flow file as a color-wheel PNG (hue = direction, saturation = magnitude)",
            inputSchema={
                "type": "object",
                "properties": {
                    "path": {"type": "string", "description": "Flow file to render"},
                    "out": {"type": "string", "description": "PNG path to write"},
                },
                "required": ["path", "out"],
            },
        ),
        Tool(
            name="flow_stats",
            description="Width, height, valid fraction and mean/max magnitude of a flow file",
            inputSchema={
                "type": "object",
                "properties": {
                    "path": {"type": "string", "description": "Flow file to summarize"},
                },
                "required": ["path"],
            },
        ),
        Tool(
            name="run_selftest",
            description="Run the analytic invariant suite and return a pass/fail list",
            inputSchema={"type": "object", "properties": {}},
        ),
    ]


def _text(payload: Any) -> list[TextContent]:
    return [
        TextContent(
            type="text",
            text=json.dumps(payload, indent=2, default=str),
        )
    ]


@app.call_tool()
async def call_tool(name: str, arguments: Optional[Dict[str, Any]]) -> list[TextContent]:
    """Handle tool calls"""
    arguments = arguments or {}

    if name == "classify_flow":
        return _text(await flows.classify_flow(arguments.get("path")))

    elif name == "evaluate_flows":
        result = await flows.evaluate_flows(
            pred=arguments.get("pred"),
            gt=arguments.get("gt"),
            fmt=arguments.get("format", "flo"),
            lambda_c=arguments.get("lambda_c", DEFAULT_LAMBDA_C),
        )
        return _text(result)

    elif name == "inspect_flow":
        result = await flows.inspect_flow(
            path=arguments.get("path"),
            out=str(Path(arguments.get("out"))),
        )
        return _text(result)

    elif name == "flow_stats":
        return _text(await flows.flow_stats(arguments.get("path")))

    elif name == "run_selftest":
        return _text(await flows.run_selftest())

    raise ValueError(f"Unknown tool: {name}")


async def main():
    """Run the MCP server"""
    from mcp.server.stdio import stdio_server

    async with stdio_server() as (read_stream, write_stream):
        await app.run(
            read_stream,
            write_stream,
            app.create_initialization_options()
        )


def run():
    asyncio.run(main())


if __name__ == "__main__":
    run()
