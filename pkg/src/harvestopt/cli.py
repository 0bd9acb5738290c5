"""Command-line front end.

The CLI is a thin client of the service layer: every subcommand builds the
same request model the HTTP API accepts and either invokes the handler
in-process (default) or sends it to a running server (--server URL),
then materializes the returned CSV payloads under --out.

Subcommands:
    simulate   one trace at the scenario's stored parameters
    optimize   full gradient descent; writes history, trace, events, polyline
    gradcheck  event-driven gradient vs. the central-difference oracle
    reproduce  bundled benchmark cases (fig3 | fig4) end to end
    serve      run the HTTP service
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .errors import HarvestOptError
from .scenario import bundled_scenario_names
from .service import schemas as sm
from .service.handlers import (
    handle_gradcheck,
    handle_optimize,
    handle_reproduce,
    handle_simulate,
)


def _scenario_ref_fields(arg: str) -> dict:
    """A scenario argument is a file path, or a bundled name."""
    path = Path(arg)
    if path.exists():
        return {"text": path.read_text(encoding="utf-8")}
    name = arg[:-len(".scenario")] if arg.endswith(".scenario") else arg
    if name in bundled_scenario_names():
        return {"bundled": name}
    raise FileNotFoundError(
        f"no scenario file {arg!r} and no bundled scenario of that name "
        f"(bundled: {', '.join(bundled_scenario_names())})")


def _options_from_args(args) -> sm.OptionsModel | None:
    fields = {}
    if getattr(args, "mode", None):
        fields["mode"] = args.mode
    if getattr(args, "max_iters", None) is not None:
        fields["max_iters"] = args.max_iters
    if getattr(args, "step", None) is not None:
        fields["eta0"] = args.step
    if getattr(args, "lam", None) is not None:
        fields["lam"] = args.lam
    return sm.OptionsModel(**fields) if fields else None


def _write(out_dir: Path, name: str, content: str, written: list) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(content, encoding="utf-8")
    written.append(str(path))


class _RemoteClient:
    """HTTP transport for --server mode; mirrors the local handlers."""

    def __init__(self, base_url: str, poll_interval: float = 1.0):
        import httpx

        self.client = httpx.Client(base_url=base_url, timeout=60.0)
        self.poll_interval = poll_interval

    def _check(self, resp):
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except Exception:
                detail = resp.text
            raise RuntimeError(f"server error {resp.status_code}: {detail}")
        return resp

    def simulate(self, req: sm.SimulateRequest) -> sm.SimulateResponse:
        resp = self._check(self.client.post(
            "/simulate", json=req.model_dump(exclude_none=True)))
        return sm.SimulateResponse(**resp.json())

    def gradcheck(self, req: sm.GradcheckRequest) -> sm.GradcheckResponse:
        resp = self._check(self.client.post(
            "/gradcheck", json=req.model_dump(exclude_none=True)))
        return sm.GradcheckResponse(**resp.json())

    def _poll(self, job_id: str) -> sm.OptimizeResponse:
        while True:
            resp = self._check(self.client.get(f"/jobs/{job_id}"))
            status = sm.JobStatus(**resp.json())
            if status.status == "done":
                return status.result
            if status.status == "error":
                raise RuntimeError(f"job failed: {status.error}")
            time.sleep(self.poll_interval)

    def optimize(self, req: sm.OptimizeRequest) -> sm.OptimizeResponse:
        resp = self._check(self.client.post(
            "/optimize", json=req.model_dump(exclude_none=True)))
        return self._poll(sm.JobAccepted(**resp.json()).job_id)

    def reproduce(self, req: sm.ReproduceRequest) -> sm.OptimizeResponse:
        resp = self._check(self.client.post(
            "/reproduce", json=req.model_dump(exclude_none=True)))
        return self._poll(sm.JobAccepted(**resp.json()).job_id)


def _cmd_simulate(args) -> int:
    req = sm.SimulateRequest(**_scenario_ref_fields(args.scenario),
                             options=_options_from_args(args))
    if args.server:
        resp = _RemoteClient(args.server).simulate(req)
    else:
        resp = handle_simulate(req)
    written = []
    out = Path(args.out)
    _write(out, "trace.csv", resp.trace_csv, written)
    _write(out, "events.csv", resp.events_csv, written)
    print(f"simulated {resp.horizon:g} s: {resp.event_count} events, "
          f"J1 time average {resp.j1_time_avg:.6g}")
    for w in resp.warnings:
        print(f"warning: {w}")
    for path in written:
        print(f"wrote {path}")
    return 0


def _print_report(report: sm.RunReportModel, initial_j: float) -> None:
    print(f"mode {report.mode}: J {initial_j:.6g} -> {report.J:.6g} "
          f"(J1 {report.J1:.6g}, J2 {report.J2:.6g}) "
          f"after {report.iterations} iterations [{report.stop_reason}]")
    print(f"events at final trajectory: {report.event_counts} "
          f"targets visited: {report.targets_visited}")
    for key, value in report.context.items():
        print(f"context {key} = {value:g}")
    for w in report.warnings:
        print(f"warning: {w}")


def _write_optimize_outputs(resp: sm.OptimizeResponse, out_dir: Path) -> None:
    written = resp.report.files
    _write(out_dir, "history.csv", resp.history_csv, written)
    _write(out_dir, "trace.csv", resp.trace_csv, written)
    _write(out_dir, "events.csv", resp.events_csv, written)
    _write(out_dir, "trajectory.csv", resp.polyline_csv, written)
    report_json = json.dumps(resp.report.model_dump(), indent=2)
    _write(out_dir, "report.json", report_json, written)
    for path in written:
        print(f"wrote {path}")


def _cmd_optimize(args) -> int:
    req = sm.OptimizeRequest(**_scenario_ref_fields(args.scenario),
                             options=_options_from_args(args),
                             seed=args.seed, jitter=args.jitter)
    if args.server:
        resp = _RemoteClient(args.server).optimize(req)
    else:
        resp = handle_optimize(req)
    _print_report(resp.report, resp.initial_J)
    _write_optimize_outputs(resp, Path(args.out))
    return 0


def _cmd_reproduce(args) -> int:
    req = sm.ReproduceRequest(case=args.case, options=_options_from_args(args))
    if args.server:
        resp = _RemoteClient(args.server).reproduce(req)
    else:
        resp = handle_reproduce(req)
    _print_report(resp.report, resp.initial_J)
    _write_optimize_outputs(resp, Path(args.out))
    return 0


def _cmd_gradcheck(args) -> int:
    req = sm.GradcheckRequest(**_scenario_ref_fields(args.scenario),
                              options=_options_from_args(args), h=args.h)
    if args.server:
        resp = _RemoteClient(args.server).gradcheck(req)
    else:
        resp = handle_gradcheck(req)
    print(f"{'param':>8} {'ipa':>14} {'fd':>14} {'rel_err':>10} seq")
    for row in resp.rows:
        rel = f"{row.rel_err:.2e}" if row.rel_err is not None else "skipped"
        print(f"{row.name:>8} {row.ipa:14.6g} {row.fd:14.6g} {rel:>10} "
              f"{'ok' if row.checked else 'mismatch'}")
    print(f"max relative discrepancy: {resp.max_rel_err:.3e} "
          f"({'PASS' if resp.all_ok else 'FAIL'})")
    written = []
    _write(Path(args.out), "gradcheck.csv", resp.gradcheck_csv, written)
    for path in written:
        print(f"wrote {path}")
    return 0 if resp.all_ok else 1


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harvestopt",
        description="Multi-agent data-harvesting trajectory optimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario",
                           help="scenario file path or bundled name")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--server", default=None,
                       help="base URL of a running service; default in-process")
        p.add_argument("--mode", choices=("P1", "P2"), default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--step", type=float, default=None,
                       help="initial descent step size")
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="potential-field mixing weight")

    p_sim = sub.add_parser("simulate", help="one trace at the stored parameters")
    common(p_sim)
    p_sim.set_defaults(fn=_cmd_simulate)

    p_opt = sub.add_parser("optimize", help="run the descent loop")
    common(p_opt)
    p_opt.add_argument("--seed", type=int, default=None,
                       help="seed for the optional initial-parameter jitter")
    p_opt.add_argument("--jitter", type=float, default=0.0,
                       help="std-dev of seeded jitter applied to theta0")
    p_opt.set_defaults(fn=_cmd_optimize)

    p_grad = sub.add_parser("gradcheck",
                            help="event-driven gradient vs central differences")
    common(p_grad)
    p_grad.add_argument("--h", type=float, default=1e-5,
                        help="central-difference step")
    p_grad.set_defaults(fn=_cmd_gradcheck)

    p_rep = sub.add_parser("reproduce", help="bundled benchmark cases")
    p_rep.add_argument("case", choices=("fig3", "fig4"))
    p_rep.add_argument("--out", default="out")
    p_rep.add_argument("--server", default=None)
    p_rep.add_argument("--mode", choices=("P1", "P2"), default=None)
    p_rep.add_argument("--max-iters", type=int, default=None)
    p_rep.add_argument("--step", type=float, default=None)
    p_rep.add_argument("--lambda", dest="lam", type=float, default=None)
    p_rep.set_defaults(fn=_cmd_reproduce)

    p_srv = sub.add_parser("serve", help="run the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (HarvestOptError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
