"""Command line front end.

Four subcommands cover the whole workflow: ``validate`` checks a scene
without running it, ``replay`` drives a scripted session headless and
writes its logs, ``serve`` exposes a live session over a websocket, and
``demo`` materializes a ready-to-run example scene. Exit status is 0 on
success, 2 when inputs fail validation, and 3 when the solver gives up
mid-run.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import PorosimError, SolverError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="porosim",
        description="Interactive simulation of wettable porous solids")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser(
        "replay", help="run a scripted session headless and write logs")
    replay.add_argument("--scene", required=True, help="scene JSON file")
    replay.add_argument("--script", required=True, help="tool path JSON file")
    replay.add_argument("--out", required=True, help="output directory")
    replay.add_argument("--duration", type=float, default=None,
                        help="seconds to simulate (default: script length)")
    replay.add_argument("--debug-contacts", action="store_true",
                        help="also write per-step contact events as JSON lines")

    serve = sub.add_parser(
        "serve", help="run live and stream state over a websocket")
    serve.add_argument("--scene", required=True, help="scene JSON file")
    serve.add_argument("--port", type=int, required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--static", default=None, metavar="DIR",
                       help="directory of viewer files to serve at /")

    validate = sub.add_parser(
        "validate", help="load a scene and report the first problem found")
    validate.add_argument("--scene", required=True, help="scene JSON file")

    demo = sub.add_parser(
        "demo", help="write a runnable demo scene with meshes and a script")
    demo.add_argument("--out", required=True, help="output directory")
    demo.add_argument("--kind", choices=("bar", "creature"), default="bar")
    return parser


def _cmd_replay(args) -> int:
    from .session import load_scene, load_script, run_replay

    session = load_scene(args.scene)
    script = load_script(args.script)
    summary = run_replay(session, script, args.out, duration=args.duration,
                         debug_contacts=args.debug_contacts)
    log.info("replayed %d steps (%.2f s simulated), peak force %.3f N",
             summary["steps"], summary["sim_time_s"], summary["peak_force_n"])
    log.info("logs written to %s", args.out)
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import serve
    from .session import load_scene

    session = load_scene(args.scene)
    log.info("serving on ws://%s:%d/ws", args.host, args.port)
    serve(session, args.port, host=args.host, static_dir=args.static)
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .session import load_scene

    session = load_scene(args.scene)
    log.info("scene OK: %d tets, %d surface vertices, %d fixed vertices",
             session.mesh.n_tets, len(session.surface.vertices),
             len(session.sim_params.fixed_vertices))
    return EXIT_OK


def _cmd_demo(args) -> int:
    from .assets import make_demo_scene

    scene = make_demo_scene(args.out, kind=args.kind)
    log.info("demo scene written: %s", scene)
    log.info("try: porosim replay --scene %s --script %s --out %s",
             scene, scene.parent / "script.json", scene.parent / "replay")
    return EXIT_OK


_COMMANDS = {
    "replay": _cmd_replay,
    "serve": _cmd_serve,
    "validate": _cmd_validate,
    "demo": _cmd_demo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except SolverError as exc:
        log.error("solver failed: %s", exc)
        return EXIT_SOLVER
    except PorosimError as exc:
        field = getattr(exc, "field", None)
        if field:
            log.error("invalid input at %s: %s", field, exc)
        else:
            log.error("invalid input: %s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
