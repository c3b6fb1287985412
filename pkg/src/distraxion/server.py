"""Environment server: one environment per connection, strict request/response.

Protocol-level failures (bad framing, unparsable headers, version mismatch)
produce an error response followed by connection close; application-level
failures (unknown task, wrong action shape, stepping a finished episode) keep
the connection open so the client can recover.  The TCP server handles many
connections concurrently, each with an independent environment; a stdio mode
serves a single session for subprocess embedding.
"""

from __future__ import annotations

import socket
import socketserver
import sys
import threading

import numpy as np

from . import protocol
from .backgrounds import BackgroundSet
from .env import DistractingEnv, EnvironmentError_, make_env
from .physics import PhysicsError


class Session:
    """Drives the request/response loop for one connection."""

    def __init__(self, env_factory):
        self._env_factory = env_factory
        self._env: DistractingEnv | None = None
        self._greeted = False

    def handle(self, header: dict, payload: bytes) -> tuple[dict, bytes, bool]:
        """Process one request; returns (header, payload, keep_open)."""
        kind = header.get("type")
        if kind == "hello":
            if header.get("version") != protocol.PROTOCOL_VERSION:
                return (protocol.error_response(
                    f"protocol version mismatch: server speaks {protocol.PROTOCOL_VERSION}"),
                    b"", False)
            self._greeted = True
            return {"type": "hello", "version": protocol.PROTOCOL_VERSION}, b"", True
        if not self._greeted:
            return protocol.error_response("hello required before any other request"), b"", False
        try:
            if kind == "make":
                return self._make(header), b"", True
            if kind == "reset":
                return self._timestep(self._require_env().reset())
            if kind == "step":
                env = self._require_env()
                action = np.asarray(header.get("action", []), dtype=float)
                return self._timestep(env.step(action))
            if kind == "close":
                return {"type": "bye"}, b"", False
        except (EnvironmentError_, PhysicsError, ValueError) as exc:
            return protocol.error_response(str(exc)), b"", True
        return protocol.error_response(f"unknown request type {kind!r}"), b"", False

    def _require_env(self) -> DistractingEnv:
        if self._env is None:
            raise EnvironmentError_("make must precede reset/step")
        return self._env

    def _make(self, header: dict) -> dict:
        preset = header.get("preset")
        config = header.get("config")
        if (preset is None) == (config is None):
            raise EnvironmentError_("make requires exactly one of preset or config")
        if config is not None:
            from .distractions import DifficultyConfig
            preset_or_config = DifficultyConfig(
                beta_cam=config.get("beta_cam", 0.0),
                beta_rgb=config.get("beta_rgb", 0.0),
                beta_bg=config.get("beta_bg", 0.0),
                num_videos=config.get("num_videos", 0),
                dynamic=bool(header.get("dynamic", False)),
                seed=int(header.get("seed", 0)),
            )
        else:
            preset_or_config = preset
        self._env = self._env_factory(
            task=header.get("task"),
            preset=preset_or_config,
            dynamic=bool(header.get("dynamic", False)),
            seed=int(header.get("seed", 0)),
        )
        env = self._env
        return {
            "type": "spec",
            "task": env.task.spec.name,
            "action_dim": env.action_dim,
            "action_repeat": env.action_repeat,
            "episode_steps": env.episode_steps,
            "width": env.image_size,
            "height": env.image_size,
            "channels": 3,
        }

    def _timestep(self, ts) -> tuple[dict, bytes, bool]:
        frame = ts.observation
        if frame.ndim != 3:
            raise EnvironmentError_("the wire protocol serves pixel observations only")
        header, payload = protocol.timestep_response(ts.reward, ts.discount, ts.last, frame)
        return header, payload, True


def run_session(instream, outstream, env_factory) -> None:
    """Blocking request/response loop over a byte-stream pair."""
    session = Session(env_factory)
    while True:
        try:
            header, payload = protocol.read_message(instream)
        except EOFError:
            return
        except protocol.ProtocolError as exc:
            try:
                protocol.write_message(outstream, protocol.error_response(str(exc)))
            except OSError:
                pass
            return
        response, out_payload, keep_open = session.handle(header, payload)
        try:
            protocol.write_message(outstream, response, out_payload)
        except OSError:
            return
        if not keep_open:
            return


def default_env_factory(background_set: BackgroundSet | None = None, image_size: int = 100):
    def factory(task, preset, dynamic, seed):
        return make_env(task, preset, dynamic=dynamic, seed=seed,
                        background_set=background_set, image_size=image_size)
    return factory


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        stream_in = self.request.makefile("rb")
        stream_out = self.request.makefile("wb")
        try:
            run_session(stream_in, stream_out, self.server.env_factory)
        finally:
            stream_in.close()
            stream_out.close()


class _ThreadingServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class Server:
    """A running TCP environment server; ``address`` is (host, port)."""

    def __init__(self, inner: _ThreadingServer, thread: threading.Thread):
        self._inner = inner
        self._thread = thread

    @property
    def address(self) -> tuple[str, int]:
        return self._inner.server_address

    def close(self) -> None:
        self._inner.shutdown()
        self._inner.server_close()
        self._thread.join(timeout=5)


def serve(bind_address=("127.0.0.1", 0), env_factory=None, background_set=None,
          image_size: int = 100) -> Server:
    """Start a TCP server in a background thread and return its handle.

    Port 0 binds an ephemeral port; read the actual one from ``.address``.
    """
    if env_factory is None:
        env_factory = default_env_factory(background_set, image_size)
    inner = _ThreadingServer(tuple(bind_address), _Handler)
    inner.env_factory = env_factory
    thread = threading.Thread(target=inner.serve_forever, daemon=True)
    thread.start()
    return Server(inner, thread)


def serve_stdio(env_factory=None, background_set=None, image_size: int = 100) -> None:
    """Serve a single session over stdin/stdout (subprocess embedding)."""
    if env_factory is None:
        env_factory = default_env_factory(background_set, image_size)
    run_session(sys.stdin.buffer, sys.stdout.buffer, env_factory)


def connect(address) -> socket.socket:
    """Convenience TCP connect used by in-repo tests and demos."""
    sock = socket.create_connection(tuple(address))
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock
