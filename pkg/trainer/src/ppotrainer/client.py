"""Client for the line-oriented environment protocol.

Talks newline-delimited JSON to a server over a subprocess's stdio or a TCP
socket. Protocol errors surface as :class:`ProtocolError` with the offending
request attached — the trainer must never trade through an error silently.
"""

from __future__ import annotations

import json
import socket
import subprocess
import sys


class ProtocolError(RuntimeError):
    def __init__(self, message: str, request: dict | None = None):
        super().__init__(message if request is None else f"{message} (request: {request})")
        self.request = request


class EnvClient:
    """One protocol session. Construct via :meth:`spawn_stdio` or
    :meth:`connect_tcp`."""

    def __init__(self, send_line, recv_line, close_transport):
        self._send_line = send_line
        self._recv_line = recv_line
        self._close_transport = close_transport
        self.error_count = 0

    @classmethod
    def spawn_stdio(cls, server_argv: list[str]) -> "EnvClient":
        proc = subprocess.Popen(
            server_argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )

        def send(line):
            proc.stdin.write(line + "\n")
            proc.stdin.flush()

        def recv():
            line = proc.stdout.readline()
            if not line:
                raise ProtocolError("server closed the stream")
            return line

        def close():
            try:
                proc.stdin.close()
            except OSError:
                pass
            proc.wait(timeout=10)

        client = cls(send, recv, close)
        client._proc = proc
        return client

    @classmethod
    def for_config(cls, config_path: str, python: str = sys.executable) -> "EnvClient":
        return cls.spawn_stdio(
            [python, "-m", "perishsim.cli", "serve-env", "--config", config_path, "--stdio"]
        )

    @classmethod
    def connect_tcp(cls, host: str, port: int) -> "EnvClient":
        sock = socket.create_connection((host, port))
        reader = sock.makefile("r", encoding="utf-8")

        def send(line):
            sock.sendall((line + "\n").encode("utf-8"))

        def recv():
            line = reader.readline()
            if not line:
                raise ProtocolError("server closed the connection")
            return line

        def close():
            reader.close()
            sock.close()

        return cls(send, recv, close)

    def request(self, message: dict) -> dict:
        self._send_line(json.dumps(message))
        response = json.loads(self._recv_line())
        if "error" in response:
            self.error_count += 1
            raise ProtocolError(response["error"], request=message)
        return response

    def spec(self) -> dict:
        return self.request({"cmd": "spec"})

    def reset(self, seed: int) -> dict:
        return self.request({"cmd": "reset", "seed": int(seed)})

    def step(self, action: int) -> dict:
        return self.request({"cmd": "step", "action": int(action)})

    def close(self) -> None:
        try:
            self.request({"cmd": "close"})
        except ProtocolError:
            pass
        finally:
            self._close_transport()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
