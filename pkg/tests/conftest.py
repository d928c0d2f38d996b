import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from ehrqa import data_path
from ehrqa.corpus import load_dataset

sys.path.insert(0, str(Path(__file__).parent))

GOLDEN = Path(__file__).parent / "golden"
ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def mini():
    return load_dataset(data_path("mini.xml"), data_path("mini.key.json"))


@pytest.fixture
def json_server():
    """Local HTTP server; ``handler(path, body) -> (status, payload)`` decides each reply."""
    servers = []

    def start(handler):
        calls = []

        class H(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                calls.append({"path": self.path, "body": body, "headers": dict(self.headers)})
                status, payload = handler(self.path, body)
                data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *a):
                pass

        srv = ThreadingHTTPServer(("127.0.0.1", 0), H)
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        servers.append(srv)
        return f"http://127.0.0.1:{srv.server_address[1]}", calls

    yield start
    for s in servers:
        s.shutdown()
        s.server_close()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and rep.when == "call":
        ACCEPTANCE[marker.args[0]] = "PASS" if rep.passed else "FAIL"
    elif marker and rep.when == "setup" and rep.failed:
        ACCEPTANCE[marker.args[0]] = "FAIL"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n.split(".")[0])):
        terminalreporter.write_line(f"{ACCEPTANCE[name]}  {name}")
