import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from sqlclarify import sql_ir
from sqlclarify.cli import main
from sqlclarify.config import AppConfig, parse_embedding_spec, parse_endpoint
from sqlclarify.errors import ConfigError
from sqlclarify.parser_gateway import KIND_HTTP, KIND_SUBPROCESS, KIND_TOY, Gateway, ParserEndpoint


class TestConfig:
    def test_file_env_flag_precedence(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"cap": 50, "endpoint": "oracle"}', encoding="utf-8")
        cfg = AppConfig.load(
            path=str(path),
            env={"SQLCLARIFY_CAP": "60"},
            endpoint="toy:0.5",
        )
        assert cfg.cap == 60  # env beats file
        assert cfg.endpoint == "toy:0.5"  # explicit flag beats both

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"nope": 1}', encoding="utf-8")
        with pytest.raises(ConfigError, match="nope"):
            AppConfig.load(path=str(path), env={})

    def test_endpoint_specs(self):
        assert parse_endpoint("toy").kind == KIND_TOY
        toy = parse_endpoint("toy:0.25:9")
        assert toy.strictness == 0.25 and toy.seed == 9
        assert parse_endpoint("oracle").kind == "builtin_oracle"
        sub = parse_endpoint("subprocess:python3 adapter.py")
        assert sub.kind == KIND_SUBPROCESS and sub.location == "python3 adapter.py"
        http = parse_endpoint("http://localhost:9/parse")
        assert http.kind == KIND_HTTP
        with pytest.raises(ConfigError):
            parse_endpoint("carrier-pigeon")

    def test_embedding_specs(self):
        assert parse_embedding_spec("synthetic") == ("synthetic", 50, 7)
        assert parse_embedding_spec("synthetic:32:1") == ("synthetic", 32, 1)
        assert parse_embedding_spec("/tmp/glove.txt") == ("file", "/tmp/glove.txt")


class TestCommands:
    def test_restate(self, capsys):
        assert main(["restate", "--db", "pets", "--sql", "SELECT count(*) FROM student"]) == 0
        out = capsys.readouterr().out
        assert "find the number of rows of student" in out

    def test_align_with_given_sql(self, capsys):
        code = main(
            [
                "align",
                "--db", "pets",
                "--question", "find the lname of the students aged 21",
                "--sql", "SELECT lname FROM student",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "uncertain tokens:" in out
        assert "aged" in out

    def test_train_and_simulate(self, tmp_path, capsys):
        model = tmp_path / "model.json"
        code = main(
            [
                "train",
                "--out", str(model),
                "--epochs", "1",
                "--negatives-random", "3",
                "--negatives-perturbed", "3",
            ]
        )
        assert code == 0
        assert model.exists()
        report = tmp_path / "report.json"
        code = main(["simulate", "--model", str(model), "--out", str(report)])
        assert code == 0
        out = capsys.readouterr().out
        assert "SQLAcc before:" in out and "SQLAcc after:" in out
        payload = json.loads(report.read_text())
        assert payload["metrics"]["sql_acc_after"] >= payload["metrics"]["sql_acc_before"]

    def test_error_exit_code(self, capsys):
        assert main(["restate", "--db", "nope", "--sql", "SELECT 1"]) == 1
        assert "error:" in capsys.readouterr().err


class _FixedSqlHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("content-length", 0))
        request = json.loads(self.rfile.read(length))
        assert "question" in request and "db_id" in request
        body = json.dumps({"sql": "SELECT lname FROM student"}).encode()
        self.send_response(200)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class TestHttpAdapter:
    def test_round_trip(self, pets_schema):
        server = HTTPServer(("127.0.0.1", 0), _FixedSqlHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}/parse"
            gateway = Gateway.from_list([pets_schema])
            endpoint = ParserEndpoint(kind=KIND_HTTP, location=url, timeout=5.0)
            q = gateway.parse("whatever", "pets", endpoint)
            expected = sql_ir.parse_sql("SELECT lname FROM student", pets_schema)
            assert sql_ir.canonical_equal(q, expected)
        finally:
            server.shutdown()
