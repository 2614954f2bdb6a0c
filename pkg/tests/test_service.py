import numpy as np
import pytest
from fastapi.testclient import TestClient

from sqlclarify.encoder import encode
from sqlclarify.orchestrator import SessionStore
from sqlclarify.service import create_app


@pytest.fixture()
def client(runtime):
    app = create_app(runtime, store=SessionStore())
    return TestClient(app)


class TestSchemas:
    def test_lists_all(self, client):
        payload = client.get("/schemas").json()
        ids = [s["db_id"] for s in payload["schemas"]]
        assert "pets" in ids and len(ids) == 6

    def test_shape(self, client):
        payload = client.get("/schemas").json()
        pets = next(s for s in payload["schemas"] if s["db_id"] == "pets")
        student = next(t for t in pets["tables"] if t["name"] == "student")
        assert {"name": "age", "type": "number"} in student["columns"]


class TestSessionFlow:
    def test_create_returns_first_question(self, client):
        view = client.post(
            "/sessions", json={"question": "find the lname of student whose pettype is cat", "db_id": "pets"}
        ).json()
        assert view["phase"] == "asking"
        assert view["sql_before"].startswith("SELECT")
        assert view["current_question"]["token"] == "pettype"
        assert view["progress"] == {"answered": 0, "total": 2}

    def test_zero_uncertain_finalizes(self, client):
        view = client.post(
            "/sessions", json={"question": "find the fname of student whose major is 'cs'", "db_id": "pets"}
        ).json()
        assert view["phase"] == "finalized"
        assert view["sql_after"] == view["sql_before"]
        assert view["modified_question"] == "find the fname of student whose major is 'cs'"

    def test_full_answer_loop(self, client):
        view = client.post(
            "/sessions", json={"question": "find the lname of student whose pettype is cat", "db_id": "pets"}
        ).json()
        sid = view["id"]
        while view["phase"] == "asking":
            q = view["current_question"]
            # always answer None (the last option)
            view = client.post(
                f"/sessions/{sid}/answers",
                json={"question_ref": q["ref"], "option_index": len(q["options"]) - 1},
            ).json()
        assert view["phase"] == "finalized"
        assert view["modified_question"] == "find the lname of student whose pettype is cat"
        assert view["sql_after"] == view["sql_before"]

    def test_value_answer_quotes_token(self, client):
        view = client.post(
            "/sessions", json={"question": "find the lname of student whose pettype is cat", "db_id": "pets"}
        ).json()
        sid = view["id"]
        while view["phase"] == "asking":
            q = view["current_question"]
            kinds = [o["kind"] for o in q["options"]]
            idx = kinds.index("value") if q["token"] == "cat" else len(q["options"]) - 1
            view = client.post(
                f"/sessions/{sid}/answers", json={"question_ref": q["ref"], "option_index": idx}
            ).json()
        assert "'cat'" in view["modified_question"]

    def test_get_view_roundtrip(self, client):
        created = client.post(
            "/sessions", json={"question": "find the lname of student whose pettype is cat", "db_id": "pets"}
        ).json()
        fetched = client.get(f"/sessions/{created['id']}").json()
        assert fetched == created


class TestErrors:
    def test_unknown_db(self, client):
        response = client.post("/sessions", json={"question": "q", "db_id": "nope"})
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "unknown_db" and "message" in body

    def test_unknown_session_404(self, client):
        response = client.get("/sessions/doesnotexist")
        assert response.status_code == 404
        assert response.json()["code"] == "session_error"

    def test_bad_option_index(self, client):
        view = client.post(
            "/sessions", json={"question": "find the lname of student whose pettype is cat", "db_id": "pets"}
        ).json()
        response = client.post(
            f"/sessions/{view['id']}/answers",
            json={"question_ref": view["current_question"]["ref"], "option_index": 99},
        )
        assert response.status_code == 400
        assert response.json()["code"] == "bad_option"

    def test_answer_on_finalized_409(self, client):
        view = client.post(
            "/sessions", json={"question": "find the fname of student whose major is 'cs'", "db_id": "pets"}
        ).json()
        response = client.post(
            f"/sessions/{view['id']}/answers", json={"question_ref": 0, "option_index": 0}
        )
        assert response.status_code == 409


class TestEncodeRoute:
    def test_matches_builtin_encoder(self, client, runtime):
        body = {"tokens_x": ["find", "age"], "tokens_x_prime": ["age", "of", "pet"]}
        payload = client.post("/encode", json=body).json()
        h = np.array(payload["h"])
        u = np.array(payload["u"])
        assert h.shape == (runtime.table.dim, 2)
        assert u.shape == (runtime.table.dim, 3)
        expected = encode(["find", "age"], runtime.table, runtime.layer)
        assert np.allclose(h, expected)

    def test_empty_tokens_rejected(self, client):
        response = client.post("/encode", json={"tokens_x": [], "tokens_x_prime": ["a"]})
        assert response.status_code == 400

    def test_http_encoder_client_contract(self, runtime):
        # the /encode route serves the same contract HttpEncoder consumes
        from sqlclarify.encoder import HttpEncoder

        app = create_app(runtime, store=SessionStore())
        with TestClient(app) as tc:
            class _PatchedEncoder(HttpEncoder):
                def encode_pair(self, x_tokens, xp_tokens):
                    response = tc.post(
                        self.url, json={"tokens_x": list(x_tokens), "tokens_x_prime": list(xp_tokens)}
                    )
                    payload = response.json()
                    return np.array(payload["h"]), np.array(payload["u"])

            h, u = _PatchedEncoder("/encode").encode_pair(["age"], ["pet_age", "of"])
            assert h.shape[1] == 1 and u.shape[1] == 2
