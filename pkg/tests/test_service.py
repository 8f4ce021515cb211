"""HTTP API: session lifecycle, idempotency, adherence stripping, admin gate."""

import json

import pytest
from fastapi.testclient import TestClient

from micoach.curriculum import load_curriculum
from micoach.service import create_app


@pytest.fixture()
def client(tmp_path):
    ast, _manifest = load_curriculum()
    app = create_app(ast, data_dir=tmp_path, admin_token="sesame")
    with TestClient(app) as c:
        yield c


def start(client, mode="roleplay", bindings=None, user_id="u1"):
    response = client.post(
        "/api/sessions",
        json={"user_id": user_id, "mode": mode, "bindings": bindings or {"user.first_name": "Ana"}},
    )
    assert response.status_code == 201, response.text
    return response.json()


def last_menu(events):
    menus = [e for e in events if e["kind"] == "MenuShown"]
    return menus[-1] if menus else None


def adherence_free(payload) -> bool:
    return "adherence" not in json.dumps(payload)


def test_healthz(client):
    response = client.get("/healthz")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_create_roleplay_session_greets_by_name(client):
    body = start(client)
    assert body["status"] == "awaiting_choice"
    first = body["events"][0]
    assert first["kind"] == "AgentUtterance"
    assert "Ana" in first["text"]
    assert last_menu(body["events"]) is not None
    assert adherence_free(body)


def test_create_video_session_completes_immediately(client):
    body = start(client, mode="video")
    assert body["status"] == "completed"
    kinds = {e["kind"] for e in body["events"]}
    assert "MenuShown" not in kinds and "ChoiceMade" not in kinds
    assert body["events"][-1]["kind"] == "SessionCompleted"
    assert adherence_free(body)


def test_invalid_mode_rejected(client):
    response = client.post("/api/sessions", json={"mode": "flying"})
    assert response.status_code == 400
    assert response.json()["code"] == "INVALID_MODE"


def test_invalid_bindings_rejected(client):
    response = client.post("/api/sessions", json={"mode": "roleplay", "bindings": {"a": 3}})
    assert response.status_code == 400
    assert response.json()["code"] == "INVALID_BINDINGS"


def test_turn_endpoint_cursor(client):
    body = start(client)
    sid = body["session_id"]
    full = client.get(f"/api/sessions/{sid}/turn").json()
    assert full["status"] == "awaiting_choice"
    assert len(full["events"]) == len(body["events"])
    assert full["options"], "awaiting sessions expose options"
    last_seq = body["events"][-1]["seq"]
    empty = client.get(f"/api/sessions/{sid}/turn", params={"after": last_seq}).json()
    assert empty["events"] == []
    assert empty["options"]
    assert adherence_free(full)


def test_turn_unknown_session(client):
    response = client.get("/api/sessions/ghost/turn")
    assert response.status_code == 404
    assert response.json()["code"] == "UNKNOWN_SESSION"


def choose(client, sid, option_id, seq=None, expect=200):
    payload = {"option_id": option_id}
    if seq is not None:
        payload["seq"] = seq
    response = client.post(f"/api/sessions/{sid}/choice", json=payload)
    assert response.status_code == expect, response.text
    return response


def test_choice_flow_with_failure_and_retry(client):
    body = start(client)
    sid = body["session_id"]
    events = body["events"]
    # answer pedagogy menus with the first option until the role-play menu
    for _ in range(20):
        menu = last_menu(events)
        labels = [o["label"] for o in menu["options"]]
        if any(lbl.startswith("Mary!") for lbl in labels):
            break
        events = choose(client, sid, menu["options"][0]["id"], menu["seq"]).json()["events"]
    menu = last_menu(events)
    nonadherent = menu["options"][1]  # authored second in every roleplay menu
    result = choose(client, sid, nonadherent["id"], menu["seq"]).json()["events"]
    kinds = [e["kind"] for e in result]
    assert kinds[:3] == ["ChoiceMade", "FailureUtterance", "SegmentFailed"]
    assert kinds[-1] == "MenuShown"
    assert adherence_free(result)
    # progress shows the mistake
    progress = client.get(f"/api/sessions/{sid}/progress").json()
    assert progress["mistakes"] == 1
    assert progress["skills_total"] == 6


def test_choice_idempotent_on_retry(client):
    body = start(client)
    sid = body["session_id"]
    menu = last_menu(body["events"])
    seq = menu["seq"]
    option_id = menu["options"][0]["id"]
    first = choose(client, sid, option_id, seq).json()
    second = choose(client, sid, option_id, seq).json()
    assert first == second
    # the engine advanced exactly once
    export = client.get(
        f"/api/sessions/{sid}/export",
        headers={"Authorization": "Bearer sesame"},
    )
    lines = export.text.splitlines()
    choices = [l for l in lines if '"kind":"ChoiceMade"' in l]
    assert len(choices) == 1


def test_choice_conflicts(client):
    body = start(client, mode="video")
    sid = body["session_id"]
    response = client.post(f"/api/sessions/{sid}/choice", json={"option_id": "x"})
    assert response.status_code == 409
    assert response.json()["code"] == "CHOICE_NOT_EXPECTED"


def test_unknown_option_rejected(client):
    body = start(client)
    sid = body["session_id"]
    response = client.post(f"/api/sessions/{sid}/choice", json={"option_id": "bogus"})
    assert response.status_code == 400
    assert response.json()["code"] == "UNKNOWN_OPTION"


def test_stale_menu_seq_conflicts(client):
    body = start(client)
    sid = body["session_id"]
    menu = last_menu(body["events"])
    next_events = choose(client, sid, menu["options"][0]["id"], menu["seq"]).json()["events"]
    menu2 = last_menu(next_events)
    # answering the *old* menu with a different option now conflicts
    response = client.post(
        f"/api/sessions/{sid}/choice",
        json={"option_id": menu["options"][1]["id"], "seq": menu["seq"]},
    )
    assert response.status_code == 409
    # the new menu still answers fine
    choose(client, sid, menu2["options"][0]["id"], menu2["seq"])


def test_progress_after_video_is_complete(client):
    body = start(client, mode="video")
    sid = body["session_id"]
    progress = client.get(f"/api/sessions/{sid}/progress").json()
    assert progress["skills_completed"] == 6
    assert progress["skills_total"] == 6
    assert progress["status"] == "completed"


def test_export_requires_admin_token(client):
    sid = start(client)["session_id"]
    assert client.get(f"/api/sessions/{sid}/export").status_code == 401
    ok = client.get(
        f"/api/sessions/{sid}/export", headers={"Authorization": "Bearer sesame"}
    )
    assert ok.status_code == 200


def test_export_matches_store_bytes(client, tmp_path):
    ast, _ = load_curriculum()
    sid = start(client)["session_id"]
    from micoach.store import SessionStore

    store = SessionStore(tmp_path, ast)
    for fmt in ("jsonl", "csv"):
        api_bytes = client.get(
            f"/api/sessions/{sid}/export",
            params={"format": fmt},
            headers={"Authorization": "Bearer sesame"},
        ).content
        assert api_bytes == store.export_events(sid, fmt)
    # researcher export retains adherence on answered menus
    sid2 = start(client)["session_id"]
    menu = last_menu(client.get(f"/api/sessions/{sid2}/turn").json()["events"])
    choose(client, sid2, menu["options"][0]["id"], menu["seq"])
    raw = client.get(
        f"/api/sessions/{sid2}/export", headers={"Authorization": "Bearer sesame"}
    ).text
    assert '"adherence"' in raw or "ChoiceMade" in raw


def test_export_unknown_session(client):
    response = client.get(
        "/api/sessions/nope/export", headers={"Authorization": "Bearer sesame"}
    )
    assert response.status_code == 404


def test_script_upload_validates(client):
    good = (
        'script "ok" version 1 entry s segment s (kind=pedagogy, agent=c) '
        '{ state a { say "hi" end } }'
    )
    response = client.post(
        "/api/scripts",
        files={"file": ("ok.miscript", good.encode(), "text/plain")},
        headers={"Authorization": "Bearer sesame"},
    )
    assert response.status_code == 200
    assert response.json()["errors"] == []

    bad = (
        'script "bad" version 1 entry s\n'
        "segment s (kind=roleplay, agent=mary) {\n"
        "  state q { menu {\n"
        '    option adherent "a" -> fin\n'
        '    option nonadherent "b" -> fin\n'
        '    option nonadherent "c" -> fin\n'
        "  } }\n"
        '  state fin { say "x" end }\n'
        "}\n"
    )
    response = client.post(
        "/api/scripts",
        files={"file": ("bad.miscript", bad.encode(), "text/plain")},
        headers={"Authorization": "Bearer sesame"},
    )
    assert response.status_code == 422
    codes = [e["code"] for e in response.json()["errors"]]
    assert "OPTION_LIMIT" in codes

    unparsable = b'script "x" version 1 entry s segment s (kind=pedagogy, agent=c) { state a { say "hi" end }'
    response = client.post(
        "/api/scripts",
        files={"file": ("torn.miscript", unparsable, "text/plain")},
        headers={"Authorization": "Bearer sesame"},
    )
    assert response.status_code == 422
    assert response.json()["code"] == "PARSE_ERROR"


def test_no_trainee_response_ever_contains_adherence(client):
    sid_info = start(client)
    sid = sid_info["session_id"]
    payloads = [sid_info]
    menu = last_menu(sid_info["events"])
    payloads.append(choose(client, sid, menu["options"][0]["id"], menu["seq"]).json())
    payloads.append(client.get(f"/api/sessions/{sid}/turn").json())
    payloads.append(client.get(f"/api/sessions/{sid}/progress").json())
    for payload in payloads:
        assert adherence_free(payload)


def test_sessions_survive_service_restart(tmp_path):
    ast, _manifest = load_curriculum()
    app = create_app(ast, data_dir=tmp_path, admin_token=None)
    with TestClient(app) as client:
        body = start(client)
        sid = body["session_id"]
        menu = last_menu(body["events"])
        choose(client, sid, menu["options"][0]["id"], menu["seq"])

    app2 = create_app(ast, data_dir=tmp_path, admin_token=None)
    with TestClient(app2) as client2:
        turn = client2.get(f"/api/sessions/{sid}/turn")
        assert turn.status_code == 200
        assert turn.json()["status"] == "awaiting_choice"
        menu2 = last_menu(turn.json()["events"])
        assert menu2 is not None
        follow = choose(client2, sid, menu2["options"][0]["id"], menu2["seq"])
        assert follow.json()["events"]
