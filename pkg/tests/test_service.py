import time

import pytest
from fastapi.testclient import TestClient

from splitscope.model import SetLabel, SplitAssignment
from splitscope.service import create_app

from .conftest import make_cholec_like_dataset


@pytest.fixture()
def dataset_and_split():
    dataset = make_cholec_like_dataset()
    ids = dataset.surgery_ids
    half = len(ids) // 2
    assignment = SplitAssignment(
        {i: (SetLabel.TRAIN if n < half else SetLabel.TEST) for n, i in enumerate(ids)},
        has_validation=False,
    )
    return dataset, assignment


@pytest.fixture()
def client(dataset_and_split):
    app = create_app(*dataset_and_split)
    with TestClient(app) as test_client:
        yield test_client


def test_viewmodel_stable_without_mutations(client):
    a = client.get("/api/viewmodel").json()
    b = client.get("/api/viewmodel").json()
    assert a == b
    assert a["schema_version"] == "1"


def test_served_viewmodel_equals_direct_computation(client, dataset_and_split):
    from splitscope.viewmodel import build_view_model

    served = client.get("/api/viewmodel").json()
    assert served == build_view_model(*dataset_and_split)


def test_reassign_updates_coverage(client):
    before = client.get("/api/coverage").json()
    # conftest: video02 carries the backward ending exclusively
    missing_before = before["categories"]["phase_transition"]["per_set"]["test"]["entities"]
    assert ["Gallbladder retraction", "Cleaning coagulation"] in missing_before
    response = client.post(
        "/api/split/reassign", json={"surgery_id": "video02", "set": "test"}
    )
    assert response.status_code == 200
    after = client.get("/api/coverage").json()
    missing_after = after["categories"]["phase_transition"]["per_set"]["test"]["entities"]
    assert ["Gallbladder retraction", "Cleaning coagulation"] not in missing_after


def test_reassign_unknown_surgery_404(client):
    response = client.post(
        "/api/split/reassign", json={"surgery_id": "video99", "set": "test"}
    )
    assert response.status_code == 404


def test_reassign_bad_set_400(client):
    response = client.post(
        "/api/split/reassign", json={"surgery_id": "video01", "set": "holdout"}
    )
    assert response.status_code == 400
    assert response.json()["detail"]["violations"]


def test_reassign_val_without_validation_400(client):
    response = client.post(
        "/api/split/reassign", json={"surgery_id": "video01", "set": "val"}
    )
    assert response.status_code == 400


def test_reassign_then_undo_restores_view_model(client):
    before = client.get("/api/viewmodel").json()
    client.post("/api/split/reassign", json={"surgery_id": "video01", "set": "test"})
    response = client.post("/api/split/undo")
    assert response.status_code == 200
    payload = response.json()
    assert payload.pop("changed") is True
    assert payload == before


def test_put_split_with_assignment_and_violations(client):
    vm = client.get("/api/viewmodel").json()
    ids = [row["id"] for row in vm["supplementary"]["surgeries"]]
    response = client.put(
        "/api/split", json={"has_validation": False, "train": ids[:2], "val": [], "test": ids[2:]}
    )
    assert response.status_code == 200
    assert response.json()["supplementary"]["set_sizes"]["train"]["surgery_count"] == 2
    response = client.put(
        "/api/split", json={"has_validation": False, "train": ids[:1], "val": [], "test": ids[2:]}
    )
    assert response.status_code == 400
    assert any("not assigned" in v for v in response.json()["detail"]["violations"])


def test_put_split_unknown_preset_404(client):
    response = client.put("/api/split", json={"preset": "99/1"})
    assert response.status_code == 404


def test_presets_listing(client):
    payload = client.get("/api/presets").json()
    names = {p["name"] for p in payload["presets"]}
    assert names == {"40/-/40", "32/8/40", "40/8/32", "40/24/16"}
    by_name = {p["name"]: p for p in payload["presets"]}
    assert len(by_name["40/24/16"]["val"]) == 24


def test_filter_round_trip(client):
    response = client.post("/api/filter", json={"transition": ["Gallbladder retraction", "Cleaning coagulation"]})
    assert response.status_code == 200
    vm = response.json()
    assert vm["filter_state"]["transition"] == [
        "Gallbladder retraction",
        "Cleaning coagulation",
    ]
    # only the surgeries containing the selected transition contribute frames
    total = sum(sum(n["frame_counts"].values()) for n in vm["phase_view"]["nodes"])
    rows = {r["id"]: r for r in vm["supplementary"]["surgeries"]}
    assert total == rows["video02"]["frame_count"]
    response = client.delete("/api/filter")
    assert response.json()["filter_state"] is None


def test_filter_invalid_criteria_400(client):
    response = client.post("/api/filter", json={"phases": ["NoSuchPhase"]})
    assert response.status_code == 400
    assert "NoSuchPhase" in str(response.json()["detail"]["violations"])


def test_sessions_are_isolated(client):
    client.post(
        "/api/split/reassign",
        json={"surgery_id": "video01", "set": "test"},
        headers={"X-Session-Token": "alice"},
    )
    alice = client.get("/api/viewmodel", headers={"X-Session-Token": "alice"}).json()
    bob = client.get("/api/viewmodel", headers={"X-Session-Token": "bob"}).json()
    alice_sets = {r["id"]: r["set"] for r in alice["supplementary"]["surgeries"]}
    bob_sets = {r["id"]: r["set"] for r in bob["supplementary"]["surgeries"]}
    assert alice_sets["video01"] == "test"
    assert bob_sets["video01"] == "train"


def test_optimize_job_lifecycle(client):
    response = client.post(
        "/api/optimize",
        json={"sizes": "4/-/4", "seed": 3, "budget": 3000, "restarts": 2},
    )
    assert response.status_code == 200
    job_id = response.json()["job_id"]
    for _ in range(100):
        status = client.get(f"/api/optimize/{job_id}").json()
        if status["status"] != "running":
            break
        time.sleep(0.05)
    assert status["status"] == "done"
    result = status["result"]
    assert len(result["assignment"]["train"]) == 4
    assert len(result["assignment"]["test"]) == 4
    scores = [s for _, s in result["trace"]]
    assert scores == sorted(scores, reverse=True)


def test_optimize_conflict_while_running(client):
    # enough restarts that the job is still running when the second POST lands
    response = client.post(
        "/api/optimize", json={"sizes": "4/-/4", "seed": 1, "budget": 15000, "restarts": 5000}
    )
    assert response.status_code == 200
    job_id = response.json()["job_id"]
    second = client.post("/api/optimize", json={"sizes": "4/-/4", "seed": 2, "budget": 10})
    assert second.status_code == 409
    # other sessions are free to start their own jobs
    other = client.post(
        "/api/optimize",
        json={"sizes": "4/-/4", "seed": 2, "budget": 10},
        headers={"X-Session-Token": "other"},
    )
    assert other.status_code == 200
    for _ in range(600):
        if client.get(f"/api/optimize/{job_id}").json()["status"] != "running":
            break
        time.sleep(0.05)


def test_optimize_unknown_job_404(client):
    assert client.get("/api/optimize/deadbeef").status_code == 404


def test_optimize_bad_config_400(client):
    response = client.post("/api/optimize", json={"sizes": "3/3"})
    assert response.status_code == 400
