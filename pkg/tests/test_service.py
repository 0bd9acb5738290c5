import time

import pytest
from fastapi.testclient import TestClient

from harvestopt.service.app import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def wait_job(client, job_id, timeout=120.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        st = client.get(f"/jobs/{job_id}").json()
        if st["status"] in ("done", "error"):
            return st
        time.sleep(0.2)
    raise TimeoutError(f"job {job_id} did not finish")


class TestMeta:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"

    def test_scenario_listing(self, client):
        names = client.get("/scenarios").json()["names"]
        for required in ("fig3", "fig4", "two-target", "fig3-offset-start"):
            assert required in names

    def test_scenario_text_round_trips(self, client):
        resp = client.get("/scenarios/two-target")
        assert resp.status_code == 200
        from harvestopt.scenario import loads_scenario
        sc, opts = loads_scenario(resp.json()["text"])
        assert sc.n_targets == 2

    def test_unknown_scenario_404(self, client):
        assert client.get("/scenarios/nope").status_code == 404


class TestSimulate:
    def test_bundled(self, client):
        resp = client.post("/simulate", json={"bundled": "two-target"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["n_targets"] == 2
        assert body["event_count"] > 0
        assert body["trace_csv"].startswith("t,agent_id,s_x,s_y,")
        assert body["events_csv"].startswith("time,kind,target_id,agent_id")

    def test_inline_scenario(self, client):
        req = {"scenario": {
            "horizon": 5.0,
            "targets": [{"x": 5.0, "y": 5.0, "r": 0.2, "sigma": 0.5,
                         "mu": 3.0}],
            "agents": [{"A": 0.0, "B": 0.0, "a": 1.0, "b": 1.0}],
        }}
        resp = client.post("/simulate", json=req)
        assert resp.status_code == 200
        assert resp.json()["event_count"] == 0
        assert resp.json()["x_final"][0] == pytest.approx(2.5)

    def test_text_scenario(self, client):
        text = ("horizon = 5.0\n[[targets]]\nx=5.0\ny=5.0\nr=0.2\n"
                "sigma=0.5\nmu=3.0\n[[agents]]\nA=0.0\nB=0.0\na=1.0\nb=1.0\n")
        resp = client.post("/simulate", json={"text": text})
        assert resp.status_code == 200

    def test_invalid_scenario_422(self, client):
        req = {"scenario": {
            "horizon": 5.0,
            "targets": [
                {"x": 0.0, "y": 0.0, "r": 0.2, "sigma": 0.5, "mu": 1.0},
                {"x": 0.3, "y": 0.0, "r": 0.2, "sigma": 0.5, "mu": 1.0}],
            "agents": [{"A": 0.0, "B": 0.0, "a": 1.0, "b": 1.0}],
        }}
        resp = client.post("/simulate", json=req)
        assert resp.status_code == 422
        assert "overlap" in resp.json()["detail"]

    def test_ref_must_be_unique(self, client):
        resp = client.post("/simulate", json={"bundled": "two-target",
                                              "text": "horizon = 1.0"})
        assert resp.status_code == 422


class TestGradcheck:
    def test_two_target(self, client):
        resp = client.post("/gradcheck",
                           json={"bundled": "two-target",
                                 "options": {"mode": "P1"}})
        assert resp.status_code == 200
        body = resp.json()
        assert body["all_ok"] is True
        assert body["max_rel_err"] < 1e-2
        assert len(body["rows"]) == 5


class TestOptimizeJobs:
    def test_job_lifecycle(self, client):
        resp = client.post("/optimize", json={
            "bundled": "two-target",
            "options": {"mode": "P1", "max_iters": 3}})
        assert resp.status_code == 202
        st = wait_job(client, resp.json()["job_id"])
        assert st["status"] == "done"
        report = st["result"]["report"]
        assert report["mode"] == "P1"
        assert report["iterations"] <= 3
        assert st["result"]["history_csv"].startswith("iter,J,J1,J2,")

    def test_job_error_surfaces(self, client):
        resp = client.post("/optimize", json={"bundled": "missing-name"})
        assert resp.status_code == 202
        st = wait_job(client, resp.json()["job_id"])
        assert st["status"] == "error"
        assert "missing-name" in st["error"]

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/deadbeef").status_code == 404

    def test_jitter_seed_changes_start(self, client):
        resp = client.post("/optimize", json={
            "bundled": "two-target", "seed": 7, "jitter": 0.01,
            "options": {"mode": "P1", "max_iters": 0}})
        st = wait_job(client, resp.json()["job_id"])
        assert st["status"] == "done"
        from harvestopt.scenario import load_bundled
        from harvestopt.optimizer import flatten_params
        sc, _ = load_bundled("two-target")
        theta0 = flatten_params(sc.agents)
        got = st["result"]["final_theta"]
        assert not all(abs(a - b) < 1e-12 for a, b in zip(got, theta0))
