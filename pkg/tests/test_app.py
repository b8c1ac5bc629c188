import json

import pytest

from app import create_app


@pytest.fixture
def app(tmp_path):
    app = create_app(runs_dir=str(tmp_path))
    app.config['TESTING'] = True
    yield app
    if app.scenario_thread and app.scenario_thread.is_alive():
        app.scenario_stop.set()
        app.scenario_thread.join(timeout=60)


@pytest.fixture
def client(app):
    return app.test_client()


def wait_for_run(app):
    app.scenario_thread.join(timeout=120)
    assert not app.scenario_thread.is_alive()


# --- Scenario control ---

def test_idle_status(client):
    data = client.get('/api/scenario/status').get_json()
    assert data["active"] is False
    assert data["message"] == "Idle"


def test_phase_check_run(app, client):
    response = client.post('/api/scenario/start', json={"scenario": "phase_check"})
    assert response.status_code == 200
    body = response.get_json()
    assert body["success"] is True
    assert body["run"].endswith("_phase_check")
    wait_for_run(app)
    status = client.get('/api/scenario/status').get_json()
    assert status["active"] is False
    assert status["message"].startswith("Completed")


def test_start_requires_json(client):
    response = client.post('/api/scenario/start', data="scenario=telegraph")
    assert response.status_code == 400


def test_invalid_overrides_rejected(client):
    response = client.post('/api/scenario/start',
                           json={"scenario": "phase_check", "overrides": {"detuning_khz": 30}})
    assert response.status_code == 400
    assert "detuning_khz" in response.get_json()["message"]
    fractional = client.post('/api/scenario/start',
                             json={"scenario": "fock_decay", "overrides": {"n_trajectories": 2.5}})
    assert fractional.status_code == 400
    assert "n_trajectories" in fractional.get_json()["message"]
    assert client.post('/api/scenario/start', json={"overrides": [1, 2]}).status_code == 400
    assert client.post('/api/scenario/start', json={"scenario": "bogus"}).status_code == 400


def test_second_run_conflicts_and_stop_cancels(app, client):
    long_run = {"scenario": "fock_decay", "overrides": {"n_trajectories": 5000}}
    assert client.post('/api/scenario/start', json=long_run).status_code == 200
    assert client.post('/api/scenario/start', json={"scenario": "phase_check"}).status_code == 409
    assert client.get('/api/scenario/status').get_json()["active"] is True

    assert client.post('/api/scenario/stop').get_json()["success"] is True
    wait_for_run(app)
    status = client.get('/api/scenario/status').get_json()
    assert status["active"] is False
    assert status["message"].startswith("Cancelled")


def test_stop_without_run(client):
    assert client.post('/api/scenario/stop').get_json()["success"] is False


# --- Run listing and downloads ---

def test_runs_list_and_download(app, client):
    run = client.post('/api/scenario/start', json={"scenario": "phase_check", "seed": 3}).get_json()["run"]
    wait_for_run(app)

    runs = client.get('/api/runs/list').get_json()["runs"]
    assert runs[0]["name"] == run
    assert runs[0]["complete"] is True
    assert "phases.json" in runs[0]["files"]

    response = client.get(f'/api/runs/{run}/manifest.json')
    assert response.status_code == 200
    manifest = json.loads(response.data)
    assert manifest["seeds"]["base_seed"] == 3

    assert client.get(f'/api/runs/{run}/absent.json').status_code == 404
    assert client.get('/api/runs/no_such_run/manifest.json').status_code == 404


def test_empty_runs_list(client):
    assert client.get('/api/runs/list').get_json()["runs"] == []


# --- Physics ---

def test_phase_table_endpoint(client):
    data = client.get('/api/physics/phases').get_json()
    assert data["success"] is True
    assert data["increments_over_pi"]["1-0"] == pytest.approx(1.0, abs=0.02)
    assert data["detection_p_g"]["0"] == pytest.approx(0.91, abs=0.01)


def test_phase_table_with_overrides(client):
    slow = client.get('/api/physics/phases?velocity_m_s=200').get_json()
    assert slow["increments_over_pi"]["1-0"] > 1.0
    assert client.get('/api/physics/phases?detuning_khz=30').status_code == 400
