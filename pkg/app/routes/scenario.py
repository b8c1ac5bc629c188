import os
import datetime
import threading
from flask import current_app, jsonify, request
from app.routes import scenario_bp
from photon_jumps.config import validate_config
from photon_jumps.errors import ConfigError, PhotonJumpsError, RunCancelled
from photon_jumps.scenarios import ScenarioRunner


def run_scenario(app, config):
    """Background thread function for one scenario run."""
    # Use the passed app instance instead of trying to get it from current_app
    logger = app.logger
    status = app.scenario_status
    logger.info(f"Scenario thread started: {config.scenario.value} -> {config.output_dir}")

    def progress(done, total, message):
        status["done"] = done
        status["total"] = total
        status["message"] = message

    runner = ScenarioRunner(config, lock=app.runner_lock, stop_event=app.scenario_stop, progress=progress)
    try:
        result = runner.run()
    except RunCancelled:
        logger.info("Scenario cancelled by user.")
        status["message"] = f"Cancelled after {status['done']} of {status['total']} trajectories."
    except PhotonJumpsError as e:
        logger.error(f"Scenario {config.scenario.value} failed: {e}")
        status["message"] = f"Error: {e}"
    except Exception as e:
        logger.error(f"Unexpected exception in scenario thread: {e}", exc_info=True)
        status["message"] = f"Error: {e}"
    else:
        status["message"] = f"Completed: {len(result.artifacts)} artifacts in {os.path.basename(result.output_dir)}."
    finally:
        status["active"] = False


@scenario_bp.route('/start', methods=['POST'])
def start_scenario_api():
    """API endpoint to start a scenario run in the background."""
    app = current_app
    app.logger.info("API request: /api/scenario/start")

    if app.scenario_thread and app.scenario_thread.is_alive():
        return jsonify({"success": False, "message": "A scenario run is already in progress."}), 409  # Conflict

    if not request.is_json:
        return jsonify({"success": False, "message": "Invalid request: Content-Type must be application/json"}), 400

    data = request.get_json() or {}
    scenario = data.get('scenario', 'telegraph')
    overrides = data.get('overrides') or {}
    if not isinstance(overrides, dict):
        return jsonify({"success": False, "message": "overrides must be an object of key: value pairs"}), 400

    timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S_%f")
    run_name = f"{timestamp}_{scenario}"
    settings = dict(overrides)
    settings.update({"scenario": str(scenario), "output_dir": os.path.join(app.config['RUNS_DIR'], run_name)})
    if data.get('seed') is not None:
        settings["base_seed"] = data['seed']
    try:
        config = validate_config("", settings)
    except (ConfigError, TypeError) as e:
        app.logger.error(f"Invalid scenario parameters: {data} - {e}")
        return jsonify({"success": False, "message": f"Invalid configuration: {e}"}), 400

    app.scenario_stop.clear()  # Clear stop flag
    app.scenario_status.clear()
    app.scenario_status.update({
        "active": True,
        "message": "Starting...",
        "scenario": config.scenario.value,
        "done": 0,
        "total": config.n_trajectories,
        "output_dir": run_name,
    })

    # Get a reference to the current app for the thread
    app_instance = current_app._get_current_object()

    app.scenario_thread = threading.Thread(
        target=run_scenario,
        args=(app_instance, config),
        name="ScenarioThread",
        daemon=True
    )
    app.scenario_thread.start()

    return jsonify({"success": True, "message": f"Scenario {config.scenario.value} started.", "run": run_name})


@scenario_bp.route('/stop', methods=['POST'])
def stop_scenario_api():
    """API endpoint to stop the current scenario run."""
    app = current_app
    app.logger.info("API request: /api/scenario/stop")

    if app.scenario_thread and app.scenario_thread.is_alive():
        app.scenario_stop.set()  # Signal the thread to stop
        app.logger.info("Stop signal sent to scenario thread.")
        app.scenario_status["message"] = "Stopping..."
        return jsonify({"success": True, "message": "Stop signal sent to scenario run."})
    else:
        return jsonify({"success": False, "message": "No active scenario run to stop."})


@scenario_bp.route('/status', methods=['GET'])
def get_scenario_status_api():
    """API endpoint to get the status of the scenario run."""
    app = current_app
    # Ensure status reflects thread life
    if app.scenario_status.get("active", False) and (app.scenario_thread is None or not app.scenario_thread.is_alive()):
        if not app.scenario_stop.is_set():  # Check if it wasn't manually stopped
            app.scenario_status["message"] = "Error: Scenario thread terminated unexpectedly."
        app.scenario_status["active"] = False

    return jsonify(app.scenario_status)
