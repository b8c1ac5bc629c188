import logging
import threading
from flask import Flask

logger = logging.getLogger(__name__)


def idle_status():
    return {
        "active": False,
        "message": "Idle",
        "scenario": None,
        "done": 0,
        "total": 0,
        "output_dir": None,
    }


# Create and configure Flask app
def create_app(runs_dir=None):
    """Builds the run service.

    Args:
        runs_dir: Directory for run outputs; app.config.RUNS_DIR if None.
    """
    from app.config import FLASK_SECRET_KEY, RUNS_DIR

    app = Flask(__name__)
    app.config['SECRET_KEY'] = FLASK_SECRET_KEY
    app.config['RUNS_DIR'] = runs_dir or RUNS_DIR

    # Scenario run state
    app.runner_lock = threading.Lock()
    app.scenario_thread = None
    app.scenario_stop = threading.Event()
    app.scenario_status = idle_status()

    # Register blueprints
    from app.routes import scenario_bp, runs_bp, physics_bp

    app.register_blueprint(scenario_bp)
    app.register_blueprint(runs_bp)
    app.register_blueprint(physics_bp)

    logger.info(f"Run service created; runs are written under {app.config['RUNS_DIR']}")
    return app
