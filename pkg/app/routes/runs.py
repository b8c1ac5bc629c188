import os
from flask import current_app, jsonify, send_from_directory, abort
from app.routes import runs_bp


@runs_bp.route('/list', methods=['GET'])
def list_runs_api():
    """API endpoint to list finished and running run folders."""
    app = current_app
    app.logger.debug("API request: /api/runs/list")
    runs_dir = app.config['RUNS_DIR']
    try:
        if not os.path.isdir(runs_dir):
            app.logger.warning(f"Runs directory does not exist: {runs_dir}")
            return jsonify({"runs": [], "message": "Runs directory not found."})

        folders = [d for d in os.listdir(runs_dir) if os.path.isdir(os.path.join(runs_dir, d))]
        # Sort folders, newest first
        folders.sort(reverse=True)
        runs = []
        for name in folders:
            files = sorted(f for f in os.listdir(os.path.join(runs_dir, name)) if not f.startswith('.'))
            runs.append({"name": name, "files": files, "complete": "manifest.json" in files})
        return jsonify({"runs": runs})
    except Exception as e:
        app.logger.error(f"Error listing run directories: {e}", exc_info=True)
        return jsonify({"error": "Failed to list run directories."}), 500


@runs_bp.route('/<run>/<path:filename>', methods=['GET'])
def download_artifact_api(run, filename):
    """Serves one artifact file of a run."""
    app = current_app
    app.logger.debug(f"API request: /api/runs/{run}/{filename}")
    run_dir = os.path.join(app.config['RUNS_DIR'], run)
    if os.sep in run or run.startswith('.') or not os.path.isdir(run_dir):
        abort(404)
    # send_from_directory rejects paths escaping run_dir
    return send_from_directory(os.path.abspath(run_dir), filename, as_attachment=True)
