from flask import current_app, jsonify, request
from app.routes import physics_bp
from photon_jumps.config import validate_config
from photon_jumps.detection_chain import detection_probability_g
from photon_jumps.errors import ConfigError, NumericalError
from photon_jumps.probe_physics import phase_table


@physics_bp.route('/phases', methods=['GET'])
def get_phases_api():
    """Phase table and detection probabilities; query parameters override config keys."""
    app = current_app
    overrides = request.args.to_dict()
    app.logger.info(f"API request: /api/physics/phases {overrides}")
    try:
        config = validate_config("", overrides)
        table = phase_table(config.geom, config.bath.n_max)
    except ConfigError as e:
        return jsonify({"success": False, "message": f"Invalid configuration: {e}"}), 400
    except NumericalError as e:
        app.logger.error(f"Phase computation failed: {e}")
        return jsonify({"success": False, "message": str(e)}), 500

    data = table.as_dict()
    data["detection_p_g"] = {
        str(n): detection_probability_g(n, config.detector, table) for n in range(config.bath.n_max + 1)
    }
    data["success"] = True
    return jsonify(data)
