from flask import Blueprint

# Create blueprints for different route categories
scenario_bp = Blueprint('scenario', __name__, url_prefix='/api/scenario')
runs_bp = Blueprint('runs', __name__, url_prefix='/api/runs')
physics_bp = Blueprint('physics', __name__, url_prefix='/api/physics')

# Import routes to register them with blueprints
from app.routes.scenario import *
from app.routes.runs import *
from app.routes.physics import *
