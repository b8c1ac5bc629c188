import os

# Base directory of the application
BASE_DIR = os.path.abspath(os.path.dirname(os.path.dirname(__file__)))

# Directory holding one sub-directory per service run
RUNS_DIR = os.path.join(BASE_DIR, 'runs')

# Ensure directories exist
os.makedirs(RUNS_DIR, exist_ok=True)

# Flask configuration
FLASK_SECRET_KEY = os.urandom(24)
FLASK_HOST = '0.0.0.0'
FLASK_PORT = 5000
FLASK_DEBUG = False
