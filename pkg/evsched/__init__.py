import logging

from flask import Flask
from flask_sqlalchemy import SQLAlchemy

from evsched.config import SolverConfig, database_url, default_time_limit, log_level

db = SQLAlchemy()

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def configure_logging(level=None):
	"""Configure the root logger once; EVCS_LOG sets the level."""
	level = (level or log_level()).upper()
	root = logging.getLogger()
	if not root.handlers:
		logging.basicConfig(level=level, format=LOG_FORMAT)
	root.setLevel(level)
	return root


def create_app(config=None):
	configure_logging()
	app = Flask(__name__)
	app.config['SQLALCHEMY_DATABASE_URI'] = database_url()
	app.config['SQLALCHEMY_TRACK_MODIFICATIONS'] = False
	app.config['SOLVER_DEFAULTS'] = SolverConfig(time_limit=default_time_limit()).to_dict()
	if config:
		app.config.update(config)

	db.init_app(app)

	# Ensure models are imported and tables are created on startup
	with app.app_context():
		from evsched.models import models
		db.create_all()

	from evsched.routes import main
	app.register_blueprint(main)

	return app
