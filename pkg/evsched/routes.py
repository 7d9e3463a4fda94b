import logging

from flask import Blueprint, current_app, jsonify, request
from pydantic import ValidationError

from evsched import db
from evsched.bnp import STATUS_ERROR, solve
from evsched.config import SolverConfig
from evsched.errors import InvalidInstanceError, ScheduleError
from evsched.instgen import generate_family
from evsched.models.instance import Instance
from evsched.models.models import SolveRun
from evsched.models.schedule import validate_fleet
from evsched.models.schemas import GenerateRequest, SolveRequest, ValidateRequest
from evsched.utils.io import parse_solution

logger = logging.getLogger(__name__)

main = Blueprint('main', __name__)


def _bad_request(message):
    return jsonify({'success': False, 'error': message}), 400


def _body():
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise InvalidInstanceError('Request body must be a JSON object')
    return data


@main.route('/health', methods=['GET'])
def health():
    return jsonify({'status': 'ok'})


@main.route('/solve', methods=['POST'])
def solve_instance():
    """
    Solve an instance with branch-and-price and record the run.
    """
    try:
        req = SolveRequest.model_validate(_body())
        inst = Instance.from_model(req.instance)
        config = SolverConfig.from_mapping({**current_app.config['SOLVER_DEFAULTS'], **req.config})
    except (ValidationError, InvalidInstanceError) as e:
        return _bad_request(str(e))

    run = SolveRun(instance_name=inst.name, status=STATUS_ERROR)
    try:
        result = solve(inst, config)
        stats = result.stats.to_dict()
        run.set_stats(stats)
        db.session.add(run)
        db.session.commit()
        return jsonify({'success': True, 'run': run.id, 'solution': result.to_solution(inst), 'stats': stats})
    except Exception as e:
        logger.exception("solve request failed")
        db.session.rollback()
        return jsonify({'success': False, 'error': f'Solver error: {str(e)}'}), 500


@main.route('/validate', methods=['POST'])
def validate_solution():
    try:
        req = ValidateRequest.model_validate(_body())
        inst = Instance.from_model(req.instance)
        _, schedules = parse_solution(req.solution.model_dump(), inst)
    except (ValidationError, InvalidInstanceError) as e:
        return _bad_request(str(e))
    try:
        report = validate_fleet(schedules, inst)
        return jsonify({'success': True, **report.to_dict()})
    except ScheduleError as e:
        return _bad_request(str(e))
    except Exception as e:
        logger.exception("validate request failed")
        return jsonify({'success': False, 'error': f'Validation error: {str(e)}'}), 500


@main.route('/generate', methods=['POST'])
def generate_instance():
    try:
        req = GenerateRequest.model_validate(_body())
        inst = generate_family(req.family, req.seed, req.overrides)
    except (ValidationError, InvalidInstanceError) as e:
        return _bad_request(str(e))
    except Exception as e:
        logger.exception("generate request failed")
        return jsonify({'success': False, 'error': f'Generator error: {str(e)}'}), 500
    return jsonify({'success': True, 'instance': inst.to_dict()})


@main.route('/runs', methods=['GET'])
def list_runs():
    limit = request.args.get('limit', default=50, type=int)
    runs = SolveRun.query.order_by(SolveRun.created_at.desc(), SolveRun.id.desc()).limit(limit).all()
    return jsonify({'success': True, 'runs': [r.to_dict() for r in runs]})
