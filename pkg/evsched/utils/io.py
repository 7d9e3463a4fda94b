"""JSON artifacts on disk: instances, solutions and solve statistics.

Every read is validated against the pydantic schema before domain objects
are built, so malformed files surface as InvalidInstanceError.
"""
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import List, Tuple, Union

from pydantic import ValidationError

from evsched.errors import InvalidInstanceError
from evsched.models.instance import Instance
from evsched.models.schedule import VehicleSchedule
from evsched.models.schemas import SolutionModel, StatsModel

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_json(path: PathLike):
    try:
        with open(path, encoding='utf-8') as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise InvalidInstanceError(f"{path}: not valid JSON ({e})") from e
    except OSError as e:
        raise InvalidInstanceError(f"cannot read {path}: {e.strerror or e}") from e


def write_json(data, path: PathLike) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(data, fh, indent=2, sort_keys=False)
        fh.write('\n')
    logger.debug("wrote %s", path)


def load_instance(path: PathLike) -> Instance:
    inst = Instance.from_dict(read_json(path))
    if inst.name is None:
        inst = replace(inst, name=Path(path).stem)
    return inst


def save_instance(inst: Instance, path: PathLike) -> None:
    write_json(inst.to_dict(), path)


def parse_solution(data, inst: Instance) -> Tuple[SolutionModel, List[VehicleSchedule]]:
    try:
        model = SolutionModel.model_validate(data)
    except ValidationError as e:
        raise InvalidInstanceError(f"invalid solution: {e}") from e
    schedules = [VehicleSchedule.from_dict(s.model_dump(), inst) for s in model.schedules]
    for s in schedules:
        if len(s.energy) != inst.n_periods:
            raise InvalidInstanceError(
                f"vehicle {s.vehicle_id}: schedule covers {len(s.energy)} periods, the instance has {inst.n_periods}")
    return model, schedules


def load_solution(path: PathLike, inst: Instance) -> Tuple[SolutionModel, List[VehicleSchedule]]:
    return parse_solution(read_json(path), inst)


def save_solution(solution: dict, path: PathLike) -> None:
    write_json(solution, path)


def save_stats(stats: dict, path: PathLike) -> None:
    try:
        StatsModel.model_validate(stats)
    except ValidationError as e:
        raise InvalidInstanceError(f"invalid stats record: {e}") from e
    write_json(stats, path)
