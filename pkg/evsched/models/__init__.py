from evsched.models.instance import Battery, Charger, Instance, Operation, Vehicle
from evsched.models.schedule import (Column, DualPrices, FleetReport, VehicleSchedule, Violation, fleet_cost,
                                     fleet_cost_breakdown, reduced_cost, schedule_cost, schedule_cost_breakdown,
                                     validate_fleet)
