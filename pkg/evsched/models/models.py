from evsched import db
from datetime import datetime
import json


class SolveRun(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    instance_name = db.Column(db.String(200), nullable=True)
    status = db.Column(db.String(20), nullable=False)  # 'optimal', 'infeasible', 'time_limit', 'error'
    objective = db.Column(db.Float, nullable=True)
    bound = db.Column(db.Float, nullable=True)
    gap = db.Column(db.Float, nullable=True)
    nodes = db.Column(db.Integer, default=0)
    time_ms = db.Column(db.Integer, default=0)
    stats = db.Column(db.Text, nullable=True)  # JSON string of the full stats record
    created_at = db.Column(db.DateTime, default=datetime.utcnow)

    def __repr__(self):
        return f"SolveRun('{self.instance_name}', '{self.status}')"

    def get_stats(self):
        if self.stats:
            try:
                return json.loads(self.stats)
            except Exception:
                return {}
        return {}

    def set_stats(self, stats):
        """Store the stats record and mirror its headline numbers in columns."""
        self.stats = json.dumps(stats, sort_keys=True)
        self.status = stats.get('status', 'error')
        self.objective = stats.get('objective')
        self.bound = stats.get('bound')
        self.gap = stats.get('gap')
        self.nodes = stats.get('nodes', 0)
        self.time_ms = stats.get('time_ms', 0)

    def to_dict(self):
        return {
            'id': self.id,
            'instance': self.instance_name,
            'status': self.status,
            'objective': self.objective,
            'bound': self.bound,
            'gap': self.gap,
            'nodes': self.nodes,
            'time_ms': self.time_ms,
            'created_at': self.created_at.isoformat() if self.created_at else None,
        }
