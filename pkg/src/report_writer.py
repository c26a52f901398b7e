import csv
import json
import logging
import os
from typing import Any, Dict, List, Optional

from metrics import Series, SeriesSettings, derive_series, summarize
from models import MetricRecord
from simulation import SimulationResult

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ['time', 'kind', 'block_id', 'node_id', 'account_id', 'credits', 'sojourn']

CDF_SERIES_PREFIX = 'latency_cdf'
TOKEN_SERIES = 'token_distribution'


def format_fixed6(micros: Optional[int]) -> str:
    """Render an integer count of millionths with exactly six decimals."""
    if micros is None:
        return ''
    sign = '-' if micros < 0 else ''
    whole, fraction = divmod(abs(micros), 1_000_000)
    return f"{sign}{whole}.{fraction:06d}"


class ReportWriter:
    def __init__(self, out_dir: str) -> None:
        self.out_dir = out_dir
        self.series_dir = os.path.join(out_dir, 'series')

    def write(self, result: SimulationResult, overrides: Optional[List[str]] = None) -> Dict[str, Any]:
        os.makedirs(self.series_dir, exist_ok=True)

        events_path = self.write_events(result.log.sorted_records())
        settings = SeriesSettings(
            rate_window=result.config.metrics.rate_window,
            ma_window=result.config.metrics.ma_window,
            step=result.config.metrics.step
        )
        series = derive_series(
            result.log, result.accounts, result.scheduling_rate,
            result.end_time / 1_000_000, settings, result.observer
        )
        for name, points in series.items():
            self.write_series(name, points)

        summary = self.build_summary(result, overrides or [])
        summary_path = os.path.join(self.out_dir, 'summary.json')
        with open(summary_path, 'w', encoding='utf-8') as f:
            json.dump(summary, f, indent=2)
            f.write('\n')

        logger.info(f"Events written to {events_path}")
        logger.info(f"{len(series)} series written to {self.series_dir}")
        logger.info(f"Summary written to {summary_path}")
        return summary

    def write_events(self, records: List[MetricRecord]) -> str:
        path = os.path.join(self.out_dir, 'events.csv')
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(EVENT_COLUMNS)
            for rec in records:
                writer.writerow([
                    format_fixed6(rec.time),
                    rec.kind.value,
                    rec.block_id,
                    rec.node_id,
                    rec.account_id,
                    format_fixed6(rec.credits),
                    format_fixed6(rec.sojourn),
                ])
        return path

    def write_series(self, name: str, points: Series) -> str:
        if name.startswith(CDF_SERIES_PREFIX):
            header = ['latency', 'fraction']
        elif name == TOKEN_SERIES:
            header = ['rank', 'tokens']
        else:
            header = ['time', 'value']

        path = os.path.join(self.series_dir, f'{name}.csv')
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for x, y in points:
                writer.writerow([f"{x:.6f}", f"{y:.6f}"])
        return path

    def build_summary(self, result: SimulationResult, overrides: List[str]) -> Dict[str, Any]:
        summary = {
            'scenario': result.config.name,
            'seed': result.config.seed,
            'duration': result.config.duration,
            'scheduling_rate': result.scheduling_rate,
            'overrides': overrides,
            'config': result.config.to_dict(),
        }
        if result.config.is_multi_node:
            summary['topology'] = {
                'nodes': result.topology.n,
                'edges': sorted([u, v] for u in range(result.topology.n) for v in result.topology.neighbors(u) if u < v),
            }
            summary['final_view_sizes'] = [len(node.view) for node in result.nodes]
        summary['final_buffer_sizes'] = [len(node.buffer) for node in result.nodes]
        summary.update(summarize(result.log, result.accounts))
        return summary
