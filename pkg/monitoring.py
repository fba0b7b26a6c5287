import logging

from config import Config


class SimulationMonitoring:
    def __init__(self, level=None):
        self.enabled = False
        self.logger = logging.getLogger('lbsaudit')
        self._counters = {}
        self.setup_basic_logging(level or Config.LOG_LEVEL)

    def setup_basic_logging(self, level):
        """Setup basic logging"""
        logging.basicConfig(
            level=logging.WARNING,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        self.set_level(level)
        self.enabled = True

    def set_level(self, level):
        if isinstance(level, str):
            level = logging.getLevelName(level.upper())
            if not isinstance(level, int):
                level = logging.WARNING
        self.logger.setLevel(level)

    def track_stage(self, stage, duration_ms, metadata=None):
        """Track one protocol or attack stage"""
        meta_str = ", ".join([f"{k}={v}" for k, v in (metadata or {}).items()])
        self.logger.info(f"Stage: {stage} - {duration_ms:.2f}ms [{meta_str}]")

    def track_error(self, stage, error_type, error_message):
        """Track a failure"""
        self.logger.error(f"Error in {stage}: {error_type} - {error_message}")
        self.track_custom_metric("simulation_error", 1, {"stage": stage, "error_type": error_type})

    def track_custom_metric(self, metric_name, value, properties=None):
        """Track custom metric"""
        try:
            from opentelemetry import metrics
            counter = self._counters.get(metric_name)
            if counter is None:
                meter = metrics.get_meter(__name__)
                counter = meter.create_counter(metric_name)
                self._counters[metric_name] = counter
            counter.add(value, properties or {})
        except ImportError:
            props_str = ", ".join([f"{k}={v}" for k, v in (properties or {}).items()])
            self.logger.debug(f"Metric: {metric_name}={value} [{props_str}]")


# Global monitoring instance
monitoring = SimulationMonitoring()
